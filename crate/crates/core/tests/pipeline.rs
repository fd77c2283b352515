use std::sync::Arc;

use proptest::prelude::*;

use tml_core::encode::{encode_tml, ChannelLayout, EncoderConfig};
use tml_core::io::{read_annotations, read_flowmap, write_annotations, write_flowmap};
use tml_core::metrics::{mota, DEFAULT_PCKH_FACTOR};
use tml_core::pose::{FramePoses, Pose, Vec2};
use tml_core::sampler::{paired_transform, PairTransform};
use tml_core::skeleton::default_topology;
use tml_core::synth::{apply_corruption, figure, generate_sequence, MotionPreset, SceneConfig};
use tml_core::tracker::{track_sequence, GroundTruthFlow, TrackerConfig};

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sc = SceneConfig { motion: MotionPreset::Wander, people: 3, jitter_sigma: 1.5, seed: 4, ..SceneConfig::default() };
    let scene = generate_sequence(&sc).unwrap();
    let noisy = apply_corruption(&scene, &sc);
    let path = dir.path().join("s.json");
    write_annotations(&noisy, &path).unwrap();
    assert_eq!(read_annotations(&path).unwrap(), noisy);

    let gt = &scene.ground_truth;
    let pairing: Vec<_> = (0..3).map(|i| (i, i)).collect();
    let grid = encode_tml(&gt.frames[3], &gt.frames[2], &pairing, &gt.topology, &EncoderConfig::default()).unwrap();
    let fpath = dir.path().join("g.tmlf");
    write_flowmap(&grid, &fpath).unwrap();
    let back = read_flowmap(&fpath).unwrap();
    assert_eq!(back.layout(), ChannelLayout::Individual);
    // unit vectors lose precision through f32 only
    for (a, b) in back.planes().iter().zip(grid.planes()) {
        assert!((a - b).abs() < 1e-7);
    }
}

#[test]
fn every_preset_closes_the_pipeline() {
    for motion in [MotionPreset::Static, MotionPreset::Crossing, MotionPreset::Wander, MotionPreset::Passing] {
        for seed in 0..5 {
            let sc = SceneConfig { motion, seed, ..SceneConfig::default() };
            let scene = generate_sequence(&sc).unwrap();
            let input = apply_corruption(&scene, &sc);
            let out = track_sequence(&input, &GroundTruthFlow::new(&scene.ground_truth), &TrackerConfig::default()).unwrap();
            let m = mota(&scene.ground_truth, &out.sequence, DEFAULT_PCKH_FACTOR);
            assert_eq!(m.total_mota(), Some(100.0), "{motion} seed {seed}");
        }
    }
}

proptest! {
    // translating both frames translates the flow map by the same offset
    #[test]
    fn translation_equivariance(dx in -20i32..20, dy in -20i32..20, step_x in -6.0..6.0f64, step_y in -6.0..6.0f64) {
        let topo = Arc::new(default_topology());
        let size = (200u32, 200u32);
        let pts = figure(Vec2::new(100.0, 60.0), 70.0, 0.3);
        let earlier = FramePoses { frame_index: 0, poses: vec![Pose::from_points(&pts)], image_size: size };
        let step = Vec2::new(step_x, step_y);
        let later = FramePoses { frame_index: 1, poses: vec![Pose::from_points(&pts.map(|p| p + step))], image_size: size };
        let tf = PairTransform { crop_origin: [dx as f64, dy as f64], ..PairTransform::identity() };
        let (l2, e2) = paired_transform((&later, &earlier), &tf, size);
        let cfg = EncoderConfig::default();
        let g = encode_tml(&later, &earlier, &[(0, 0)], &topo, &cfg).unwrap();
        let h = encode_tml(&l2, &e2, &[(0, 0)], &topo, &cfg).unwrap();
        for cy in 30..170usize {
            for cx in 30..170usize {
                let (sx, sy) = ((cx as i32 - dx) as usize, (cy as i32 - dy) as usize);
                for c in 0..topo.limb_count() {
                    prop_assert!((h.vector(c, sx, sy) - g.vector(c, cx, cy)).norm() < 1e-9);
                }
            }
        }
    }
}
