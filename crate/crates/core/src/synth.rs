//! Synthetic articulated motion: ground-truth sequences of walking stick
//! figures on the default topology, plus corrupted "detections" derived from
//! them.
//!
//! Figures are built by forward kinematics from the neck, so limb lengths are
//! constant per person. Track ids equal person indices.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, TmlError};
use crate::pose::{FramePoses, JointCandidate, Pose, Sequence, Vec2};
use crate::skeleton::{default_topology, joints::*};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MotionPreset {
    Static,
    /// Pairs of people walk towards each other on nearly the same line and
    /// pass mid-sequence.
    #[default]
    Crossing,
    Wander,
    /// Wander, with one person removed from the detections at the middle
    /// frame.
    OcclusionMiddle,
    /// Like crossing, but the two lanes are offset by about half a body
    /// height so that legs of one person sweep over arms of the other.
    Passing,
}

impl FromStr for MotionPreset {
    type Err = TmlError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "static" => MotionPreset::Static,
            "crossing" => MotionPreset::Crossing,
            "wander" => MotionPreset::Wander,
            "occlusion-middle" => MotionPreset::OcclusionMiddle,
            "passing" => MotionPreset::Passing,
            _ => return Err(TmlError::Config(format!("unknown motion preset `{s}`"))),
        })
    }
}

impl fmt::Display for MotionPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MotionPreset::Static => "static",
            MotionPreset::Crossing => "crossing",
            MotionPreset::Wander => "wander",
            MotionPreset::OcclusionMiddle => "occlusion-middle",
            MotionPreset::Passing => "passing",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub people: usize,
    pub frames: usize,
    pub image_size: (u32, u32),
    pub motion: MotionPreset,
    /// Pixels per frame.
    pub speed: f64,
    pub jitter_sigma: f64,
    pub dropout_prob: f64,
    pub seed: u64,
    /// Nominal figure height in pixels; each person is scaled by 0.92–1.08.
    pub person_height: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            people: 2,
            frames: 10,
            image_size: (256, 192),
            motion: MotionPreset::Crossing,
            speed: 10.0,
            jitter_sigma: 0.0,
            dropout_prob: 0.0,
            seed: 0,
            person_height: 64.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.people < 1 || self.frames < 1 {
            return Err(TmlError::Config("people and frames must be >= 1".into()));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(TmlError::Config("image size must be non-zero".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(TmlError::Config("dropout_prob must be in [0, 1]".into()));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(TmlError::Config("jitter_sigma must be >= 0".into()));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(TmlError::Config("speed must be >= 0".into()));
        }
        if !(self.person_height > 0.0 && self.person_height.is_finite()) {
            return Err(TmlError::Config("person_height must be > 0".into()));
        }
        Ok(())
    }
}

/// A person hidden from the detector at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occlusion {
    /// Position of the frame in the sequence.
    pub frame: usize,
    pub track_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub ground_truth: Sequence,
    pub occlusion: Option<Occlusion>,
}

fn polar(len: f64, deg: f64) -> Vec2 {
    let r = deg.to_radians();
    Vec2::new(len * r.cos(), len * r.sin())
}

/// Joint positions of a figure of height `h` with its neck at `neck`.
/// `swing` in [-1, 1] drives the arm and leg swing; angles are in image
/// coordinates (y down).
pub fn figure(neck: Vec2, h: f64, swing: f64) -> [Vec2; 15] {
    let mut p = [Vec2::zeros(); 15];
    p[HEAD_BOTTOM] = neck;
    p[NOSE] = neck + polar(0.09 * h, -90.0);
    p[HEAD_TOP] = p[NOSE] + polar(0.09 * h, -90.0);
    p[RIGHT_SHOULDER] = neck + polar(0.11 * h, 170.0);
    p[LEFT_SHOULDER] = neck + polar(0.11 * h, 10.0);
    p[RIGHT_ELBOW] = p[RIGHT_SHOULDER] + polar(0.16 * h, 95.0 + 20.0 * swing);
    p[RIGHT_WRIST] = p[RIGHT_ELBOW] + polar(0.15 * h, 90.0 + 30.0 * swing);
    p[LEFT_ELBOW] = p[LEFT_SHOULDER] + polar(0.16 * h, 85.0 - 20.0 * swing);
    p[LEFT_WRIST] = p[LEFT_ELBOW] + polar(0.15 * h, 90.0 - 30.0 * swing);
    p[RIGHT_HIP] = p[RIGHT_SHOULDER] + polar(0.30 * h, 81.0);
    p[LEFT_HIP] = p[LEFT_SHOULDER] + polar(0.30 * h, 99.0);
    p[RIGHT_KNEE] = p[RIGHT_HIP] + polar(0.24 * h, 90.0 - 25.0 * swing);
    p[RIGHT_ANKLE] = p[RIGHT_KNEE] + polar(0.23 * h, 90.0 - 35.0 * swing);
    p[LEFT_KNEE] = p[LEFT_HIP] + polar(0.24 * h, 90.0 + 25.0 * swing);
    p[LEFT_ANKLE] = p[LEFT_KNEE] + polar(0.23 * h, 90.0 + 35.0 * swing);
    p
}

// Figure extent around the neck, in units of height.
const EXTENT_ABOVE: f64 = 0.2;
const EXTENT_BELOW: f64 = 0.82;
const EXTENT_HALF_WIDTH: f64 = 0.4;
// Walking cadence, radians of swing phase per frame while moving.
const CADENCE: f64 = 0.4;

struct Person {
    height: f64,
    phase: f64,
    /// Neck position at sequence position `t`.
    path: Box<dyn Fn(f64) -> Vec2>,
    moving: bool,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn plan_cells(cfg: &SceneConfig, rng: &mut ChaCha8Rng, speed: f64) -> Result<Vec<Person>> {
    let (w, h) = (cfg.image_size.0 as f64, cfg.image_size.1 as f64);
    let tall = cfg.person_height * 1.08;
    let cell_w_min = 2.0 * EXTENT_HALF_WIDTH * tall + 4.0;
    let cell_h_min = (EXTENT_ABOVE + EXTENT_BELOW) * tall + 4.0;
    let max_cols = (w / cell_w_min).floor() as usize;
    let cols = cfg.people.min(max_cols);
    if cols == 0 {
        return Err(TmlError::InfeasibleLayout(format!(
            "a {:.0}px figure does not fit in {}x{}",
            cfg.person_height, cfg.image_size.0, cfg.image_size.1
        )));
    }
    let rows = cfg.people.div_ceil(cols);
    let (cell_w, cell_h) = (w / cols as f64, h / rows as f64);
    if cell_h < cell_h_min {
        return Err(TmlError::InfeasibleLayout(format!(
            "{} people need {rows} rows of {cell_h_min:.0}px, image is {h:.0}px high",
            cfg.people
        )));
    }
    let mut people = Vec::with_capacity(cfg.people);
    for p in 0..cfg.people {
        let height = cfg.person_height * rng.random_range(0.92..1.08);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let (col, row) = (p % cols, p / cols);
        let center = Vec2::new(
            (col as f64 + 0.5) * cell_w,
            (row as f64 + 0.5) * cell_h + (EXTENT_ABOVE - 0.5 * (EXTENT_ABOVE + EXTENT_BELOW)) * height,
        );
        let slack = Vec2::new(
            ((cell_w - 2.0 * EXTENT_HALF_WIDTH * height) / 2.0 - 1.0).max(0.0),
            ((cell_h - (EXTENT_ABOVE + EXTENT_BELOW) * height) / 2.0 - 1.0).max(0.0),
        );
        let (px, py) = (rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(0.0..std::f64::consts::TAU));
        // Lissajous path inside the cell; angular rates give roughly `speed`
        // px/frame at the centre of the cell.
        let wx = if slack.x > 0.0 { (speed / slack.x).min(0.5) } else { 0.0 };
        let wy = if slack.y > 0.0 { (0.5 * speed / slack.y).min(0.5) } else { 0.0 };
        let moving = speed > 0.0;
        people.push(Person {
            height,
            phase,
            moving,
            path: Box::new(move |t| {
                center + Vec2::new(slack.x * (wx * t + px).sin(), slack.y * (wy * t + py).sin())
            }),
        });
    }
    Ok(people)
}

fn plan_lanes(cfg: &SceneConfig, rng: &mut ChaCha8Rng, lane_offset: f64) -> Result<Vec<Person>> {
    let (w, h) = (cfg.image_size.0 as f64, cfg.image_size.1 as f64);
    let lanes = cfg.people.div_ceil(2);
    let lane_h = h / lanes as f64;
    let tall = cfg.person_height * 1.08;
    let needed = (EXTENT_ABOVE + EXTENT_BELOW) * tall + lane_offset * tall + 2.0;
    if lane_h < needed {
        return Err(TmlError::InfeasibleLayout(format!(
            "{} people need {lanes} lanes of {needed:.0}px, image is {h:.0}px high",
            cfg.people
        )));
    }
    let mid = (cfg.frames as f64 - 1.0) / 2.0;
    let mut people = Vec::with_capacity(cfg.people);
    for lane in 0..lanes {
        let members = if 2 * lane + 1 < cfg.people { 2 } else { 1 };
        let mut heights: Vec<f64> = (0..members)
            .map(|_| cfg.person_height * rng.random_range(0.92..1.08))
            .collect();
        // the lower lane gets the taller figure so joints stay apart
        heights.sort_by(f64::total_cmp);
        let tc = mid + rng.random_range(-0.2..0.2);
        let meet_x = w / 2.0 + rng.random_range(-0.05..0.05) * w;
        let top = lane as f64 * lane_h + 1.0 + EXTENT_ABOVE * tall;
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        for (k, &height) in heights.iter().enumerate() {
            let dir = if k == 0 { 1.0 } else { -1.0 };
            let y = top + k as f64 * lane_offset * tall;
            let speed = cfg.speed;
            people.push(Person {
                height,
                phase: phase + k as f64 * std::f64::consts::PI,
                moving: speed > 0.0,
                path: Box::new(move |t| Vec2::new(meet_x + dir * speed * (t - tc), y)),
            });
        }
    }
    Ok(people)
}

/// Generates a ground-truth sequence. Deterministic in `cfg.seed`.
pub fn generate_sequence(cfg: &SceneConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, 0);
    let people = match cfg.motion {
        MotionPreset::Static => plan_cells(cfg, &mut rng, 0.0)?,
        MotionPreset::Wander | MotionPreset::OcclusionMiddle => plan_cells(cfg, &mut rng, cfg.speed)?,
        MotionPreset::Crossing => plan_lanes(cfg, &mut rng, 0.12)?,
        MotionPreset::Passing => plan_lanes(cfg, &mut rng, 0.45)?,
    };

    let topology = Arc::new(default_topology());
    let mut seq = Sequence::new(topology);
    for t in 0..cfg.frames {
        let mut frame = FramePoses::new(t as u64, cfg.image_size);
        for (id, person) in people.iter().enumerate() {
            let neck = (person.path)(t as f64);
            let swing = if person.moving {
                (person.phase + CADENCE * t as f64).sin()
            } else {
                person.phase.sin()
            };
            let pts = figure(neck, person.height, swing);
            if let Some(p) = pts.iter().find(|p| !frame.in_bounds(**p)) {
                return Err(TmlError::InfeasibleLayout(format!(
                    "person {id} leaves the image at frame {t} ({:.1}, {:.1}); lower speed or frames",
                    p.x, p.y
                )));
            }
            frame.poses.push(Pose::from_points(&pts).with_track_id(id as u64));
        }
        seq.frames.push(frame);
    }

    let occlusion = (cfg.motion == MotionPreset::OcclusionMiddle).then(|| Occlusion {
        frame: cfg.frames / 2,
        track_id: rng.random_range(0..cfg.people) as u64,
    });
    Ok(SyntheticScene {
        ground_truth: seq,
        occlusion,
    })
}

/// Candidate detections: jittered joints, per-pose dropout, the occluded
/// person removed, ids stripped. Confidence is `exp(-r²/32)` for a joint
/// displaced by `r` pixels. Deterministic in `cfg.seed`.
pub fn apply_corruption(scene: &SyntheticScene, cfg: &SceneConfig) -> Sequence {
    let mut rng = rng_for(cfg.seed, 1);
    let noise = (cfg.jitter_sigma > 0.0).then(|| Normal::new(0.0, cfg.jitter_sigma).unwrap());
    let mut out = Sequence::new(scene.ground_truth.topology.clone());
    for (t, frame) in scene.ground_truth.frames.iter().enumerate() {
        let (w, h) = (frame.image_size.0 as f64, frame.image_size.1 as f64);
        let mut kept = FramePoses::new(frame.frame_index, frame.image_size);
        for pose in &frame.poses {
            let dropped = rng.random::<f64>() < cfg.dropout_prob;
            let occluded = scene
                .occlusion
                .is_some_and(|o| o.frame == t && pose.track_id == Some(o.track_id));
            if dropped || occluded {
                continue;
            }
            let mut p = Pose::empty(pose.joints.len());
            for (slot, joint) in p.joints.iter_mut().zip(&pose.joints) {
                let Some(j) = joint else { continue };
                let (dx, dy) = match &noise {
                    Some(n) => (n.sample(&mut rng), n.sample(&mut rng)),
                    None => (0.0, 0.0),
                };
                let x = (j.x + dx).clamp(0.0, w - 1e-6);
                let y = (j.y + dy).clamp(0.0, h - 1e-6);
                let r2 = (x - j.x).powi(2) + (y - j.y).powi(2);
                *slot = Some(JointCandidate {
                    x,
                    y,
                    confidence: (-r2 / 32.0).exp(),
                    visible: j.visible,
                });
            }
            kept.poses.push(p);
        }
        out.frames.push(kept);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(motion: MotionPreset) -> SceneConfig {
        SceneConfig {
            motion,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn static_frames_identical() {
        let mut c = cfg(MotionPreset::Static);
        c.people = 4;
        let s = generate_sequence(&c).unwrap().ground_truth;
        assert_eq!(s.frames.len(), 10);
        for f in &s.frames[1..] {
            assert_eq!(f.poses, s.frames[0].poses);
        }
    }

    #[test]
    fn crossing_min_distance_is_interior() {
        for seed in 0..20 {
            let c = SceneConfig { seed, ..cfg(MotionPreset::Crossing) };
            let s = generate_sequence(&c).unwrap().ground_truth;
            let torso = |p: &Pose| {
                [RIGHT_SHOULDER, LEFT_SHOULDER, RIGHT_HIP, LEFT_HIP]
                    .iter()
                    .map(|&j| p.position(j).unwrap())
                    .sum::<Vec2>()
                    / 4.0
            };
            let d: Vec<f64> = s
                .frames
                .iter()
                .map(|f| (torso(&f.poses[0]) - torso(&f.poses[1])).norm())
                .collect();
            let argmin = (0..d.len()).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
            assert!(argmin > 0 && argmin < d.len() - 1, "seed {seed}: {d:?}");
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let c = cfg(MotionPreset::Wander);
        assert_eq!(generate_sequence(&c).unwrap(), generate_sequence(&c).unwrap());
        let other = SceneConfig { seed: 4, ..c.clone() };
        assert_ne!(generate_sequence(&c).unwrap(), generate_sequence(&other).unwrap());
        let noisy = SceneConfig { jitter_sigma: 2.0, dropout_prob: 0.2, ..c };
        let scene = generate_sequence(&noisy).unwrap();
        assert_eq!(apply_corruption(&scene, &noisy), apply_corruption(&scene, &noisy));
    }

    #[test]
    fn limb_lengths_are_constant() {
        for motion in [MotionPreset::Crossing, MotionPreset::Wander, MotionPreset::Passing] {
            let s = generate_sequence(&cfg(motion)).unwrap().ground_truth;
            let topo = default_topology();
            for p in 0..2 {
                for &(a, b) in &topo.limbs {
                    let len0 = (s.frames[0].poses[p].position(a).unwrap() - s.frames[0].poses[p].position(b).unwrap()).norm();
                    for f in &s.frames {
                        let len = (f.poses[p].position(a).unwrap() - f.poses[p].position(b).unwrap()).norm();
                        assert!((len - len0).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn corruption_cases() {
        let c = cfg(MotionPreset::Wander);
        let scene = generate_sequence(&c).unwrap();
        let clean = apply_corruption(&scene, &c);
        assert_eq!(clean, scene.ground_truth.without_ids());

        let gone = apply_corruption(&scene, &SceneConfig { dropout_prob: 1.0, ..c.clone() });
        assert!(gone.frames.iter().all(|f| f.poses.is_empty()));

        let oc = SceneConfig { people: 3, ..cfg(MotionPreset::OcclusionMiddle) };
        let scene = generate_sequence(&oc).unwrap();
        let occ = scene.occlusion.unwrap();
        assert_eq!(occ.frame, 5);
        let cand = apply_corruption(&scene, &oc);
        for (t, f) in cand.frames.iter().enumerate() {
            assert_eq!(f.poses.len(), if t == occ.frame { 2 } else { 3 });
        }
    }

    #[test]
    fn jitter_lowers_confidence() {
        let c = SceneConfig { jitter_sigma: 3.0, ..cfg(MotionPreset::Wander) };
        let scene = generate_sequence(&c).unwrap();
        let cand = apply_corruption(&scene, &c);
        for (f, g) in cand.frames.iter().zip(&scene.ground_truth.frames) {
            for (p, q) in f.poses.iter().zip(&g.poses) {
                for j in 0..15 {
                    let a = p.joints[j].unwrap();
                    let r = (a.pos() - q.position(j).unwrap()).norm();
                    assert!((a.confidence - (-r * r / 32.0).exp()).abs() < 1e-12);
                    assert!(f.in_bounds(a.pos()));
                }
            }
        }
    }

    #[test]
    fn infeasible_layouts_error() {
        let c = SceneConfig { people: 40, ..cfg(MotionPreset::Static) };
        assert!(matches!(generate_sequence(&c), Err(TmlError::InfeasibleLayout(_))));
        let c = SceneConfig { speed: 40.0, frames: 30, ..cfg(MotionPreset::Crossing) };
        assert!(matches!(generate_sequence(&c), Err(TmlError::InfeasibleLayout(_))));
    }
}
