//! Track-id assignment over a sequence.
//!
//! Frames are processed in order. At each frame the active tracks (last
//! seen one or two frames ago) are scored against the frame's poses with
//! the flow map spanning the gap, and linked by optimal assignment. A track
//! that misses one frame is kept for one more; if it reappears, the gap
//! frame can be filled with the mean of its two neighbouring poses.

use std::collections::BTreeMap;

use crate::assignment::hungarian;
use crate::encode::{encode_jointflow, encode_tml, ChannelLayout, EncoderConfig, FlowMapGrid};
use crate::error::{Result, TmlError};
use crate::pose::{FramePoses, JointCandidate, Pose, Sequence};
use crate::scoring::{pair_score, AssociationMatrix, ScoreConfig};
use crate::skeleton::SkeletonTopology;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Links scoring below this are never made.
    pub score_threshold: f64,
    pub nms: bool,
    pub nms_radius: f64,
    pub refine: bool,
    pub score: ScoreConfig,
    pub encoder: EncoderConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            score_threshold: 0.1,
            nms: true,
            nms_radius: 5.0,
            refine: true,
            score: ScoreConfig::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.score_threshold.is_finite() {
            return Err(TmlError::Config("score_threshold must be finite".into()));
        }
        if !(self.nms_radius >= 0.0 && self.nms_radius.is_finite()) {
            return Err(TmlError::Config("nms_radius must be >= 0".into()));
        }
        self.score.validate()?;
        self.encoder.validate()
    }
}

/// Supplies the flow map between two frames of the sequence being tracked,
/// addressed by position. Stands in for the temporal network.
pub trait FlowSource {
    fn flow(&self, later: usize, earlier: usize, encoder: &EncoderConfig) -> Result<FlowMapGrid>;
}

/// Map family encoded by [`GroundTruthFlow`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlowKind {
    #[default]
    Limbs,
    Joints,
}

/// Encodes flow from an annotated sequence, pairing people by track id.
pub struct GroundTruthFlow<'a> {
    pub truth: &'a Sequence,
    pub kind: FlowKind,
}

impl<'a> GroundTruthFlow<'a> {
    pub fn new(truth: &'a Sequence) -> Self {
        GroundTruthFlow {
            truth,
            kind: FlowKind::Limbs,
        }
    }
}

/// `(later, earlier)` pose pairs sharing a track id.
pub fn pairing_by_id(later: &FramePoses, earlier: &FramePoses) -> Vec<(usize, usize)> {
    later
        .poses
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let id = p.track_id?;
            let j = earlier.poses.iter().position(|q| q.track_id == Some(id))?;
            Some((i, j))
        })
        .collect()
}

impl FlowSource for GroundTruthFlow<'_> {
    fn flow(&self, later: usize, earlier: usize, encoder: &EncoderConfig) -> Result<FlowMapGrid> {
        let frames = &self.truth.frames;
        let (Some(a), Some(b)) = (frames.get(later), frames.get(earlier)) else {
            return Err(TmlError::InvalidSequence(format!(
                "flow requested for frames ({later}, {earlier}) of a {}-frame sequence",
                frames.len()
            )));
        };
        let pairing = pairing_by_id(a, b);
        match self.kind {
            FlowKind::Limbs => encode_tml(a, b, &pairing, &self.truth.topology, encoder),
            FlowKind::Joints => encode_jointflow(a, b, &pairing, &self.truth.topology, encoder),
        }
    }
}

/// Empty flow, for distance-only association.
pub struct NoFlow;

impl FlowSource for NoFlow {
    fn flow(&self, _: usize, _: usize, encoder: &EncoderConfig) -> Result<FlowMapGrid> {
        Ok(FlowMapGrid::zeros(0, 0, encoder.layout, 0))
    }
}

fn nms_order(cands: &[JointCandidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (&cands[a], &cands[b]);
        q.confidence
            .total_cmp(&p.confidence)
            .then(p.x.total_cmp(&q.x))
            .then(p.y.total_cmp(&q.y))
    });
    order
}

fn nms_keep(cands: &[JointCandidate], radius: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for i in nms_order(cands) {
        if kept
            .iter()
            .all(|&k| (cands[k].pos() - cands[i].pos()).norm() > radius)
        {
            kept.push(i);
        }
    }
    kept
}

/// Greedy non-maximum suppression over candidates of one joint type:
/// keep the most confident, drop everything within `radius` of it, repeat.
/// Ties are broken by (confidence desc, x asc, y asc).
pub fn nms_joints(candidates: &[JointCandidate], radius: f64) -> Vec<JointCandidate> {
    nms_keep(candidates, radius)
        .into_iter()
        .map(|i| candidates[i])
        .collect()
}

/// Runs NMS per joint type across all poses of a frame; suppressed joints
/// are removed from their poses, and poses left with no joint are dropped.
pub fn suppress_frame_joints(frame: &mut FramePoses, radius: f64) {
    let joint_count = frame.poses.iter().map(|p| p.joints.len()).max().unwrap_or(0);
    for j in 0..joint_count {
        let owners: Vec<usize> = (0..frame.poses.len())
            .filter(|&p| frame.poses[p].joints.get(j).is_some_and(Option::is_some))
            .collect();
        let cands: Vec<JointCandidate> = owners
            .iter()
            .map(|&p| frame.poses[p].joints[j].unwrap())
            .collect();
        let keep = nms_keep(&cands, radius);
        for (k, &p) in owners.iter().enumerate() {
            if !keep.contains(&k) {
                frame.poses[p].joints[j] = None;
            }
        }
    }
    frame.poses.retain(|p| p.present_count() > 0);
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveTrack {
    pub track_id: u64,
    pub pose: Pose,
    /// Sequence position of the frame the pose came from.
    pub position: usize,
    pub frame_index: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackState {
    pub next_id: u64,
    pub active: Vec<ActiveTrack>,
}

impl TrackState {
    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }
}

/// Flow maps into the current frame, keyed by the earlier frame position.
pub type GridsByOrigin = BTreeMap<usize, FlowMapGrid>;

/// Labels `frame` (at sequence position `position`) by linking it to the
/// active tracks. `grids` must hold the flow from every active track's
/// frame to this one.
pub fn match_frames(
    state: &mut TrackState,
    frame: &FramePoses,
    position: usize,
    grids: &GridsByOrigin,
    topo: &SkeletonTopology,
    cfg: &TrackerConfig,
) -> FramePoses {
    let empty = FlowMapGrid::zeros(0, 0, ChannelLayout::Individual, 0);
    let scores = AssociationMatrix::from_fn(state.active.len(), frame.poses.len(), |r, c| {
        let track = &state.active[r];
        let grid = grids.get(&track.position).unwrap_or(&empty);
        pair_score(&frame.poses[c], &track.pose, grid, topo, &cfg.score)
            .filter(|&s| s >= cfg.score_threshold)
    });
    let links = hungarian(&scores);

    let mut labeled = frame.clone();
    let mut matched_track = vec![false; state.active.len()];
    for &(r, c) in &links {
        matched_track[r] = true;
        let track = &mut state.active[r];
        labeled.poses[c].track_id = Some(track.track_id);
        track.pose = labeled.poses[c].clone();
        track.position = position;
        track.frame_index = frame.frame_index;
    }
    for c in 0..labeled.poses.len() {
        if links.iter().any(|l| l.1 == c) {
            continue;
        }
        let id = state.fresh_id();
        labeled.poses[c].track_id = Some(id);
        state.active.push(ActiveTrack {
            track_id: id,
            pose: labeled.poses[c].clone(),
            position,
            frame_index: frame.frame_index,
        });
    }
    // a track may miss one frame; after that it retires for good
    state.active.retain(|t| t.position + 1 >= position);
    labeled
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementEntry {
    pub frame_index: u64,
    pub track_id: u64,
    pub source: String,
}

pub const REFINEMENT_SOURCE: &str = "stride2-average";

/// Joint-wise mean of two poses over joints present in both.
pub fn average_pose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        joints: a
            .joints
            .iter()
            .zip(&b.joints)
            .map(|(x, y)| match (x, y) {
                (Some(x), Some(y)) => Some(JointCandidate {
                    x: 0.5 * (x.x + y.x),
                    y: 0.5 * (x.y + y.y),
                    confidence: 0.5 * (x.confidence + y.confidence),
                    visible: x.visible && y.visible,
                }),
                _ => None,
            })
            .collect(),
        track_id: a.track_id,
    }
}

/// Fills `mid` with the mean pose of every track present in `prev` and
/// `next` but missing from `mid`, provided the stride-2 association between
/// its two poses clears the threshold. Existing poses are never touched.
pub fn refine_middle_frame(
    prev: &FramePoses,
    mid: &FramePoses,
    next: &FramePoses,
    grid_stride2: &FlowMapGrid,
    topo: &SkeletonTopology,
    cfg: &TrackerConfig,
) -> (FramePoses, Vec<RefinementEntry>) {
    let mut out = mid.clone();
    let mut log = Vec::new();
    for before in &prev.poses {
        let Some(id) = before.track_id else { continue };
        if mid.pose_with_id(id).is_some() {
            continue;
        }
        let Some(after) = next.pose_with_id(id) else {
            continue;
        };
        let linked = pair_score(after, before, grid_stride2, topo, &cfg.score)
            .is_some_and(|s| s >= cfg.score_threshold);
        if linked {
            out.poses.push(average_pose(before, after));
            log.push(RefinementEntry {
                frame_index: mid.frame_index,
                track_id: id,
                source: REFINEMENT_SOURCE.to_string(),
            });
        }
    }
    (out, log)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedSequence {
    pub sequence: Sequence,
    pub refinement_log: Vec<RefinementEntry>,
}

/// Tracks a sequence of candidate poses. Any track ids on the input are
/// ignored. Deterministic given the inputs.
pub fn track_sequence(
    seq: &Sequence,
    flow: &dyn FlowSource,
    cfg: &TrackerConfig,
) -> Result<TrackedSequence> {
    cfg.validate()?;
    let topo = seq.topology.as_ref();
    let uses_flow = cfg.score.alpha > 0.0;
    let fetch = |later: usize, earlier: usize| -> Result<FlowMapGrid> {
        if uses_flow {
            flow.flow(later, earlier, &cfg.encoder)
        } else {
            NoFlow.flow(later, earlier, &cfg.encoder)
        }
    };

    let mut state = TrackState::default();
    let mut out = Sequence::new(seq.topology.clone());
    let mut log = Vec::new();
    for (t, input) in seq.frames.iter().enumerate() {
        let mut frame = input.clone();
        for p in &mut frame.poses {
            p.track_id = None;
        }
        if cfg.nms {
            suppress_frame_joints(&mut frame, cfg.nms_radius);
        }

        let mut grids = GridsByOrigin::new();
        for track in &state.active {
            if let std::collections::btree_map::Entry::Vacant(e) = grids.entry(track.position) {
                e.insert(fetch(t, track.position)?);
            }
        }
        let labeled = match_frames(&mut state, &frame, t, &grids, topo, cfg);
        out.frames.push(labeled);

        if cfg.refine && t >= 2 {
            let grid2 = match grids.remove(&(t - 2)) {
                Some(g) => g,
                None => fetch(t, t - 2)?,
            };
            let (refined, entries) =
                refine_middle_frame(&out.frames[t - 2], &out.frames[t - 1], &out.frames[t], &grid2, topo, cfg);
            out.frames[t - 1] = refined;
            log.extend(entries);
        }
    }
    Ok(TrackedSequence {
        sequence: out,
        refinement_log: log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Vec2;
    use crate::skeleton::default_topology;
    use crate::synth::{apply_corruption, figure, generate_sequence, MotionPreset, SceneConfig};
    use std::sync::Arc;

    fn jc(x: f64, conf: f64) -> JointCandidate {
        JointCandidate::new(x, 0.0).with_confidence(conf)
    }

    #[test]
    fn nms_examples() {
        assert_eq!(nms_joints(&[jc(0., 0.9), jc(2., 0.8)], 5.0), vec![jc(0., 0.9)]);
        assert_eq!(nms_joints(&[jc(0., 0.9), jc(10., 0.8)], 5.0).len(), 2);
        let kept = nms_joints(&[jc(0., 0.9), jc(4., 0.8), jc(8., 0.7)], 5.0);
        assert_eq!(kept, vec![jc(0., 0.9), jc(8., 0.7)]);
        // equal confidence: smaller x wins
        assert_eq!(nms_joints(&[jc(3., 0.5), jc(1., 0.5)], 5.0), vec![jc(1., 0.5)]);
    }

    fn person(neck: Vec2, id: Option<u64>) -> Pose {
        let mut p = Pose::from_points(&figure(neck, 60.0, 0.0));
        p.track_id = id;
        p
    }

    fn seq_of(frames: Vec<Vec<Pose>>) -> Sequence {
        Sequence {
            topology: Arc::new(default_topology()),
            frames: frames
                .into_iter()
                .enumerate()
                .map(|(i, poses)| FramePoses {
                    frame_index: i as u64,
                    poses,
                    image_size: (200, 120),
                })
                .collect(),
        }
    }

    fn ids(t: &TrackedSequence, frame: usize) -> Vec<u64> {
        t.sequence.frames[frame].poses.iter().map(|p| p.track_id.unwrap()).collect()
    }

    #[test]
    fn static_person_keeps_id() {
        let gt = seq_of(vec![vec![person(Vec2::new(50., 20.), Some(0))]; 2]);
        let out = track_sequence(&gt.without_ids(), &GroundTruthFlow::new(&gt), &TrackerConfig::default()).unwrap();
        assert_eq!(ids(&out, 0), vec![0]);
        assert_eq!(ids(&out, 1), vec![0]);
    }

    #[test]
    fn one_frame_gets_fresh_ids() {
        let gt = seq_of(vec![vec![person(Vec2::new(40., 20.), Some(0)), person(Vec2::new(120., 20.), Some(1))]]);
        let out = track_sequence(&gt.without_ids(), &GroundTruthFlow::new(&gt), &TrackerConfig::default()).unwrap();
        assert_eq!(ids(&out, 0), vec![0, 1]);
        assert!(out.refinement_log.is_empty());
        let empty = seq_of(vec![]);
        assert!(track_sequence(&empty, &NoFlow, &TrackerConfig::default()).unwrap().sequence.frames.is_empty());
    }

    #[test]
    fn absent_person_is_retained_then_retired() {
        let topo = default_topology();
        let cfg = TrackerConfig::default();
        let a = person(Vec2::new(50., 20.), None);
        let b = person(Vec2::new(140., 20.), None);
        let mut state = TrackState::default();
        let f0 = FramePoses { frame_index: 0, poses: vec![a.clone(), b.clone()], image_size: (200, 120) };
        let f1 = FramePoses { frame_index: 1, poses: vec![a.clone()], image_size: (200, 120) };
        let f2 = FramePoses { frame_index: 2, poses: vec![a.clone()], image_size: (200, 120) };
        let g = GridsByOrigin::new();
        match_frames(&mut state, &f0, 0, &g, &topo, &cfg);
        let l1 = match_frames(&mut state, &f1, 1, &g, &topo, &cfg);
        assert_eq!(l1.poses[0].track_id, Some(0));
        assert_eq!(state.active.len(), 2, "track 1 retained for one frame");
        match_frames(&mut state, &f2, 2, &g, &topo, &cfg);
        assert_eq!(state.active.iter().map(|t| t.track_id).collect::<Vec<_>>(), vec![0]);
        let f3 = FramePoses { frame_index: 3, poses: vec![a, b], image_size: (200, 120) };
        let l3 = match_frames(&mut state, &f3, 3, &g, &topo, &cfg);
        // retired ids are not revived or reused
        assert_eq!(l3.poses[1].track_id, Some(2));
    }

    #[test]
    fn refinement_inserts_neighbour_mean() {
        let topo = default_topology();
        let cfg = TrackerConfig::default();
        let (x, y) = (60.0, 20.0);
        let before = person(Vec2::new(x, y), Some(7));
        let after = person(Vec2::new(x + 4.0, y), Some(7));
        let frame = |i, poses| FramePoses { frame_index: i, poses, image_size: (200, 120) };
        let prev = frame(0, vec![before.clone()]);
        let mid = frame(1, vec![]);
        let next = frame(2, vec![after.clone()]);
        let g2 = encode_tml(&next, &prev, &[(0, 0)], &topo, &cfg.encoder).unwrap();
        let (out, log) = refine_middle_frame(&prev, &mid, &next, &g2, &topo, &cfg);
        assert_eq!(log, vec![RefinementEntry { frame_index: 1, track_id: 7, source: "stride2-average".into() }]);
        let expected = person(Vec2::new(x + 2.0, y), Some(7));
        for j in 0..15 {
            assert!((out.poses[0].position(j).unwrap() - expected.position(j).unwrap()).norm() < 1e-9);
        }

        // only present before: nothing to insert
        let (out, log) = refine_middle_frame(&prev, &mid, &frame(2, vec![]), &g2, &topo, &cfg);
        assert!(out.poses.is_empty() && log.is_empty());
        // present in the middle: untouched
        let mid_full = frame(1, vec![person(Vec2::new(x + 1.0, y), Some(7))]);
        let (out, log) = refine_middle_frame(&prev, &mid_full, &next, &g2, &topo, &cfg);
        assert_eq!(out, mid_full);
        assert!(log.is_empty());
    }

    #[test]
    fn occlusion_preset_is_restored() {
        let cfg = SceneConfig { motion: MotionPreset::OcclusionMiddle, people: 3, frames: 3, seed: 11, ..Default::default() };
        let scene = generate_sequence(&cfg).unwrap();
        let cand = apply_corruption(&scene, &cfg);
        let out = track_sequence(&cand, &GroundTruthFlow::new(&scene.ground_truth), &TrackerConfig::default()).unwrap();
        assert_eq!(out.refinement_log.len(), 1);
        assert_eq!(out.sequence.frames[1].poses.len(), 3);
    }

    #[test]
    fn crossing_with_truth_flow_has_no_switch() {
        for seed in 0..10 {
            let cfg = SceneConfig { seed, ..Default::default() };
            let scene = generate_sequence(&cfg).unwrap();
            let cand = apply_corruption(&scene, &cfg);
            let out = track_sequence(&cand, &GroundTruthFlow::new(&scene.ground_truth), &TrackerConfig::default()).unwrap();
            for f in &out.sequence.frames {
                assert_eq!(f.poses.len(), 2);
                // poses keep input order, which follows the ground-truth order
                assert_eq!(f.poses.iter().map(|p| p.track_id.unwrap()).collect::<Vec<_>>(), vec![0, 1], "seed {seed}");
            }
        }
    }

    #[test]
    fn deterministic_and_unique() {
        let cfg = SceneConfig { motion: MotionPreset::Wander, people: 4, jitter_sigma: 2.0, dropout_prob: 0.2, seed: 5, ..Default::default() };
        let scene = generate_sequence(&cfg).unwrap();
        let cand = apply_corruption(&scene, &cfg);
        let flow = GroundTruthFlow::new(&scene.ground_truth);
        let a = track_sequence(&cand, &flow, &TrackerConfig::default()).unwrap();
        let b = track_sequence(&cand, &flow, &TrackerConfig::default()).unwrap();
        assert_eq!(a, b);
        for f in &a.sequence.frames {
            let mut ids: Vec<_> = f.poses.iter().map(|p| p.track_id.unwrap()).collect();
            let n = ids.len();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), n);
        }
        // refinement only inserts
        let plain = track_sequence(&cand, &flow, &TrackerConfig { refine: false, ..Default::default() }).unwrap();
        for (r, p) in a.sequence.frames.iter().zip(&plain.sequence.frames) {
            for pose in &p.poses {
                assert!(r.poses.contains(pose));
            }
        }
    }
}
