//! Tracking and pose-estimation metrics: MOTA, MOTP and per-joint AP.
//!
//! Definitions used here:
//!
//! * **Matching.** Per frame and joint type, predictions are taken in
//!   decreasing confidence order (ties: pose order) and each is matched to
//!   the nearest still-unmatched ground-truth joint within
//!   `factor × head size` of that ground-truth person (PCKh). The head size is
//!   the length of the topology's head segment; a person without one uses
//!   the median over the sequence.
//! * **MOTA** = `100 · (1 − (FN + FP + IDSW) / GT)` per joint, pooled over a
//!   joint group or over all joints. An ID switch is a matched joint whose
//!   predicted track id differs from the one last matched to the same
//!   ground-truth track and joint.
//! * **MOTP** = `100 · mean(1 − d / threshold)` over matched joints.
//! * **AP** per joint type is the area under the interpolated
//!   precision/recall curve of all its predictions ranked by confidence;
//!   mAP averages joint types that have ground truth.

use std::collections::HashMap;
use std::fmt::Write as _;

use log::{debug, warn};
use serde::Serialize;

use crate::pose::{FramePoses, Sequence};
use crate::skeleton::SkeletonTopology;

pub const DEFAULT_PCKH_FACTOR: f64 = 0.5;

/// Joint groups reported in tables: Head, Shou, Elb, Wri, Hip, Knee, Ankl.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGroups {
    pub names: Vec<String>,
    pub members: Vec<Vec<usize>>,
}

impl JointGroups {
    /// Groups joints by name keyword. Joints matching no keyword go to an
    /// extra "Other" group.
    pub fn for_topology(topo: &SkeletonTopology) -> Self {
        const KEYS: [(&str, &[&str]); 7] = [
            ("Head", &["head", "nose", "neck", "eye", "ear"]),
            ("Shou", &["shoulder"]),
            ("Elb", &["elbow"]),
            ("Wri", &["wrist"]),
            ("Hip", &["hip"]),
            ("Knee", &["knee"]),
            ("Ankl", &["ankle"]),
        ];
        let mut names: Vec<String> = KEYS.iter().map(|k| k.0.to_string()).collect();
        let mut members = vec![Vec::new(); KEYS.len()];
        let mut other = Vec::new();
        for (j, name) in topo.joint_names.iter().enumerate() {
            match KEYS.iter().position(|(_, kws)| kws.iter().any(|k| name.contains(k))) {
                Some(g) => members[g].push(j),
                None => other.push(j),
            }
        }
        if !other.is_empty() {
            names.push("Other".into());
            members.push(other);
        }
        JointGroups { names, members }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointMatch {
    pub gt_pose: usize,
    pub pred_pose: usize,
    pub distance: f64,
    pub threshold: f64,
}

/// PCKh head size of every ground-truth pose.
fn head_sizes(gt: &FramePoses, topo: &SkeletonTopology, fallback: Option<f64>) -> Vec<Option<f64>> {
    let (a, b) = topo.head_segment;
    gt.poses
        .iter()
        .enumerate()
        .map(|(i, p)| match (p.position(a), p.position(b)) {
            (Some(x), Some(y)) => Some((x - y).norm()),
            _ => {
                if fallback.is_some() {
                    debug!("frame {} pose {i}: no head segment, using median head size", gt.frame_index);
                } else {
                    warn!("frame {} pose {i}: no head segment and no fallback; joints unmatched", gt.frame_index);
                }
                fallback
            }
        })
        .collect()
}

/// Median head-segment length over all ground-truth poses.
pub fn median_head_size(gt: &Sequence) -> Option<f64> {
    let (a, b) = gt.topology.head_segment;
    let mut sizes: Vec<f64> = gt
        .frames
        .iter()
        .flat_map(|f| &f.poses)
        .filter_map(|p| Some((p.position(a)? - p.position(b)?).norm()))
        .collect();
    if sizes.is_empty() {
        return None;
    }
    sizes.sort_by(f64::total_cmp);
    let n = sizes.len();
    Some(if n % 2 == 1 {
        sizes[n / 2]
    } else {
        0.5 * (sizes[n / 2 - 1] + sizes[n / 2])
    })
}

/// Greedy one-to-one PCKh matching per joint type. Returns, for each joint
/// type, the list of matches.
pub fn match_joints_pckh(
    gt: &FramePoses,
    pred: &FramePoses,
    topo: &SkeletonTopology,
    thresh_factor: f64,
    fallback_head_size: Option<f64>,
) -> Vec<Vec<JointMatch>> {
    let heads = head_sizes(gt, topo, fallback_head_size);
    (0..topo.joint_count())
        .map(|j| {
            let mut preds: Vec<(usize, f64)> = pred
                .poses
                .iter()
                .enumerate()
                .filter_map(|(i, p)| p.visible_joint(j).map(|c| (i, c.confidence)))
                .collect();
            preds.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut taken = vec![false; gt.poses.len()];
            let mut matches = Vec::new();
            for (pi, _) in preds {
                let pp = pred.poses[pi].position(j).unwrap();
                let mut best: Option<(usize, f64, f64)> = None;
                for (gi, g) in gt.poses.iter().enumerate() {
                    let (false, Some(gj), Some(head)) = (taken[gi], g.visible_joint(j), heads[gi]) else {
                        continue;
                    };
                    let d = (gj.pos() - pp).norm();
                    let thr = thresh_factor * head;
                    if d <= thr && best.is_none_or(|b| d < b.1) {
                        best = Some((gi, d, thr));
                    }
                }
                if let Some((gi, d, thr)) = best {
                    taken[gi] = true;
                    matches.push(JointMatch {
                        gt_pose: gi,
                        pred_pose: pi,
                        distance: d,
                        threshold: thr,
                    });
                }
            }
            matches
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub gt: usize,
    pub matched: usize,
    pub false_negatives: usize,
    pub false_positives: usize,
    pub id_switches: usize,
}

impl Counts {
    fn add(&mut self, o: &Counts) {
        self.gt += o.gt;
        self.matched += o.matched;
        self.false_negatives += o.false_negatives;
        self.false_positives += o.false_positives;
        self.id_switches += o.id_switches;
    }

    /// `None` when there is no ground truth.
    pub fn mota(&self) -> Option<f64> {
        (self.gt > 0).then(|| {
            100.0
                * (1.0
                    - (self.false_negatives + self.false_positives + self.id_switches) as f64
                        / self.gt as f64)
        })
    }
}

/// Everything the three metrics need, gathered in one pass.
struct Pass {
    counts: Vec<Counts>,
    motp_terms: Vec<f64>,
    /// Per joint: (confidence, true positive) of every prediction.
    ranked: Vec<Vec<(f64, bool)>>,
}

fn evaluate_pass(gt: &Sequence, pred: &Sequence, factor: f64) -> Pass {
    let topo = gt.topology.as_ref();
    let nj = topo.joint_count();
    let fallback = median_head_size(gt);
    let mut counts = vec![Counts::default(); nj];
    let mut motp_terms = Vec::new();
    let mut ranked = vec![Vec::new(); nj];
    let mut last_id: HashMap<(usize, u64), u64> = HashMap::new();
    let pred_by_index: HashMap<u64, &FramePoses> = pred.frames.iter().map(|f| (f.frame_index, f)).collect();

    for g in &gt.frames {
        let empty = FramePoses::new(g.frame_index, g.image_size);
        let p = pred_by_index.get(&g.frame_index).copied().unwrap_or(&empty);
        let matches = match_joints_pckh(g, p, topo, factor, fallback);
        for (j, ms) in matches.iter().enumerate() {
            let n_gt = g.poses.iter().filter(|x| x.visible_joint(j).is_some()).count();
            let n_pred = p.poses.iter().filter(|x| x.visible_joint(j).is_some()).count();
            let c = &mut counts[j];
            c.gt += n_gt;
            c.matched += ms.len();
            c.false_negatives += n_gt - ms.len();
            c.false_positives += n_pred - ms.len();
            for m in ms {
                motp_terms.push(if m.threshold > 0.0 { 1.0 - m.distance / m.threshold } else { 1.0 });
                let (Some(gid), Some(pid)) = (g.poses[m.gt_pose].track_id, p.poses[m.pred_pose].track_id) else {
                    continue;
                };
                if let Some(prev) = last_id.insert((j, gid), pid) {
                    if prev != pid {
                        c.id_switches += 1;
                    }
                }
            }
            for (pi, pose) in p.poses.iter().enumerate() {
                if let Some(cand) = pose.visible_joint(j) {
                    ranked[j].push((cand.confidence, ms.iter().any(|m| m.pred_pose == pi)));
                }
            }
        }
    }
    Pass {
        counts,
        motp_terms,
        ranked,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotaResult {
    pub per_joint: Vec<Counts>,
    pub per_group: Vec<Counts>,
    pub total: Counts,
}

impl MotaResult {
    pub fn total_mota(&self) -> Option<f64> {
        self.total.mota()
    }
}

fn pool(groups: &JointGroups, per_joint: &[Counts]) -> (Vec<Counts>, Counts) {
    let per_group = groups
        .members
        .iter()
        .map(|m| {
            let mut c = Counts::default();
            for &j in m {
                c.add(&per_joint[j]);
            }
            c
        })
        .collect();
    let mut total = Counts::default();
    for c in per_joint {
        total.add(c);
    }
    (per_group, total)
}

pub fn mota(gt: &Sequence, pred: &Sequence, factor: f64) -> MotaResult {
    let pass = evaluate_pass(gt, pred, factor);
    let groups = JointGroups::for_topology(&gt.topology);
    let (per_group, total) = pool(&groups, &pass.counts);
    MotaResult {
        per_joint: pass.counts,
        per_group,
        total,
    }
}

pub fn motp(gt: &Sequence, pred: &Sequence, factor: f64) -> Option<f64> {
    motp_of(&evaluate_pass(gt, pred, factor).motp_terms)
}

fn motp_of(terms: &[f64]) -> Option<f64> {
    (!terms.is_empty()).then(|| 100.0 * terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Area under the interpolated precision/recall curve, in [0, 1].
pub fn average_precision(ranked: &[(f64, bool)], gt_count: usize) -> Option<f64> {
    if gt_count == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    order.sort_by(|&a, &b| ranked[b].0.total_cmp(&ranked[a].0).then(a.cmp(&b)));
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(order.len());
    for (k, &i) in order.iter().enumerate() {
        tp += ranked[i].1 as usize;
        points.push((tp as f64 / gt_count as f64, tp as f64 / (k + 1) as f64));
    }
    // precision envelope from the right
    for k in (0..points.len().saturating_sub(1)).rev() {
        points[k].1 = points[k].1.max(points[k + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in points {
        ap += (r - prev_recall) * p;
        prev_recall = r;
    }
    Some(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApResult {
    /// Percent, `None` for joint types without ground truth.
    pub per_joint: Vec<Option<f64>>,
    pub map: Option<f64>,
}

fn mean_of(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn ap_from_pass(gt: &Sequence, pass: &Pass) -> ApResult {
    let per_joint: Vec<Option<f64>> = pass
        .ranked
        .iter()
        .zip(&pass.counts)
        .enumerate()
        .map(|(j, (r, c))| {
            let ap = average_precision(r, c.gt).map(|a| 100.0 * a);
            if ap.is_none() {
                debug!("joint {} ({}) has no ground truth; excluded from mAP", j, gt.topology.joint_names[j]);
            }
            ap
        })
        .collect();
    let map = mean_of(per_joint.iter().copied());
    ApResult { per_joint, map }
}

pub fn mean_ap(gt: &Sequence, pred: &Sequence, factor: f64) -> ApResult {
    ap_from_pass(gt, &evaluate_pass(gt, pred, factor))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub name: String,
    pub mota: Option<f64>,
    pub ap: Option<f64>,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub groups: Vec<GroupRow>,
    pub total: GroupRow,
    pub motp: Option<f64>,
    pub joint_ap: Vec<Option<f64>>,
    pub map: Option<f64>,
}

pub fn evaluate(gt: &Sequence, pred: &Sequence, factor: f64) -> EvalReport {
    let pass = evaluate_pass(gt, pred, factor);
    let groups = JointGroups::for_topology(&gt.topology);
    let (per_group, total) = pool(&groups, &pass.counts);
    let ap = ap_from_pass(gt, &pass);
    let rows = groups
        .names
        .iter()
        .zip(&groups.members)
        .zip(per_group)
        .map(|((name, members), counts)| GroupRow {
            name: name.clone(),
            mota: counts.mota(),
            ap: mean_of(members.iter().map(|&j| ap.per_joint[j])),
            counts,
        })
        .collect();
    EvalReport {
        groups: rows,
        total: GroupRow {
            name: "Total".into(),
            mota: total.mota(),
            ap: ap.map,
            counts: total,
        },
        motp: motp_of(&pass.motp_terms),
        joint_ap: ap.per_joint,
        map: ap.map,
    }
}

impl EvalReport {
    /// Fixed-width table with one column per joint group plus Total.
    pub fn format_table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"));
        let mut s = String::new();
        let _ = write!(s, "{:<6}", "");
        for g in self.groups.iter().chain(std::iter::once(&self.total)) {
            let _ = write!(s, "{:>8}", g.name);
        }
        s.push('\n');
        for (label, pick) in [("MOTA", 0), ("AP", 1)] {
            let _ = write!(s, "{label:<6}");
            for g in self.groups.iter().chain(std::iter::once(&self.total)) {
                let _ = write!(s, "{:>8}", cell(if pick == 0 { g.mota } else { g.ap }));
            }
            s.push('\n');
        }
        let c = &self.total.counts;
        let _ = writeln!(
            s,
            "MOTP {}  mAP {}  GT {}  FN {}  FP {}  IDSW {}",
            cell(self.motp),
            cell(self.map),
            c.gt,
            c.false_negatives,
            c.false_positives,
            c.id_switches
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{JointCandidate, Pose, Vec2};
    use crate::skeleton::default_topology;
    use crate::synth::figure;
    use std::sync::Arc;

    fn person(neck: Vec2, id: u64) -> Pose {
        Pose::from_points(&figure(neck, 60.0, 0.0)).with_track_id(id)
    }

    fn seq(frames: Vec<Vec<Pose>>) -> Sequence {
        Sequence {
            topology: Arc::new(default_topology()),
            frames: frames
                .into_iter()
                .enumerate()
                .map(|(i, poses)| FramePoses { frame_index: i as u64, poses, image_size: (300, 200) })
                .collect(),
        }
    }

    #[test]
    fn groups_of_default_topology() {
        let g = JointGroups::for_topology(&default_topology());
        assert_eq!(g.names, vec!["Head", "Shou", "Elb", "Wri", "Hip", "Knee", "Ankl"]);
        assert_eq!(g.members[0], vec![12, 13, 14]);
        assert_eq!(g.members.iter().map(Vec::len).sum::<usize>(), 15);
    }

    #[test]
    fn pckh_matching_cases() {
        let topo = default_topology();
        let gt_pose = person(Vec2::new(50., 40.), 0);
        let head = (gt_pose.position(12).unwrap() - gt_pose.position(14).unwrap()).norm();
        let gt = FramePoses { frame_index: 0, poses: vec![gt_pose.clone()], image_size: (300, 200) };
        let m = match_joints_pckh(&gt, &gt, &topo, 0.5, None);
        assert!(m.iter().all(|x| x.len() == 1));

        let far = FramePoses { poses: vec![gt_pose.translated(Vec2::new(2.0 * head, 0.0))], ..gt.clone() };
        assert!(match_joints_pckh(&gt, &far, &topo, 0.5, None).iter().all(Vec::is_empty));

        // two predictions near one gt joint: the more confident wins even if farther
        let mut a = Pose::empty(15);
        a.joints[3] = Some(JointCandidate::new(gt_pose.position(3).unwrap().x + 3.0, gt_pose.position(3).unwrap().y).with_confidence(0.9));
        let mut b = Pose::empty(15);
        b.joints[3] = Some(JointCandidate::new(gt_pose.position(3).unwrap().x + 1.0, gt_pose.position(3).unwrap().y).with_confidence(0.6));
        let pred = FramePoses { poses: vec![b, a], ..gt.clone() };
        let m = match_joints_pckh(&gt, &pred, &topo, 0.5, None);
        assert_eq!(m[3].len(), 1);
        assert_eq!(m[3][0].pred_pose, 1);
        assert!((m[3][0].distance - 3.0).abs() < 1e-12);
    }

    #[test]
    fn missing_head_uses_fallback() {
        let topo = default_topology();
        let mut p = person(Vec2::new(50., 40.), 0);
        p.joints[14] = None;
        let gt = FramePoses { frame_index: 0, poses: vec![p.clone()], image_size: (300, 200) };
        assert!(match_joints_pckh(&gt, &gt, &topo, 0.5, None).iter().all(Vec::is_empty));
        let m = match_joints_pckh(&gt, &gt, &topo, 0.5, Some(10.0));
        assert_eq!(m[0][0].threshold, 5.0);
    }

    #[test]
    fn perfect_tracking_scores_100() {
        let s = seq((0..5).map(|t| vec![person(Vec2::new(50. + 5. * t as f64, 40.), 0), person(Vec2::new(200., 40.), 1)]).collect());
        let r = evaluate(&s, &s, 0.5);
        assert_eq!(r.total.mota, Some(100.0));
        assert!(r.groups.iter().all(|g| g.mota == Some(100.0) && g.ap == Some(100.0)));
        assert_eq!(r.motp, Some(100.0));
        assert_eq!(r.map, Some(100.0));
        assert!(r.format_table().contains("Total"));
    }

    #[test]
    fn one_missed_frame_of_ten() {
        let mut gt = seq(vec![vec![]; 10]);
        let mut one = Pose::empty(15);
        one.joints[12] = Some(JointCandidate::new(10., 10.));
        one.joints[14] = Some(JointCandidate::new(10., 0.));
        one.track_id = Some(0);
        for f in &mut gt.frames {
            f.poses.push(one.clone());
        }
        let mut pred = gt.clone();
        pred.frames[4].poses.clear();
        // head top is not scored separately here: drop it from both to keep one joint
        for s in [&mut gt, &mut pred] {
            for f in &mut s.frames {
                for p in &mut f.poses {
                    p.joints[14].as_mut().unwrap().visible = false;
                }
            }
        }
        let m = mota(&gt, &pred, 0.5);
        assert_eq!(m.total.gt, 10);
        assert_eq!(m.total_mota(), Some(90.0));
    }

    #[test]
    fn swap_counts_once() {
        let a = |t: usize| person(Vec2::new(40. + 3. * t as f64, 40.), 0);
        let b = |t: usize| person(Vec2::new(200. - 3. * t as f64, 40.), 1);
        let gt = seq((0..10).map(|t| vec![a(t), b(t)]).collect());
        let mut pred = gt.clone();
        for f in &mut pred.frames[5..] {
            f.poses[0].track_id = Some(1);
            f.poses[1].track_id = Some(0);
        }
        let m = mota(&gt, &pred, 0.5);
        assert_eq!(m.total.id_switches, 2 * 15);
        assert_eq!(m.total.gt, 300);
        assert!((m.total_mota().unwrap() - 90.0).abs() < 1e-12);
    }

    #[test]
    fn motp_cases() {
        let gt_pose = person(Vec2::new(50., 40.), 0);
        let head = (gt_pose.position(12).unwrap() - gt_pose.position(14).unwrap()).norm();
        let gt = seq(vec![vec![gt_pose.clone()]; 2]);
        assert_eq!(motp(&gt, &gt, 0.5), Some(100.0));
        // every joint exactly at the threshold distance
        let at = seq(vec![vec![gt_pose.translated(Vec2::new(0.5 * head, 0.0))]; 2]);
        assert!(motp(&gt, &at, 0.5).unwrap().abs() < 1e-9);
        let half = seq(vec![vec![gt_pose.clone()], vec![gt_pose.translated(Vec2::new(0.5 * head, 0.0))]]);
        assert!((motp(&gt, &half, 0.5).unwrap() - 50.0).abs() < 1e-9);
        assert_eq!(motp(&gt, &seq(vec![vec![], vec![]]), 0.5), None);
    }

    #[test]
    fn ap_cases() {
        assert_eq!(average_precision(&[(0.9, true), (0.8, false)], 1), Some(1.0));
        assert_eq!(average_precision(&[], 3), Some(0.0));
        assert_eq!(average_precision(&[(0.3, true)], 0), None);
        // FP ranked first: precision 1/2 at full recall
        assert_eq!(average_precision(&[(0.9, false), (0.8, true)], 1), Some(0.5));
        let gt = seq(vec![vec![person(Vec2::new(50., 40.), 0)]]);
        assert_eq!(mean_ap(&gt, &seq(vec![vec![]]), 0.5).map, Some(0.0));
    }

    #[test]
    fn false_positive_never_raises_mota() {
        let gt = seq((0..3).map(|t| vec![person(Vec2::new(50. + 4. * t as f64, 40.), 0)]).collect());
        let mut pred = gt.clone();
        pred.frames[1].poses[0].joints[5] = None;
        let base = mota(&gt, &pred, 0.5).total_mota().unwrap();
        pred.frames[2].poses.push(person(Vec2::new(220., 40.), 9));
        assert!(mota(&gt, &pred, 0.5).total_mota().unwrap() <= base);
    }
}
