//! Pose, frame and sequence value types.

use std::sync::Arc;

use nalgebra::Vector2;

use crate::skeleton::SkeletonTopology;

pub type Vec2 = Vector2<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointCandidate {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
    pub visible: bool,
}

impl JointCandidate {
    pub fn new(x: f64, y: f64) -> Self {
        JointCandidate {
            x,
            y,
            confidence: 1.0,
            visible: true,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn at(p: Vec2) -> Self {
        Self::new(p.x, p.y)
    }

    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && (0.0..=1.0).contains(&self.confidence)
    }
}

/// One person's keypoints. Missing joints are `None`; `(0, 0)` is a valid
/// pixel and is never used as a sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub joints: Vec<Option<JointCandidate>>,
    pub track_id: Option<u64>,
}

impl Pose {
    pub fn empty(joint_count: usize) -> Self {
        Pose {
            joints: vec![None; joint_count],
            track_id: None,
        }
    }

    pub fn from_points(points: &[Vec2]) -> Self {
        Pose {
            joints: points.iter().map(|&p| Some(JointCandidate::at(p))).collect(),
            track_id: None,
        }
    }

    pub fn with_track_id(mut self, id: u64) -> Self {
        self.track_id = Some(id);
        self
    }

    /// n_J: number of present joints.
    pub fn present_count(&self) -> usize {
        self.joints.iter().filter(|j| j.is_some()).count()
    }

    /// Joint `j` if present and visible.
    pub fn visible_joint(&self, j: usize) -> Option<&JointCandidate> {
        self.joints.get(j)?.as_ref().filter(|c| c.visible)
    }

    pub fn position(&self, j: usize) -> Option<Vec2> {
        self.joints.get(j)?.as_ref().map(JointCandidate::pos)
    }

    /// Mean position of present joints.
    pub fn centroid(&self) -> Option<Vec2> {
        let (sum, n) = self
            .joints
            .iter()
            .flatten()
            .fold((Vec2::zeros(), 0usize), |(s, n), j| (s + j.pos(), n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn translated(&self, offset: Vec2) -> Pose {
        Pose {
            joints: self
                .joints
                .iter()
                .map(|j| {
                    j.map(|mut c| {
                        c.x += offset.x;
                        c.y += offset.y;
                        c
                    })
                })
                .collect(),
            track_id: self.track_id,
        }
    }
}

/// Joint indices present and visible in both poses, ascending.
pub fn common_joints(a: &Pose, b: &Pose) -> Vec<usize> {
    let n = a.joints.len().min(b.joints.len());
    (0..n)
        .filter(|&j| a.visible_joint(j).is_some() && b.visible_joint(j).is_some())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePoses {
    pub frame_index: u64,
    pub poses: Vec<Pose>,
    /// (width, height) in pixels.
    pub image_size: (u32, u32),
}

impl FramePoses {
    pub fn new(frame_index: u64, image_size: (u32, u32)) -> Self {
        FramePoses {
            frame_index,
            poses: Vec::new(),
            image_size,
        }
    }

    pub fn in_bounds(&self, p: Vec2) -> bool {
        p.x >= 0.0
            && p.y >= 0.0
            && p.x < self.image_size.0 as f64
            && p.y < self.image_size.1 as f64
    }

    pub fn pose_with_id(&self, id: u64) -> Option<&Pose> {
        self.poses.iter().find(|p| p.track_id == Some(id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub topology: Arc<SkeletonTopology>,
    pub frames: Vec<FramePoses>,
}

impl Sequence {
    pub fn new(topology: Arc<SkeletonTopology>) -> Self {
        Sequence {
            topology,
            frames: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Checks that frame indices strictly increase, that every pose has one
    /// slot per topology joint, that joint values are finite with
    /// confidence in [0, 1], and that ids are unique within a frame.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.topology.joint_count();
        for (fi, f) in self.frames.iter().enumerate() {
            if fi > 0 && f.frame_index <= self.frames[fi - 1].frame_index {
                return Err(format!(
                    "frame indices not strictly increasing at position {fi}"
                ));
            }
            let mut ids = Vec::new();
            for (pi, p) in f.poses.iter().enumerate() {
                if p.joints.len() != n {
                    return Err(format!(
                        "frame {}: pose {pi} has {} joint slots, topology has {n}",
                        f.frame_index,
                        p.joints.len()
                    ));
                }
                if let Some(j) = p.joints.iter().flatten().find(|j| !j.is_valid()) {
                    return Err(format!(
                        "frame {}: pose {pi} has invalid joint {j:?}",
                        f.frame_index
                    ));
                }
                if let Some(id) = p.track_id {
                    if ids.contains(&id) {
                        return Err(format!(
                            "frame {}: duplicate track id {id}",
                            f.frame_index
                        ));
                    }
                    ids.push(id);
                }
            }
        }
        Ok(())
    }

    /// Copy of the sequence with every track id removed.
    pub fn without_ids(&self) -> Sequence {
        let mut s = self.clone();
        for p in s.frames.iter_mut().flat_map(|f| f.poses.iter_mut()) {
            p.track_id = None;
        }
        s
    }
}
