//! Articulated 2D skeleton topology.
//!
//! A topology is plain data: ordered joint names, a list of limbs given as
//! `(parent, child)` joint index pairs, the limb channel each joint is scored
//! against, and the joint pair used as the head segment for PCKh
//! normalization. The default is a 15-joint PoseTrack-style body model.

use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Result, TmlError};

/// Name of the built-in topology as it appears in annotation files.
pub const DEFAULT_TOPOLOGY_NAME: &str = "posetrack15";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonTopology {
    pub name: String,
    pub joint_names: Vec<String>,
    pub limbs: Vec<(usize, usize)>,
    /// `joint_channel[j]` is the index of the limb whose flow channel is
    /// sampled when scoring joint `j`. It must be incident to `j`.
    pub joint_channel: Vec<usize>,
    pub head_segment: (usize, usize),
}

// Joint indices of the default topology.
pub mod joints {
    pub const RIGHT_ANKLE: usize = 0;
    pub const RIGHT_KNEE: usize = 1;
    pub const RIGHT_HIP: usize = 2;
    pub const LEFT_HIP: usize = 3;
    pub const LEFT_KNEE: usize = 4;
    pub const LEFT_ANKLE: usize = 5;
    pub const RIGHT_WRIST: usize = 6;
    pub const RIGHT_ELBOW: usize = 7;
    pub const RIGHT_SHOULDER: usize = 8;
    pub const LEFT_SHOULDER: usize = 9;
    pub const LEFT_ELBOW: usize = 10;
    pub const LEFT_WRIST: usize = 11;
    pub const HEAD_BOTTOM: usize = 12;
    pub const NOSE: usize = 13;
    pub const HEAD_TOP: usize = 14;
}

const DEFAULT_JOINT_NAMES: [&str; 15] = [
    "right_ankle",
    "right_knee",
    "right_hip",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_wrist",
    "right_elbow",
    "right_shoulder",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "head_bottom",
    "nose",
    "head_top",
];

/// Limbs of the default topology, rooted at `head_bottom` (the neck).
///
/// | # | limb                 | parent → child              |
/// |---|----------------------|-----------------------------|
/// | 0 | neck                 | head_bottom → nose          |
/// | 1 | head                 | nose → head_top             |
/// | 2 | right collar         | head_bottom → right_shoulder|
/// | 3 | right upper arm      | right_shoulder → right_elbow|
/// | 4 | right lower arm      | right_elbow → right_wrist   |
/// | 5 | left collar          | head_bottom → left_shoulder |
/// | 6 | left upper arm       | left_shoulder → left_elbow  |
/// | 7 | left lower arm       | left_elbow → left_wrist     |
/// | 8 | right torso side     | right_shoulder → right_hip  |
/// | 9 | right thigh          | right_hip → right_knee      |
/// |10 | right calf           | right_knee → right_ankle    |
/// |11 | left torso side      | left_shoulder → left_hip    |
/// |12 | left thigh           | left_hip → left_knee        |
/// |13 | left calf            | left_knee → left_ankle      |
const DEFAULT_LIMBS: [(usize, usize); 14] = {
    use joints::*;
    [
        (HEAD_BOTTOM, NOSE),
        (NOSE, HEAD_TOP),
        (HEAD_BOTTOM, RIGHT_SHOULDER),
        (RIGHT_SHOULDER, RIGHT_ELBOW),
        (RIGHT_ELBOW, RIGHT_WRIST),
        (HEAD_BOTTOM, LEFT_SHOULDER),
        (LEFT_SHOULDER, LEFT_ELBOW),
        (LEFT_ELBOW, LEFT_WRIST),
        (RIGHT_SHOULDER, RIGHT_HIP),
        (RIGHT_HIP, RIGHT_KNEE),
        (RIGHT_KNEE, RIGHT_ANKLE),
        (LEFT_SHOULDER, LEFT_HIP),
        (LEFT_HIP, LEFT_KNEE),
        (LEFT_KNEE, LEFT_ANKLE),
    ]
};

/// The 15-joint, 14-limb body model used throughout the crate.
///
/// Each joint is scored against the limb that ends at it (wrist against the
/// lower arm, knee against the thigh, ...); the root `head_bottom` uses the
/// neck limb.
pub fn default_topology() -> SkeletonTopology {
    let limbs = DEFAULT_LIMBS.to_vec();
    let joint_channel = derive_joint_channels(DEFAULT_JOINT_NAMES.len(), &limbs);
    SkeletonTopology {
        name: DEFAULT_TOPOLOGY_NAME.to_string(),
        joint_names: DEFAULT_JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
        limbs,
        joint_channel,
        head_segment: (joints::HEAD_BOTTOM, joints::HEAD_TOP),
    }
}

/// For each joint, the first limb ending at it, else the first limb touching
/// it. Joints with no incident limb get `usize::MAX`, which validation
/// reports.
pub fn derive_joint_channels(joint_count: usize, limbs: &[(usize, usize)]) -> Vec<usize> {
    (0..joint_count)
        .map(|j| {
            limbs
                .iter()
                .position(|&(_, c)| c == j)
                .or_else(|| limbs.iter().position(|&(a, b)| a == j || b == j))
                .unwrap_or(usize::MAX)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TopologyViolation {
    NoJoints,
    EndpointOutOfRange { limb: usize, joint: usize },
    SelfLoop { limb: usize },
    DuplicateLimb { limb: usize, first: usize },
    Cycle { limb: usize },
    Disconnected { components: usize },
    ChannelCountMismatch { expected: usize, found: usize },
    ChannelOutOfRange { joint: usize, channel: usize },
    ChannelNotIncident { joint: usize, channel: usize },
    HeadSegmentOutOfRange { joint: usize },
}

impl fmt::Display for TopologyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use TopologyViolation::*;
        match *self {
            NoJoints => write!(f, "topology has no joints"),
            EndpointOutOfRange { limb, joint } => {
                write!(f, "limb {limb}: endpoint {joint} out of range")
            }
            SelfLoop { limb } => write!(f, "limb {limb}: self-loop limb"),
            DuplicateLimb { limb, first } => {
                write!(f, "limb {limb}: duplicate of limb {first}")
            }
            Cycle { limb } => write!(f, "limb {limb}: closes a cycle"),
            Disconnected { components } => {
                write!(f, "disconnected: {components} components")
            }
            ChannelCountMismatch { expected, found } => write!(
                f,
                "joint_channel has {found} entries, expected {expected}"
            ),
            ChannelOutOfRange { joint, channel } => {
                write!(f, "joint {joint}: channel {channel} out of range")
            }
            ChannelNotIncident { joint, channel } => {
                write!(f, "joint {joint}: channel limb {channel} is not incident")
            }
            HeadSegmentOutOfRange { joint } => {
                write!(f, "head segment joint {joint} out of range")
            }
        }
    }
}

/// Checks every topology invariant and returns all violations found.
/// Total over arbitrary index values.
pub fn validate_topology(t: &SkeletonTopology) -> std::result::Result<(), Vec<TopologyViolation>> {
    let n = t.joint_names.len();
    let mut out = Vec::new();
    if n == 0 {
        out.push(TopologyViolation::NoJoints);
    }

    let mut dsu = DisjointSet::new(n);
    for (i, &(a, b)) in t.limbs.iter().enumerate() {
        let mut in_range = true;
        for j in [a, b] {
            if j >= n {
                out.push(TopologyViolation::EndpointOutOfRange { limb: i, joint: j });
                in_range = false;
            }
        }
        if a == b {
            out.push(TopologyViolation::SelfLoop { limb: i });
            continue;
        }
        let key = (a.min(b), a.max(b));
        if let Some(first) = t.limbs[..i]
            .iter()
            .position(|&(c, d)| (c.min(d), c.max(d)) == key)
        {
            out.push(TopologyViolation::DuplicateLimb { limb: i, first });
            continue;
        }
        if in_range && !dsu.union(a, b) {
            out.push(TopologyViolation::Cycle { limb: i });
        }
    }
    let components = dsu.components();
    if components > 1 {
        out.push(TopologyViolation::Disconnected { components });
    }

    if t.joint_channel.len() != n {
        out.push(TopologyViolation::ChannelCountMismatch {
            expected: n,
            found: t.joint_channel.len(),
        });
    }
    for (j, &c) in t.joint_channel.iter().enumerate().take(n) {
        match t.limbs.get(c) {
            None => out.push(TopologyViolation::ChannelOutOfRange { joint: j, channel: c }),
            Some(&(a, b)) if a != j && b != j => {
                out.push(TopologyViolation::ChannelNotIncident { joint: j, channel: c })
            }
            _ => {}
        }
    }

    let (h0, h1) = t.head_segment;
    for j in [h0, h1] {
        if j >= n {
            out.push(TopologyViolation::HeadSegmentOutOfRange { joint: j });
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

impl SkeletonTopology {
    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn limb_count(&self) -> usize {
        self.limbs.len()
    }

    pub fn validate(&self) -> std::result::Result<(), Vec<TopologyViolation>> {
        validate_topology(self)
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    /// Parses a key-value (TOML) topology description:
    ///
    /// ```text
    /// name = "arm"
    /// joints = ["shoulder", "elbow", "wrist"]
    /// limbs = [[0, 1], [1, 2]]
    /// head_segment = [0, 1]
    /// joint_channel = [0, 0, 1]   # optional
    /// ```
    ///
    /// The result is validated.
    pub fn from_config_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            name: Option<String>,
            joints: Vec<String>,
            limbs: Vec<[usize; 2]>,
            head_segment: [usize; 2],
            joint_channel: Option<Vec<usize>>,
        }
        let raw: Raw =
            toml::from_str(text).map_err(|e| TmlError::parse("topology config", e.to_string()))?;
        let limbs: Vec<(usize, usize)> = raw.limbs.iter().map(|l| (l[0], l[1])).collect();
        let joint_channel = raw
            .joint_channel
            .unwrap_or_else(|| derive_joint_channels(raw.joints.len(), &limbs));
        let topo = SkeletonTopology {
            name: raw.name.unwrap_or_else(|| "custom".to_string()),
            joint_names: raw.joints,
            limbs,
            joint_channel,
            head_segment: (raw.head_segment[0], raw.head_segment[1]),
        };
        topo.validate().map_err(TmlError::InvalidTopology)?;
        Ok(topo)
    }

    pub fn from_config_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TmlError::io(path, e))?;
        Self::from_config_str(&text)
    }
}

/// Resolves a topology by the name recorded in annotation files.
pub fn topology_by_name(name: &str) -> Result<SkeletonTopology> {
    if name == DEFAULT_TOPOLOGY_NAME {
        Ok(default_topology())
    } else {
        Err(TmlError::UnknownTopology(name.to_string()))
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }

    fn components(&mut self) -> usize {
        (0..self.parent.len()).filter(|&i| self.find(i) == i).count()
    }
}
