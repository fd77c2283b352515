//! Association scores between candidate poses in two frames.
//!
//! * `S_T`: line integral of the flow map along each joint's displacement,
//!   dotted with the displacement direction, averaged over common joints.
//! * `S_d`: mean Euclidean joint displacement in pixels.
//! * `S = alpha * S_T + (1 - alpha) * exp(-S_d / sigma_d)`.
//!
//! A pose pair with no common joint has no score (`None`); such pairs can
//! never be associated.

use crate::encode::{ChannelKeying, ChannelLayout, FlowMapGrid, DEFAULT_EPSILON_MOTION};
use crate::error::{Result, TmlError};
use crate::pose::{common_joints, FramePoses, Pose, Vec2};
use crate::skeleton::SkeletonTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Nearest,
    Bilinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConfig {
    pub alpha: f64,
    /// Number of midpoint samples along each joint displacement.
    pub integral_samples: usize,
    /// Pixels; distance `sigma_d` maps to similarity `exp(-1)`.
    pub distance_scale: f64,
    pub interpolation: Interpolation,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            alpha: 0.5,
            integral_samples: 20,
            distance_scale: 32.0,
            interpolation: Interpolation::Nearest,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(TmlError::Config(format!("alpha {} not in [0, 1]", self.alpha)));
        }
        if self.integral_samples < 1 {
            return Err(TmlError::Config("integral_samples must be >= 1".into()));
        }
        if !(self.distance_scale > 0.0 && self.distance_scale.is_finite()) {
            return Err(TmlError::Config("distance_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Channel of `grid` that joint `j` is scored against.
fn channel_for(grid: &FlowMapGrid, topo: &SkeletonTopology, j: usize) -> Option<usize> {
    let c = match (grid.layout(), grid.keying()) {
        (ChannelLayout::Accumulated, _) => 0,
        (ChannelLayout::Individual, ChannelKeying::Joint) => j,
        (ChannelLayout::Individual, ChannelKeying::Limb) => *topo.joint_channel.get(j)?,
    };
    (c < grid.channel_count()).then_some(c)
}

fn sample(grid: &FlowMapGrid, channel: usize, p: Vec2, mode: Interpolation) -> Vec2 {
    match mode {
        Interpolation::Nearest => grid.sample_nearest(channel, p),
        Interpolation::Bilinear => grid.sample_bilinear(channel, p),
    }
}

/// Line-integral flow score of associating `later` (frame t1) with
/// `earlier` (frame t2). `grid` must be encoded over (t1, t2).
pub fn tml_score(
    later: &Pose,
    earlier: &Pose,
    grid: &FlowMapGrid,
    topo: &SkeletonTopology,
    cfg: &ScoreConfig,
) -> Option<f64> {
    let common = common_joints(later, earlier);
    if common.is_empty() {
        return None;
    }
    let u_count = cfg.integral_samples.max(1);
    let mut total = 0.0;
    for &j in &common {
        let (i1, i2) = (later.position(j)?, earlier.position(j)?);
        let d = i1 - i2;
        let norm = d.norm();
        let Some(channel) = channel_for(grid, topo, j) else {
            continue;
        };
        if norm <= DEFAULT_EPSILON_MOTION {
            continue;
        }
        let dir = d / norm;
        let integral: f64 = (0..u_count)
            .map(|i| {
                let u = (i as f64 + 0.5) / u_count as f64;
                let k = i1 * (1.0 - u) + i2 * u;
                sample(grid, channel, k, cfg.interpolation).dot(&dir)
            })
            .sum();
        total += integral / u_count as f64;
    }
    Some(total / common.len() as f64)
}

/// Mean Euclidean distance over common joints, pixels.
pub fn distance_score(a: &Pose, b: &Pose) -> Option<f64> {
    let common = common_joints(a, b);
    if common.is_empty() {
        return None;
    }
    let sum: f64 = common
        .iter()
        .map(|&j| (a.position(j).unwrap() - b.position(j).unwrap()).norm())
        .sum();
    Some(sum / common.len() as f64)
}

pub fn association_score(s_t: Option<f64>, s_d: Option<f64>, cfg: &ScoreConfig) -> Option<f64> {
    let (s_t, s_d) = (s_t?, s_d?);
    Some(cfg.alpha * s_t + (1.0 - cfg.alpha) * (-s_d / cfg.distance_scale).exp())
}

/// Combined score of one (later, earlier) pose pair.
pub fn pair_score(
    later: &Pose,
    earlier: &Pose,
    grid: &FlowMapGrid,
    topo: &SkeletonTopology,
    cfg: &ScoreConfig,
) -> Option<f64> {
    // alpha = 0 never reads the grid
    let s_t = if cfg.alpha == 0.0 {
        (!common_joints(later, earlier).is_empty()).then_some(0.0)
    } else {
        tml_score(later, earlier, grid, topo, cfg)
    };
    association_score(s_t, distance_score(later, earlier), cfg)
}

/// Dense score table; `None` marks a forbidden association.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Option<f64>>,
}

impl AssociationMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        AssociationMatrix {
            rows,
            cols,
            entries: vec![None; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
        let mut m = Self::new(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.entries[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Option<f64>) {
        self.entries[r * self.cols + c] = v;
    }
}

/// Scores every pose of `later` (rows) against every pose of `earlier`
/// (columns).
pub fn build_association_matrix(
    later: &FramePoses,
    earlier: &FramePoses,
    grid: &FlowMapGrid,
    topo: &SkeletonTopology,
    cfg: &ScoreConfig,
) -> AssociationMatrix {
    AssociationMatrix::from_fn(later.poses.len(), earlier.poses.len(), |i, j| {
        pair_score(&later.poses[i], &earlier.poses[j], grid, topo, cfg)
    })
}
