//! Temporal flow maps for limbs (TML).
//!
//! Every limb of every paired person is cut into `n` equal parts. Each part
//! contributes a thick stroke from its anchor in the earlier frame to its
//! anchor in the later frame, filled with the unit vector of that motion.
//! Overlapping contributions in one cell and channel are averaged, so every
//! stored vector has norm at most one.
//!
//! Cell `(cx, cy)` is centred on pixel `(cx * stride, cy * stride)`. A cell
//! belongs to a stroke when its centre is strictly closer than the stroke
//! half-width to the segment.

use crate::error::{Result, TmlError};
use crate::pose::{FramePoses, Vec2};
use crate::skeleton::SkeletonTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelLayout {
    /// Two planes per channel.
    #[default]
    Individual,
    /// All channels averaged into a single pair of planes.
    Accumulated,
}

/// What the channels of an individual-layout grid are keyed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelKeying {
    #[default]
    Limb,
    /// Joint-Flow baseline: one channel per joint.
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub parts_per_limb: usize,
    pub stroke_half_width: f64,
    pub epsilon_motion: f64,
    pub layout: ChannelLayout,
    pub grid_stride: u32,
}

pub const DEFAULT_EPSILON_MOTION: f64 = 1e-6;

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            parts_per_limb: 20,
            stroke_half_width: 1.0,
            epsilon_motion: DEFAULT_EPSILON_MOTION,
            layout: ChannelLayout::Individual,
            grid_stride: 1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.parts_per_limb < 1 {
            return Err(TmlError::Config("parts_per_limb must be >= 1".into()));
        }
        if !(self.stroke_half_width > 0.0 && self.stroke_half_width.is_finite()) {
            return Err(TmlError::Config("stroke_half_width must be > 0".into()));
        }
        if !(self.epsilon_motion >= 0.0 && self.epsilon_motion.is_finite()) {
            return Err(TmlError::Config("epsilon_motion must be >= 0".into()));
        }
        if self.grid_stride < 1 {
            return Err(TmlError::Config("grid_stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// A rasterized flow map. Planes are stored channel-major, x plane then
/// y plane, each row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMapGrid {
    width: usize,
    height: usize,
    stride: u32,
    layout: ChannelLayout,
    keying: ChannelKeying,
    source_channels: usize,
    planes: Vec<f64>,
    counts: Vec<u32>,
}

impl FlowMapGrid {
    /// All-zero grid. `source_channels` is the limb (or joint) count the
    /// grid was built for; accumulated grids still record it.
    pub fn zeros(
        width: usize,
        height: usize,
        layout: ChannelLayout,
        source_channels: usize,
    ) -> Self {
        let channels = match layout {
            ChannelLayout::Individual => source_channels,
            ChannelLayout::Accumulated => 1,
        };
        FlowMapGrid {
            width,
            height,
            stride: 1,
            layout,
            keying: ChannelKeying::Limb,
            source_channels,
            planes: vec![0.0; 2 * channels * width * height],
            counts: vec![0; channels * width * height],
        }
    }

    /// Builds a grid from raw planes (as read from disk). Contributor
    /// counts are not stored on disk; they are reconstructed as 1 for
    /// every non-zero vector.
    pub fn from_planes(
        width: usize,
        height: usize,
        layout: ChannelLayout,
        source_channels: usize,
        planes: Vec<f64>,
    ) -> Result<Self> {
        let mut g = Self::zeros(width, height, layout, source_channels);
        if planes.len() != g.planes.len() {
            return Err(TmlError::Truncated {
                expected: g.planes.len(),
                found: planes.len(),
            });
        }
        g.planes = planes;
        let cells = width * height;
        for c in 0..g.channel_count() {
            for i in 0..cells {
                let nonzero = g.planes[2 * c * cells + i] != 0.0
                    || g.planes[(2 * c + 1) * cells + i] != 0.0;
                g.counts[c * cells + i] = nonzero as u32;
            }
        }
        Ok(g)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn layout(&self) -> ChannelLayout {
        self.layout
    }

    pub fn keying(&self) -> ChannelKeying {
        self.keying
    }

    pub fn set_keying(&mut self, keying: ChannelKeying) {
        self.keying = keying;
    }

    /// Limb (or joint) count of the model the grid was encoded for.
    pub fn source_channels(&self) -> usize {
        self.source_channels
    }

    /// Number of stored channels: `source_channels` for the individual
    /// layout, 1 for accumulated.
    pub fn channel_count(&self) -> usize {
        match self.layout {
            ChannelLayout::Individual => self.source_channels,
            ChannelLayout::Accumulated => 1,
        }
    }

    pub fn plane_count(&self) -> usize {
        2 * self.channel_count()
    }

    pub fn planes(&self) -> &[f64] {
        &self.planes
    }

    fn cell_offset(&self, cx: usize, cy: usize) -> usize {
        cy * self.width + cx
    }

    pub fn vector(&self, channel: usize, cx: usize, cy: usize) -> Vec2 {
        let cells = self.width * self.height;
        let i = self.cell_offset(cx, cy);
        Vec2::new(
            self.planes[2 * channel * cells + i],
            self.planes[(2 * channel + 1) * cells + i],
        )
    }

    pub fn contributor_count(&self, channel: usize, cx: usize, cy: usize) -> u32 {
        self.counts[channel * self.width * self.height + self.cell_offset(cx, cy)]
    }

    /// Pixel position of a cell centre.
    pub fn cell_center(&self, cx: usize, cy: usize) -> Vec2 {
        Vec2::new(
            (cx as u64 * self.stride as u64) as f64,
            (cy as u64 * self.stride as u64) as f64,
        )
    }

    /// Vector of the cell nearest to pixel position `p`; zero off-grid.
    pub fn sample_nearest(&self, channel: usize, p: Vec2) -> Vec2 {
        let s = self.stride as f64;
        let (fx, fy) = ((p.x / s).round(), (p.y / s).round());
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return Vec2::zeros();
        }
        self.vector(channel, fx as usize, fy as usize)
    }

    /// Bilinear interpolation between the four surrounding cell centres;
    /// off-grid neighbours count as zero.
    pub fn sample_bilinear(&self, channel: usize, p: Vec2) -> Vec2 {
        let s = self.stride as f64;
        let (gx, gy) = (p.x / s, p.y / s);
        let (x0, y0) = (gx.floor(), gy.floor());
        let (tx, ty) = (gx - x0, gy - y0);
        let mut acc = Vec2::zeros();
        for (dx, wx) in [(0.0, 1.0 - tx), (1.0, tx)] {
            for (dy, wy) in [(0.0, 1.0 - ty), (1.0, ty)] {
                let (cx, cy) = (x0 + dx, y0 + dy);
                if cx < 0.0 || cy < 0.0 || cx >= self.width as f64 || cy >= self.height as f64 {
                    continue;
                }
                acc += self.vector(channel, cx as usize, cy as usize) * (wx * wy);
            }
        }
        acc
    }

    /// Number of cells with a non-zero vector in any channel.
    pub fn nonzero_cells(&self) -> usize {
        (0..self.height)
            .flat_map(|cy| (0..self.width).map(move |cx| (cx, cy)))
            .filter(|&(cx, cy)| {
                (0..self.channel_count()).any(|c| self.vector(c, cx, cy) != Vec2::zeros())
            })
            .count()
    }

    pub fn is_all_zero(&self) -> bool {
        self.planes.iter().all(|&v| v == 0.0)
    }

    /// Cell-wise negation.
    pub fn negated(&self) -> FlowMapGrid {
        let mut g = self.clone();
        for v in &mut g.planes {
            *v = -*v;
        }
        g
    }
}

/// Per-cell sums and contributor counts while a grid is being built.
struct FlowAccumulator {
    grid: FlowMapGrid,
}

impl FlowAccumulator {
    fn new(width: usize, height: usize, stride: u32, channels: usize) -> Self {
        let mut grid = FlowMapGrid::zeros(width, height, ChannelLayout::Individual, channels);
        grid.stride = stride;
        FlowAccumulator { grid }
    }

    fn add(&mut self, channel: usize, cx: usize, cy: usize, v: Vec2) {
        let g = &mut self.grid;
        let cells = g.width * g.height;
        let i = g.cell_offset(cx, cy);
        g.planes[2 * channel * cells + i] += v.x;
        g.planes[(2 * channel + 1) * cells + i] += v.y;
        g.counts[channel * cells + i] += 1;
    }

    fn finish(mut self) -> FlowMapGrid {
        let g = &mut self.grid;
        let cells = g.width * g.height;
        for c in 0..g.source_channels {
            for i in 0..cells {
                let n = g.counts[c * cells + i];
                if n > 1 {
                    g.planes[2 * c * cells + i] /= n as f64;
                    g.planes[(2 * c + 1) * cells + i] /= n as f64;
                }
            }
        }
        self.grid
    }
}

/// One separated part of a limb, anchored in both frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimbPart {
    /// Anchor in the later frame.
    pub anchor_t1: Vec2,
    /// Anchor in the earlier frame.
    pub anchor_t2: Vec2,
    pub part: usize,
    pub limb: usize,
    pub person: usize,
}

/// `n` anchors at the midpoints of `n` equal sub-segments of `a → b`.
pub fn subdivide_limb(a: Vec2, b: Vec2, n: usize) -> Vec<Vec2> {
    (0..n)
        .map(|i| a + (b - a) * ((i as f64 + 0.5) / n as f64))
        .collect()
}

/// Unit vector from `s2` to `s1`, or zero when they are within `eps`.
pub fn part_unit_vector(s1: Vec2, s2: Vec2, eps: f64) -> Vec2 {
    let d = s1 - s2;
    let norm = d.norm();
    if norm > eps {
        d / norm
    } else {
        Vec2::zeros()
    }
}

/// Distance from `p` to segment `a-b`. Endpoints are put in a canonical
/// order first so the result does not depend on segment direction.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let (a, b) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

fn rasterize_segment(acc: &mut FlowAccumulator, channel: usize, a: Vec2, b: Vec2, v: Vec2, half_width: f64) {
    let g = &acc.grid;
    if g.width == 0 || g.height == 0 {
        return;
    }
    let s = g.stride as f64;
    let lo_x = ((a.x.min(b.x) - half_width) / s).ceil().max(0.0);
    let hi_x = ((a.x.max(b.x) + half_width) / s).floor().min(g.width as f64 - 1.0);
    let lo_y = ((a.y.min(b.y) - half_width) / s).ceil().max(0.0);
    let hi_y = ((a.y.max(b.y) + half_width) / s).floor().min(g.height as f64 - 1.0);
    if !(lo_x <= hi_x && lo_y <= hi_y) {
        return;
    }
    for cy in lo_y as usize..=hi_y as usize {
        for cx in lo_x as usize..=hi_x as usize {
            let center = acc.grid.cell_center(cx, cy);
            if point_segment_distance(center, a, b) < half_width {
                acc.add(channel, cx, cy, v);
            }
        }
    }
}

/// Adds one contribution of `v` to channel `part.limb` in every cell within
/// `half_width` of the part's motion segment. Off-grid cells are clipped.
fn rasterize_part(acc: &mut FlowAccumulator, part: &LimbPart, v: Vec2, half_width: f64) {
    rasterize_segment(acc, part.limb, part.anchor_t1, part.anchor_t2, v, half_width);
}

/// Summary of what went into one encoding.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EncodeStats {
    pub parts: usize,
    pub moving_parts: usize,
    /// Mean anchor displacement over all parts, pixels.
    pub mean_stroke_length: f64,
}

fn grid_dims(frame: &FramePoses, stride: u32) -> (usize, usize) {
    let s = stride as usize;
    (
        (frame.image_size.0 as usize).div_ceil(s),
        (frame.image_size.1 as usize).div_ceil(s),
    )
}

fn check_pairing(later: &FramePoses, earlier: &FramePoses, pairing: &[(usize, usize)]) -> Result<()> {
    if later.image_size != earlier.image_size {
        return Err(TmlError::InvalidSequence(format!(
            "frames {} and {} have different image sizes",
            later.frame_index, earlier.frame_index
        )));
    }
    for &(p1, p2) in pairing {
        if p1 >= later.poses.len() || p2 >= earlier.poses.len() {
            return Err(TmlError::InvalidSequence(format!(
                "pairing ({p1}, {p2}) out of range"
            )));
        }
    }
    Ok(())
}

fn finish_layout(grid: FlowMapGrid, layout: ChannelLayout) -> FlowMapGrid {
    match layout {
        ChannelLayout::Individual => grid,
        ChannelLayout::Accumulated => accumulate_channels(&grid),
    }
}

/// Encodes the TML between `later` and `earlier`. `pairing` lists
/// `(person in later, person in earlier)`. Vectors point from the earlier
/// position to the later one.
pub fn encode_tml(
    later: &FramePoses,
    earlier: &FramePoses,
    pairing: &[(usize, usize)],
    topo: &SkeletonTopology,
    cfg: &EncoderConfig,
) -> Result<FlowMapGrid> {
    encode_tml_with_stats(later, earlier, pairing, topo, cfg).map(|(g, _)| g)
}

pub fn encode_tml_with_stats(
    later: &FramePoses,
    earlier: &FramePoses,
    pairing: &[(usize, usize)],
    topo: &SkeletonTopology,
    cfg: &EncoderConfig,
) -> Result<(FlowMapGrid, EncodeStats)> {
    cfg.validate()?;
    check_pairing(later, earlier, pairing)?;
    let (w, h) = grid_dims(later, cfg.grid_stride);
    let mut acc = FlowAccumulator::new(w, h, cfg.grid_stride, topo.limb_count());
    let mut stats = EncodeStats::default();
    let mut total_len = 0.0;

    for &(p1, p2) in pairing {
        let (now, before) = (&later.poses[p1], &earlier.poses[p2]);
        for (l, &(ja, jb)) in topo.limbs.iter().enumerate() {
            let ends = (
                now.visible_joint(ja),
                now.visible_joint(jb),
                before.visible_joint(ja),
                before.visible_joint(jb),
            );
            let (Some(a1), Some(b1), Some(a2), Some(b2)) = ends else {
                continue;
            };
            let anchors_t1 = subdivide_limb(a1.pos(), b1.pos(), cfg.parts_per_limb);
            let anchors_t2 = subdivide_limb(a2.pos(), b2.pos(), cfg.parts_per_limb);
            for (n, (&s1, &s2)) in anchors_t1.iter().zip(&anchors_t2).enumerate() {
                let part = LimbPart {
                    anchor_t1: s1,
                    anchor_t2: s2,
                    part: n,
                    limb: l,
                    person: p1,
                };
                let v = part_unit_vector(s1, s2, cfg.epsilon_motion);
                stats.parts += 1;
                total_len += (s1 - s2).norm();
                if v != Vec2::zeros() {
                    stats.moving_parts += 1;
                    rasterize_part(&mut acc, &part, v, cfg.stroke_half_width);
                }
            }
        }
    }
    if stats.parts > 0 {
        stats.mean_stroke_length = total_len / stats.parts as f64;
    }
    Ok((finish_layout(acc.finish(), cfg.layout), stats))
}

/// Joint-Flow baseline: one stroke per joint between its two positions,
/// one channel per joint.
pub fn encode_jointflow(
    later: &FramePoses,
    earlier: &FramePoses,
    pairing: &[(usize, usize)],
    topo: &SkeletonTopology,
    cfg: &EncoderConfig,
) -> Result<FlowMapGrid> {
    cfg.validate()?;
    check_pairing(later, earlier, pairing)?;
    let (w, h) = grid_dims(later, cfg.grid_stride);
    let mut acc = FlowAccumulator::new(w, h, cfg.grid_stride, topo.joint_count());
    for &(p1, p2) in pairing {
        for j in 0..topo.joint_count() {
            let (Some(now), Some(before)) = (
                later.poses[p1].visible_joint(j),
                earlier.poses[p2].visible_joint(j),
            ) else {
                continue;
            };
            let v = part_unit_vector(now.pos(), before.pos(), cfg.epsilon_motion);
            if v != Vec2::zeros() {
                rasterize_segment(&mut acc, j, now.pos(), before.pos(), v, cfg.stroke_half_width);
            }
        }
    }
    let mut grid = acc.finish();
    grid.keying = ChannelKeying::Joint;
    Ok(finish_layout(grid, cfg.layout))
}

/// Collapses an individual-layout grid into two planes: per cell, the mean
/// over channels that received at least one contribution. Grids that are
/// already accumulated are returned unchanged.
pub fn accumulate_channels(g: &FlowMapGrid) -> FlowMapGrid {
    if g.layout == ChannelLayout::Accumulated {
        return g.clone();
    }
    let mut out = FlowMapGrid::zeros(g.width, g.height, ChannelLayout::Accumulated, g.source_channels);
    out.stride = g.stride;
    out.keying = g.keying;
    let cells = g.width * g.height;
    for i in 0..cells {
        let mut sum = Vec2::zeros();
        let mut active = 0u32;
        let mut total = 0u32;
        for c in 0..g.source_channels {
            let n = g.counts[c * cells + i];
            if n > 0 {
                active += 1;
                total += n;
                sum += Vec2::new(g.planes[2 * c * cells + i], g.planes[(2 * c + 1) * cells + i]);
            }
        }
        if active > 0 {
            let mean = sum / active as f64;
            out.planes[i] = mean.x;
            out.planes[cells + i] = mean.y;
            out.counts[i] = total;
        }
    }
    out
}
