//! Multi-stride frame-pair sampling and paired geometric augmentation.
//!
//! Every draw is a pure function of `(rng_seed, draw_index)`: each purpose
//! (pair, geometry, person) gets its own ChaCha stream keyed by the draw
//! index, so draws can be taken in any order or in parallel.

use log::debug;
use nalgebra::Rotation2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, TmlError};
use crate::pose::{FramePoses, Pose, Sequence, Vec2};

pub const DEFAULT_MAX_STRIDE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct StrideConfig {
    /// Largest frame gap K between the two frames of a pair.
    pub max_stride: usize,
    pub rng_seed: u64,
    pub scale_range: (f64, f64),
    /// Degrees, (min, max).
    pub rotation_range: (f64, f64),
    /// (width, height) in pixels.
    pub crop_size: (u32, u32),
}

impl Default for StrideConfig {
    fn default() -> Self {
        StrideConfig {
            max_stride: DEFAULT_MAX_STRIDE,
            rng_seed: 0,
            scale_range: (0.7, 1.3),
            rotation_range: (-40.0, 40.0),
            crop_size: (256, 256),
        }
    }
}

impl StrideConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TmlError::Config(m.to_string()));
        if self.max_stride < 1 {
            return bad("max_stride must be at least 1");
        }
        let (s0, s1) = self.scale_range;
        if !(s0.is_finite() && s1.is_finite() && s0 > 0.0 && s0 <= s1) {
            return bad("scale_range must satisfy 0 < min <= max");
        }
        let (r0, r1) = self.rotation_range;
        if !(r0.is_finite() && r1.is_finite() && r0 <= r1) {
            return bad("rotation_range must satisfy min <= max");
        }
        if self.crop_size.0 == 0 || self.crop_size.1 == 0 {
            return bad("crop_size must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Purpose {
    Pair = 1,
    Geometry = 2,
    Person = 3,
}

fn rng_for(seed: u64, purpose: Purpose, draw_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (purpose as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(draw_index);
    rng
}

/// Draws `(t1, t2)` with `t1 < t2`. The stride is uniform over
/// `1..=min(K, seq_len - 1)`, then `t1` is uniform over the starts that fit.
pub fn sample_frame_pair(seq_len: usize, cfg: &StrideConfig, draw_index: u64) -> Result<(usize, usize)> {
    if seq_len < 2 {
        return Err(TmlError::NoPairAvailable(seq_len));
    }
    let k = cfg.max_stride.max(1).min(seq_len - 1);
    let mut rng = rng_for(cfg.rng_seed, Purpose::Pair, draw_index);
    let stride = rng.random_range(1..=k);
    let t1 = rng.random_range(0..seq_len - stride);
    Ok((t1, t1 + stride))
}

/// Similarity transform: scale about `center`, rotate about `center`, then
/// subtract the crop origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairTransform {
    pub center: [f64; 2],
    pub scale: f64,
    pub rotation_deg: f64,
    pub crop_origin: [f64; 2],
}

impl PairTransform {
    pub fn identity() -> Self {
        PairTransform {
            center: [0.0, 0.0],
            scale: 1.0,
            rotation_deg: 0.0,
            crop_origin: [0.0, 0.0],
        }
    }

    fn rotation(&self) -> Rotation2<f64> {
        Rotation2::new(self.rotation_deg.to_radians())
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        let c = Vec2::from(self.center);
        self.rotation() * ((p - c) * self.scale) + c - Vec2::from(self.crop_origin)
    }

    pub fn invert(&self, q: Vec2) -> Vec2 {
        let c = Vec2::from(self.center);
        self.rotation().inverse() * (q + Vec2::from(self.crop_origin) - c) / self.scale + c
    }
}

fn transform_pose(pose: &Pose, tf: &PairTransform, crop: (u32, u32)) -> Pose {
    let inside = |p: Vec2| p.x >= 0.0 && p.y >= 0.0 && p.x < crop.0 as f64 && p.y < crop.1 as f64;
    Pose {
        joints: pose
            .joints
            .iter()
            .map(|j| {
                j.map(|mut c| {
                    let q = tf.apply(c.pos());
                    c.x = q.x;
                    c.y = q.y;
                    c.visible &= inside(q);
                    c
                })
            })
            .collect(),
        track_id: pose.track_id,
    }
}

fn transform_frame(frame: &FramePoses, tf: &PairTransform, crop: (u32, u32)) -> FramePoses {
    FramePoses {
        frame_index: frame.frame_index,
        poses: frame.poses.iter().map(|p| transform_pose(p, tf, crop)).collect(),
        image_size: crop,
    }
}

/// Applies the same transform to both frames. Output frames have the crop
/// size as image size; keypoints leaving the crop lose visibility.
pub fn paired_transform(
    pair: (&FramePoses, &FramePoses),
    tf: &PairTransform,
    crop_size: (u32, u32),
) -> (FramePoses, FramePoses) {
    (transform_frame(pair.0, tf, crop_size), transform_frame(pair.1, tf, crop_size))
}

/// Crop origin centering `center` in a `crop` window, shifted to stay inside
/// an `image`-sized frame.
pub fn clamp_crop_origin(center: Vec2, crop: (u32, u32), image: (u32, u32)) -> Vec2 {
    let want = center - Vec2::new(crop.0 as f64, crop.1 as f64) / 2.0;
    let hi = Vec2::new(
        (image.0 as f64 - crop.0 as f64).max(0.0),
        (image.1 as f64 - crop.1 as f64).max(0.0),
    );
    let got = Vec2::new(want.x.clamp(0.0, hi.x), want.y.clamp(0.0, hi.y));
    if got != want {
        debug!(
            "crop window clipped at border: person centre offset ({:.2}, {:.2}) from crop centre",
            want.x - got.x,
            want.y - got.y
        );
    }
    got
}

fn pick_person(frame: &FramePoses, cfg: &StrideConfig, draw_index: u64) -> Result<(usize, Vec2)> {
    let candidates: Vec<(usize, Vec2)> = frame
        .poses
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.centroid().map(|c| (i, c)))
        .collect();
    if candidates.is_empty() {
        return Err(TmlError::EmptyFrame(frame.frame_index as usize));
    }
    let mut rng = rng_for(cfg.rng_seed, Purpose::Person, draw_index);
    Ok(candidates[rng.random_range(0..candidates.len())])
}

/// Crops both frames around a person picked uniformly from the first frame.
/// Returns the cropped pair and the crop origin.
pub fn random_person_crop(
    pair: (&FramePoses, &FramePoses),
    cfg: &StrideConfig,
    draw_index: u64,
) -> Result<(FramePoses, FramePoses, Vec2)> {
    let (_, centroid) = pick_person(pair.0, cfg, draw_index)?;
    let origin = clamp_crop_origin(centroid, cfg.crop_size, pair.0.image_size);
    let tf = PairTransform {
        crop_origin: origin.into(),
        ..PairTransform::identity()
    };
    let (a, b) = paired_transform(pair, &tf, cfg.crop_size);
    Ok((a, b, origin))
}

/// One augmented training pair with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentRecord {
    pub draw_index: u64,
    pub t1: usize,
    pub t2: usize,
    pub frame_index_1: u64,
    pub frame_index_2: u64,
    pub person: usize,
    pub transform: PairTransform,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Samples a pair, draws scale and rotation, then crops around a random
/// person of the first frame after scaling and rotation.
pub fn augment_sample(seq: &Sequence, cfg: &StrideConfig, draw_index: u64) -> Result<(AugmentRecord, FramePoses, FramePoses)> {
    cfg.validate()?;
    let (t1, t2) = sample_frame_pair(seq.len(), cfg, draw_index)?;
    let (f1, f2) = (&seq.frames[t1], &seq.frames[t2]);
    let mut rng = rng_for(cfg.rng_seed, Purpose::Geometry, draw_index);
    let scale = uniform(&mut rng, cfg.scale_range);
    let rotation_deg = uniform(&mut rng, cfg.rotation_range);
    let (w, h) = f1.image_size;
    let mut tf = PairTransform {
        center: [w as f64 / 2.0, h as f64 / 2.0],
        scale,
        rotation_deg,
        crop_origin: [0.0, 0.0],
    };
    let (person, centroid) = pick_person(f1, cfg, draw_index)?;
    // the crop is centred on the person, so no border clamping applies here
    let c = tf.apply(centroid);
    tf.crop_origin = [c.x - cfg.crop_size.0 as f64 / 2.0, c.y - cfg.crop_size.1 as f64 / 2.0];
    let (a, b) = paired_transform((f1, f2), &tf, cfg.crop_size);
    let record = AugmentRecord {
        draw_index,
        t1,
        t2,
        frame_index_1: f1.frame_index,
        frame_index_2: f2.frame_index,
        person,
        transform: tf,
    };
    Ok((record, a, b))
}
