//! Run configuration: every tunable of the pipeline in one TOML file.
//!
//! ```toml
//! [encoder]
//! parts_per_limb = 20
//! stroke_half_width = 1.0
//! epsilon_motion = 1e-6
//! layout = "individual"      # or "accumulated"
//! grid_stride = 1
//!
//! [score]
//! alpha = 0.5
//! integral_samples = 20
//! distance_scale = 32.0
//! interpolation = "nearest"  # or "bilinear"
//!
//! [tracker]
//! score_threshold = 0.1
//! nms = true
//! nms_radius = 5.0
//! refine = true
//!
//! [sampler]
//! max_stride = 4
//! rng_seed = 0
//! scale_range = [0.7, 1.3]
//! rotation_range = [-40.0, 40.0]
//! crop_size = [256, 256]
//!
//! [scene]
//! people = 2
//! frames = 10
//! image_size = [256, 192]
//! motion = "crossing"
//! speed = 10.0
//! jitter_sigma = 0.0
//! dropout_prob = 0.0
//! seed = 0
//! person_height = 64.0
//! ```
//!
//! Every key is optional; missing keys keep their defaults and unknown keys
//! are rejected.

use std::path::Path;

use serde::Deserialize;

use crate::encode::ChannelLayout;
use crate::error::{Result, TmlError};
use crate::sampler::StrideConfig;
use crate::scoring::Interpolation;
use crate::synth::{MotionPreset, SceneConfig};
use crate::tracker::TrackerConfig;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    /// Includes the encoder and score settings.
    pub tracker: TrackerConfig,
    pub sampler: StrideConfig,
    pub scene: SceneConfig,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawEncoder {
    parts_per_limb: Option<usize>,
    stroke_half_width: Option<f64>,
    epsilon_motion: Option<f64>,
    layout: Option<String>,
    grid_stride: Option<u32>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawScore {
    alpha: Option<f64>,
    integral_samples: Option<usize>,
    distance_scale: Option<f64>,
    interpolation: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTracker {
    score_threshold: Option<f64>,
    nms: Option<bool>,
    nms_radius: Option<f64>,
    refine: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSampler {
    max_stride: Option<usize>,
    rng_seed: Option<u64>,
    scale_range: Option<(f64, f64)>,
    rotation_range: Option<(f64, f64)>,
    crop_size: Option<(u32, u32)>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawScene {
    people: Option<usize>,
    frames: Option<usize>,
    image_size: Option<(u32, u32)>,
    motion: Option<String>,
    speed: Option<f64>,
    jitter_sigma: Option<f64>,
    dropout_prob: Option<f64>,
    seed: Option<u64>,
    person_height: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(default)]
    encoder: RawEncoder,
    #[serde(default)]
    score: RawScore,
    #[serde(default)]
    tracker: RawTracker,
    #[serde(default)]
    sampler: RawSampler,
    #[serde(default)]
    scene: RawScene,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

pub fn parse_layout(s: &str) -> Result<ChannelLayout> {
    match s {
        "individual" => Ok(ChannelLayout::Individual),
        "accumulated" => Ok(ChannelLayout::Accumulated),
        _ => Err(TmlError::Config(format!("unknown layout `{s}` (individual | accumulated)"))),
    }
}

pub fn parse_interpolation(s: &str) -> Result<Interpolation> {
    match s {
        "nearest" => Ok(Interpolation::Nearest),
        "bilinear" => Ok(Interpolation::Bilinear),
        _ => Err(TmlError::Config(format!("unknown interpolation `{s}` (nearest | bilinear)"))),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawRun = toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|s| {
                    let line = text[..s.start].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".into());
            TmlError::parse(location, e.message())
        })?;
        let mut c = RunConfig::default();

        let e = &mut c.tracker.encoder;
        set(&mut e.parts_per_limb, raw.encoder.parts_per_limb);
        set(&mut e.stroke_half_width, raw.encoder.stroke_half_width);
        set(&mut e.epsilon_motion, raw.encoder.epsilon_motion);
        set(&mut e.layout, raw.encoder.layout.as_deref().map(parse_layout).transpose()?);
        set(&mut e.grid_stride, raw.encoder.grid_stride);

        let s = &mut c.tracker.score;
        set(&mut s.alpha, raw.score.alpha);
        set(&mut s.integral_samples, raw.score.integral_samples);
        set(&mut s.distance_scale, raw.score.distance_scale);
        set(&mut s.interpolation, raw.score.interpolation.as_deref().map(parse_interpolation).transpose()?);

        let t = &mut c.tracker;
        set(&mut t.score_threshold, raw.tracker.score_threshold);
        set(&mut t.nms, raw.tracker.nms);
        set(&mut t.nms_radius, raw.tracker.nms_radius);
        set(&mut t.refine, raw.tracker.refine);

        let p = &mut c.sampler;
        set(&mut p.max_stride, raw.sampler.max_stride);
        set(&mut p.rng_seed, raw.sampler.rng_seed);
        set(&mut p.scale_range, raw.sampler.scale_range);
        set(&mut p.rotation_range, raw.sampler.rotation_range);
        set(&mut p.crop_size, raw.sampler.crop_size);

        let sc = &mut c.scene;
        set(&mut sc.people, raw.scene.people);
        set(&mut sc.frames, raw.scene.frames);
        set(&mut sc.image_size, raw.scene.image_size);
        set(&mut sc.motion, raw.scene.motion.as_deref().map(str::parse::<MotionPreset>).transpose()?);
        set(&mut sc.speed, raw.scene.speed);
        set(&mut sc.jitter_sigma, raw.scene.jitter_sigma);
        set(&mut sc.dropout_prob, raw.scene.dropout_prob);
        set(&mut sc.seed, raw.scene.seed);
        set(&mut sc.person_height, raw.scene.person_height);
        Ok(c)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TmlError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Validates every section.
    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.sampler.validate()?;
        self.scene.validate()
    }
}
