//! Pose tracking with temporal flow maps for limbs (TML).

pub mod assignment;
pub mod config;
pub mod encode;
pub mod error;
pub mod io;
pub mod metrics;
pub mod pose;
pub mod sampler;
pub mod scoring;
pub mod skeleton;
pub mod synth;
pub mod tracker;

pub use error::{Result, TmlError};
