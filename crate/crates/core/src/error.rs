use std::path::PathBuf;

use thiserror::Error;

use crate::skeleton::TopologyViolation;

pub type Result<T> = std::result::Result<T, TmlError>;

#[derive(Debug, Error)]
pub enum TmlError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A document could not be parsed. `location` names the line/column or
    /// the field path of the offending value.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("unknown topology `{0}`")]
    UnknownTopology(String),

    #[error("invalid topology: {}", format_violations(.0))]
    InvalidTopology(Vec<TopologyViolation>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("not a TMLF file")]
    BadMagic,

    #[error("unsupported TMLF version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated flow-map payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("no pair available: sequence has {0} frame(s)")]
    NoPairAvailable(usize),

    #[error("frame {0} has no poses")]
    EmptyFrame(usize),

    #[error("infeasible scene layout: {0}")]
    InfeasibleLayout(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
}

impl TmlError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TmlError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        TmlError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

fn format_violations(v: &[TopologyViolation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
