use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dataset smaller than sample size ({n} < {sample_size})")]
    DatasetTooSmall { n: usize, sample_size: usize },
    #[error("cannot partition {n} correspondences into {samples} disjoint samples of {sample_size}")]
    CannotPartition {
        n: usize,
        samples: usize,
        sample_size: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("estimation failed: {0}")]
    EstimationFailed(String),
    #[error("degenerate decomposition: no candidate pose places points in front of both cameras")]
    DegenerateDecomposition,
    #[error("degenerate triplet: source points are collinear or coincident")]
    DegenerateTriplet,
    #[error("pose sampling failed after {attempts} attempts")]
    PoseSamplingFailed { attempts: usize },
    #[error("insufficient input points: need {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("rule `{rule}`: {reason}")]
    Scoring { rule: String, reason: String },
    #[error("no viable hypothesis: all {0} sample estimations failed")]
    NoViableHypothesis(usize),
    #[error("PLY parse error at byte {offset}: {message}")]
    Ply { offset: u64, message: String },
    #[error("I/O error on {path:?}: {message}")]
    Io { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
