//! Robust geometric model estimation over very large, heavily contaminated
//! correspondence sets.
//!
//! The pipeline draws `m` non-minimal samples from the dataset, runs a robust
//! core estimator independently on each one, and picks a final hypothesis with
//! a scoring rule. Three core estimators ship with the crate:
//!
//! - relative pose from 2D-2D matches (five-point solver in RANSAC, Sampson test),
//! - absolute pose from 3D-2D matches (P3P in RANSAC, reprojection test),
//! - rigid registration from 3D-3D matches (a PCR-99 variant with
//!   pairwise-distance scoring and triplet prescreening).
//!
//! [`experiment`] contains the Monte-Carlo harness and the mAA metric used to
//! compare scoring rules.

pub mod datagen;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod geometry;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod scoring;

pub use error::{Error, Result};
pub use estimator::{CoreEstimator, EstimatorOutput, Model, RansacConfig};
pub use geometry::{EssentialMatrix, RigidTransform, Rotation};
pub use pipeline::{run_nonsac, NonsacRun, PipelineConfig, TlpEvalSet};
pub use sampling::{SampleMode, SamplePlan, SampleSet};
pub use scoring::{HypothesisRecord, ScoringRule, Selection};
