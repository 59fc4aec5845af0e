//! Core estimators and the fixed-budget RANSAC loop they share.
//!
//! A [`CoreEstimator`] turns one non-minimal sample into one hypothesis. The
//! pipeline does not care how: relative pose and PnP run [`ransac`] over a
//! [`MinimalSolver`], registration runs the PCR-99 variant in [`pcr`].

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EssentialMatrix, RigidTransform, Rotation};
use crate::rng::rng_from_seed;

pub mod pcr;
pub mod pnp;
pub mod relpose;

pub use pcr::{Pair3D3D, Pcr99Config, PcrEstimator, Termination};
pub use pnp::{Pair3D2D, PnpEstimator};
pub use relpose::{Pair2D2D, RelPoseEstimator};

/// Model produced by a core estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Model {
    /// Two-view model: essential matrix plus its cheirality-selected pose
    /// (unit-norm translation).
    Relative {
        essential: EssentialMatrix,
        pose: RigidTransform,
    },
    /// Camera pose (world to camera) or source-to-target registration.
    Rigid(RigidTransform),
}

impl Model {
    pub fn pose(&self) -> &RigidTransform {
        match self {
            Model::Relative { pose, .. } => pose,
            Model::Rigid(pose) => pose,
        }
    }

    pub fn rotation(&self) -> Rotation {
        self.pose().rotation
    }
}

/// Result of estimating a model on one sample.
///
/// `residuals[i] < threshold` holds exactly for `i` in `inlier_indices`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutput<M> {
    pub model: M,
    /// Sorted indices into the sample.
    pub inlier_indices: Vec<usize>,
    pub residuals: Vec<f64>,
    /// Minimal draws consumed.
    pub iterations_used: usize,
    /// Draw at which the returned model was produced.
    pub found_at: usize,
}

impl<M> EstimatorOutput<M> {
    pub fn inlier_count(&self) -> usize {
        self.inlier_indices.len()
    }

    pub fn inlier_residual_sum(&self) -> f64 {
        self.inlier_indices.iter().map(|&i| self.residuals[i]).sum()
    }

    /// Fewer than twice the minimal sample size in support: little more
    /// than the minimal sample itself agrees with the model.
    pub fn is_low_support(&self, minimal_size: usize) -> bool {
        self.inlier_count() < 2 * minimal_size
    }

    pub fn map_model<N>(self, f: impl FnOnce(M) -> N) -> EstimatorOutput<N> {
        EstimatorOutput {
            model: f(self.model),
            inlier_indices: self.inlier_indices,
            residuals: self.residuals,
            iterations_used: self.iterations_used,
            found_at: self.found_at,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Fixed number of minimal draws.
    pub iterations: usize,
    pub inlier_threshold: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            inlier_threshold: 1.0,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("RANSAC needs at least one iteration".into()));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "inlier threshold must be positive, got {}",
                self.inlier_threshold
            )));
        }
        Ok(())
    }
}

/// A minimal solver plus its residual.
pub trait MinimalSolver {
    type Datum;
    type Hypothesis: Clone;

    fn sample_size(&self) -> usize;

    /// Appends every solution for the minimal set `minimal` to `out`.
    fn solve(&self, data: &[Self::Datum], minimal: &[usize], out: &mut Vec<Self::Hypothesis>);

    fn residual(&self, hypothesis: &Self::Hypothesis, datum: &Self::Datum) -> f64;
}

/// Ordering used everywhere a single winner is picked from candidates:
/// more inliers, then smaller inlier residual sum, then earlier draw.
fn better(count: usize, sum: f64, at: usize, best: (usize, f64, usize)) -> bool {
    count > best.0 || (count == best.0 && (sum < best.1 || (sum == best.1 && at < best.2)))
}

pub fn tie_break<M>(candidates: &[EstimatorOutput<M>]) -> Option<&EstimatorOutput<M>> {
    let mut best: Option<&EstimatorOutput<M>> = None;
    for c in candidates {
        let replace = match best {
            None => true,
            Some(b) => better(
                c.inlier_count(),
                c.inlier_residual_sum(),
                c.found_at,
                (b.inlier_count(), b.inlier_residual_sum(), b.found_at),
            ),
        };
        if replace {
            best = Some(c);
        }
    }
    best
}

/// Fixed-budget RANSAC: exactly `config.iterations` minimal draws, every
/// solver root scored on the whole sample, winner chosen by [`tie_break`]
/// order.
pub fn ransac<S: MinimalSolver>(
    data: &[S::Datum],
    solver: &S,
    config: &RansacConfig,
) -> Result<EstimatorOutput<S::Hypothesis>> {
    config.validate()?;
    let k = solver.sample_size();
    let n = data.len();
    if n < k {
        return Err(Error::DatasetTooSmall { n, sample_size: k });
    }
    let mut rng = rng_from_seed(config.seed);
    let mut solutions = Vec::new();
    let mut best: Option<(usize, f64, usize, S::Hypothesis)> = None;
    for it in 0..config.iterations {
        let minimal = index::sample(&mut rng, n, k).into_vec();
        solutions.clear();
        solver.solve(data, &minimal, &mut solutions);
        for h in solutions.drain(..) {
            let mut count = 0;
            let mut sum = 0.0;
            for d in data {
                let r = solver.residual(&h, d);
                if r < config.inlier_threshold {
                    count += 1;
                    sum += r;
                }
            }
            let replace = match &best {
                None => true,
                Some((c, s, a, _)) => better(count, sum, it, (*c, *s, *a)),
            };
            if replace {
                best = Some((count, sum, it, h));
            }
        }
    }
    let (count, _, found_at, model) = best.ok_or_else(|| {
        Error::EstimationFailed("no minimal sample produced a model".into())
    })?;
    if count < k {
        return Err(Error::EstimationFailed(format!(
            "best model has {count} inliers, fewer than the minimal {k}"
        )));
    }
    let residuals: Vec<f64> = data.iter().map(|d| solver.residual(&model, d)).collect();
    let inlier_indices = residuals
        .iter()
        .enumerate()
        .filter(|(_, &r)| r < config.inlier_threshold)
        .map(|(i, _)| i)
        .collect();
    Ok(EstimatorOutput {
        model,
        inlier_indices,
        residuals,
        iterations_used: config.iterations,
        found_at,
    })
}

/// One robust estimator run per non-minimal sample.
pub trait CoreEstimator: Sync {
    type Datum: Clone + Send + Sync;

    fn name(&self) -> &'static str;

    fn minimal_size(&self) -> usize;

    /// Threshold separating inliers from outliers, in residual units.
    fn inlier_threshold(&self) -> f64;

    /// Estimates a model on `sample`. `budget_scale` multiplies the draw
    /// budget (the fixed-sample mode passes `m`).
    fn estimate(
        &self,
        sample: &[Self::Datum],
        seed: u64,
        budget_scale: usize,
    ) -> Result<EstimatorOutput<Model>>;

    fn residual(&self, model: &Model, datum: &Self::Datum) -> f64;
}
