//! Drawing the non-minimal samples.
//!
//! Two modes are supported. `Uniform` draws each sample independently
//! without replacement, so different samples may overlap. `Disjoint` cuts a
//! single random permutation prefix of length `m * N` into `m` blocks, which
//! reproduces the zero-overlap construction used to emulate an arbitrarily
//! large dataset.
//!
//! Sizing guidance: the sample size `N` should satisfy `N >= I_min / P_min`,
//! where `I_min` is the smallest inlier count and `P_min` the smallest inlier
//! ratio the core estimator handles reliably. Larger `N` shrinks the spread
//! of per-sample inlier ratios (std `sqrt(P(1-P)/N)`), which is the source
//! of the robustness gain.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SampleMode {
    #[default]
    Uniform,
    Disjoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    /// Number of non-minimal samples `m`.
    pub samples: usize,
    /// Points per sample `N`.
    pub sample_size: usize,
    pub mode: SampleMode,
    /// Reuse one drawn sample for every slot.
    pub fixed_sample: bool,
}

impl SamplePlan {
    pub fn new(samples: usize, sample_size: usize) -> Self {
        Self {
            samples,
            sample_size,
            mode: SampleMode::Uniform,
            fixed_sample: false,
        }
    }

    pub fn disjoint(mut self) -> Self {
        self.mode = SampleMode::Disjoint;
        self
    }

    pub fn with_fixed_sample(mut self, fixed: bool) -> Self {
        self.fixed_sample = fixed;
        self
    }

    /// Checks the plan against a dataset of `n` correspondences and an
    /// estimator with the given minimal sample size.
    pub fn validate(&self, n: usize, minimal_size: usize) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidConfig("need at least one sample".into()));
        }
        if self.sample_size < minimal_size {
            return Err(Error::InvalidConfig(format!(
                "sample size {} is below the minimal size {}",
                self.sample_size, minimal_size
            )));
        }
        if n < self.sample_size {
            return Err(Error::DatasetTooSmall {
                n,
                sample_size: self.sample_size,
            });
        }
        let needed = if self.fixed_sample { 1 } else { self.samples };
        if self.mode == SampleMode::Disjoint && n < needed * self.sample_size {
            return Err(Error::CannotPartition {
                n,
                samples: self.samples,
                sample_size: self.sample_size,
            });
        }
        Ok(())
    }
}

/// The drawn samples, in sample-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub indices: Vec<Vec<usize>>,
    /// Per-sample seed handed to the core estimator.
    pub seeds: Vec<u64>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Sorted, de-duplicated union of all sample indices.
    pub fn union(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.indices.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Draws `plan.samples` index lists into a dataset of `n` items.
pub fn draw_samples(plan: &SamplePlan, n: usize, seed: u64) -> Result<SampleSet> {
    plan.validate(n, 1)?;
    let m = plan.samples;
    let size = plan.sample_size;
    let seeds: Vec<u64> = (0..m as u64).map(|i| derive_seed(seed, i)).collect();

    let draw_one = |stream: u64| -> Vec<usize> {
        let mut rng = rng_from_seed(derive_seed(seed ^ 0x5a5a_5a5a, stream));
        index::sample(&mut rng, n, size).into_vec()
    };

    let indices = if plan.fixed_sample {
        vec![draw_one(0); m]
    } else {
        match plan.mode {
            SampleMode::Uniform => (0..m as u64).map(draw_one).collect(),
            SampleMode::Disjoint => {
                let mut rng = rng_from_seed(derive_seed(seed ^ 0x5a5a_5a5a, u64::MAX));
                let prefix = index::sample(&mut rng, n, m * size).into_vec();
                prefix.chunks(size).map(<[usize]>::to_vec).collect()
            }
        }
    };
    Ok(SampleSet { indices, seeds })
}

/// Empirical mean and standard deviation of the inlier proportion of a
/// uniform sample of `plan.sample_size`, over `draws` independent draws.
pub fn sample_inlier_proportion_stats(
    inlier_mask: &[bool],
    plan: &SamplePlan,
    seed: u64,
    draws: usize,
) -> Result<(f64, f64)> {
    if draws < 100 {
        return Err(Error::InvalidConfig(format!(
            "need at least 100 draws, got {draws}"
        )));
    }
    let n = inlier_mask.len();
    let single = SamplePlan::new(1, plan.sample_size);
    single.validate(n, 1)?;
    let proportions: Vec<f64> = (0..draws as u64)
        .map(|d| {
            let set = draw_samples(&single, n, derive_seed(seed, d))?;
            let hits = set.indices[0].iter().filter(|&&i| inlier_mask[i]).count();
            Ok(hits as f64 / plan.sample_size as f64)
        })
        .collect::<Result<_>>()?;
    let mean = proportions.iter().sum::<f64>() / draws as f64;
    let var = proportions.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    Ok((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_samples_partition_a_prefix() {
        let plan = SamplePlan::new(10, 1000).disjoint();
        let set = draw_samples(&plan, 10_000, 1).unwrap();
        assert_eq!(set.len(), 10);
        assert!(set.indices.iter().all(|s| s.len() == 1000));
        assert_eq!(set.union().len(), 10_000);
    }

    #[test]
    fn full_sample_is_a_permutation() {
        let set = draw_samples(&SamplePlan::new(1, 50), 50, 9).unwrap();
        let mut s = set.indices[0].clone();
        s.sort_unstable();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn draws_are_reproducible() {
        let plan = SamplePlan::new(3, 5);
        let a = draw_samples(&plan, 6, 42).unwrap();
        let b = draw_samples(&plan, 6, 42).unwrap();
        assert_eq!(a, b);
        for s in &a.indices {
            let mut d = s.clone();
            d.sort_unstable();
            d.dedup();
            assert_eq!(d.len(), 5);
            assert!(s.iter().all(|&i| i < 6));
        }
    }

    #[test]
    fn fixed_sample_repeats_one_sample() {
        let plan = SamplePlan::new(4, 10).with_fixed_sample(true);
        let set = draw_samples(&plan, 100, 3).unwrap();
        assert!(set.indices.iter().all(|s| *s == set.indices[0]));
        assert_eq!(set.seeds.len(), 4);
    }

    #[test]
    fn plan_errors() {
        assert_eq!(
            draw_samples(&SamplePlan::new(2, 10), 5, 0),
            Err(Error::DatasetTooSmall { n: 5, sample_size: 10 })
        );
        assert!(matches!(
            draw_samples(&SamplePlan::new(3, 10).disjoint(), 25, 0),
            Err(Error::CannotPartition { .. })
        ));
    }

    #[test]
    fn proportion_stats_extremes() {
        let plan = SamplePlan::new(1, 100);
        let none = vec![false; 1000];
        assert_eq!(sample_inlier_proportion_stats(&none, &plan, 1, 100).unwrap(), (0.0, 0.0));
        let all = vec![true; 1000];
        assert_eq!(sample_inlier_proportion_stats(&all, &plan, 1, 100).unwrap(), (1.0, 0.0));
        assert!(sample_inlier_proportion_stats(&all, &plan, 1, 99).is_err());
    }
}
