//! The NONSAC driver: draw `m` non-minimal samples, run the core estimator
//! on each independently, then let every requested rule pick a hypothesis
//! from the same set.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::CoreEstimator;
use crate::geometry::Rotation;
use crate::sampling::{draw_samples, SamplePlan, SampleSet};
use crate::scoring::{select, HypothesisRecord, ScoringRule, Selection, SelectionContext};

/// Random access to correspondences. Lets a sample be materialized from a
/// dataset that is never built in full (see `datagen::AllToAll`).
pub trait CorrespondenceSource<T>: Sync {
    fn len(&self) -> usize;

    fn get(&self, index: usize) -> T;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn gather(&self, indices: &[usize]) -> Vec<T> {
        indices.iter().map(|&i| self.get(i)).collect()
    }
}

impl<T: Clone + Sync> CorrespondenceSource<T> for [T] {
    fn len(&self) -> usize {
        <[T]>::len(self)
    }

    fn get(&self, index: usize) -> T {
        self[index].clone()
    }
}

impl<T: Clone + Sync> CorrespondenceSource<T> for Vec<T> {
    fn len(&self) -> usize {
        Vec::len(self)
    }

    fn get(&self, index: usize) -> T {
        self[index].clone()
    }
}

/// Correspondences the TLP cost is summed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum TlpEvalSet {
    /// Union of the drawn samples; the dataset outside them is never read.
    #[default]
    SampleUnion,
    FullDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub plan: SamplePlan,
    pub rules: Vec<ScoringRule>,
    pub tlp_eval: TlpEvalSet,
}

impl PipelineConfig {
    pub fn new(plan: SamplePlan, rules: Vec<ScoringRule>) -> Self {
        Self {
            plan,
            rules,
            tlp_eval: TlpEvalSet::SampleUnion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub sampling: f64,
    pub estimation: f64,
    pub scoring: f64,
}

#[derive(Debug, Clone)]
pub struct NonsacRun {
    pub samples: SampleSet,
    /// One record per estimator call, in sample order (failures included).
    pub hypotheses: Vec<HypothesisRecord>,
    /// One entry per requested rule, in request order.
    pub selections: Vec<(ScoringRule, std::result::Result<Selection, Error>)>,
    /// Seconds per phase.
    pub timings: Timings,
}

impl NonsacRun {
    pub fn selection(&self, rule: &ScoringRule) -> Option<&std::result::Result<Selection, Error>> {
        self.selections.iter().find(|(r, _)| r == rule).map(|(_, s)| s)
    }

    pub fn failures(&self) -> usize {
        self.hypotheses.iter().filter(|h| h.failed).count()
    }
}

/// Runs the pipeline. In fixed-sample mode the single drawn sample is
/// estimated once with an `m`-times budget, giving one hypothesis.
pub fn run_nonsac<E, S>(
    data: &S,
    estimator: &E,
    config: &PipelineConfig,
    ground_truth: Option<&Rotation>,
    seed: u64,
) -> Result<NonsacRun>
where
    E: CoreEstimator,
    S: CorrespondenceSource<E::Datum> + ?Sized,
{
    if data.is_empty() {
        return Err(Error::InvalidConfig("empty dataset".into()));
    }
    if config.rules.is_empty() {
        return Err(Error::InvalidConfig("no scoring rule requested".into()));
    }
    let plan = &config.plan;
    plan.validate(data.len(), estimator.minimal_size())?;

    let start = Instant::now();
    let samples = draw_samples(plan, data.len(), seed)?;
    let sampling = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let (runs, budget_scale) = if plan.fixed_sample { (1, plan.samples) } else { (plan.samples, 1) };
    let hypotheses: Vec<HypothesisRecord> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let sample = data.gather(&samples.indices[i]);
            match estimator.estimate(&sample, samples.seeds[i], budget_scale) {
                Ok(out) => HypothesisRecord {
                    sample_index: i,
                    model: Some(out.model),
                    inlier_count: out.inlier_count(),
                    inlier_residuals: out.inlier_indices.iter().map(|&j| out.residuals[j]).collect(),
                    sample_residuals: out.residuals,
                    failed: false,
                },
                Err(_) => HypothesisRecord::failed(i),
            }
        })
        .collect();
    let estimation = start.elapsed().as_secs_f64();
    if hypotheses.iter().all(|h| h.failed) {
        return Err(Error::NoViableHypothesis(hypotheses.len()));
    }

    let start = Instant::now();
    let needs_eval = config.rules.iter().any(|r| matches!(r, ScoringRule::Tlp { .. }));
    let eval_residuals: Option<Vec<Vec<f64>>> = needs_eval.then(|| {
        let eval_indices: Vec<usize> = match config.tlp_eval {
            TlpEvalSet::SampleUnion => samples.union(),
            TlpEvalSet::FullDataset => (0..data.len()).collect(),
        };
        let eval_data = data.gather(&eval_indices);
        hypotheses
            .par_iter()
            .map(|h| match &h.model {
                Some(model) if !h.failed => eval_data.iter().map(|d| estimator.residual(model, d)).collect(),
                _ => Vec::new(),
            })
            .collect()
    });
    let ctx = SelectionContext {
        eval_residuals: eval_residuals.as_deref(),
        tlp_threshold: Some(estimator.inlier_threshold()),
        ground_truth,
    };
    let selections = config
        .rules
        .iter()
        .map(|rule| {
            // Fixed-sample runs pick by inlier count whatever the rule name.
            let effective = if *rule == ScoringRule::FixedSample { ScoringRule::MostInliers } else { *rule };
            (*rule, select(&hypotheses, &effective, &ctx))
        })
        .collect();
    let scoring = start.elapsed().as_secs_f64();

    Ok(NonsacRun {
        samples,
        hypotheses,
        selections,
        timings: Timings {
            sampling,
            estimation,
            scoring,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{EstimatorOutput, Model};
    use crate::geometry::RigidTransform;
    use nalgebra::Vector3;

    /// Estimates a translation along x as the sample median; residual is
    /// the distance to it.
    struct Median;

    impl CoreEstimator for Median {
        type Datum = f64;

        fn name(&self) -> &'static str {
            "median"
        }

        fn minimal_size(&self) -> usize {
            1
        }

        fn inlier_threshold(&self) -> f64 {
            0.5
        }

        fn estimate(&self, sample: &[f64], _seed: u64, _scale: usize) -> Result<EstimatorOutput<Model>> {
            let mut s = sample.to_vec();
            s.sort_by(f64::total_cmp);
            let med = s[s.len() / 2];
            if med < 0.0 {
                return Err(Error::EstimationFailed("negative".into()));
            }
            let residuals: Vec<f64> = sample.iter().map(|x| (x - med).abs()).collect();
            let inlier_indices = (0..sample.len()).filter(|&i| residuals[i] < 0.5).collect();
            Ok(EstimatorOutput {
                model: Model::Rigid(RigidTransform::new(Rotation::identity(), Vector3::new(med, 0.0, 0.0))),
                inlier_indices,
                residuals,
                iterations_used: 1,
                found_at: 0,
            })
        }

        fn residual(&self, model: &Model, d: &f64) -> f64 {
            (d - model.pose().translation.x).abs()
        }
    }

    fn data() -> Vec<f64> {
        (0..500).map(|i| if i % 4 == 0 { (i as f64 * 0.37) % 50.0 } else { 3.0 + (i % 7) as f64 * 0.01 }).collect()
    }

    #[test]
    fn runs_are_deterministic() {
        let config = PipelineConfig::new(
            SamplePlan::new(5, 40),
            vec![ScoringRule::MostInliers, ScoringRule::Tlp { p: 0.1, tau: None }, ScoringRule::ClosestPair],
        );
        let a = run_nonsac(&data(), &Median, &config, None, 7).unwrap();
        let b = run_nonsac(&data(), &Median, &config, None, 7).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.hypotheses, b.hypotheses);
        assert_eq!(a.selections, b.selections);
        assert_eq!(a.hypotheses.len(), 5);
        assert!(a.hypotheses.iter().enumerate().all(|(i, h)| h.sample_index == i));
    }

    #[test]
    fn single_sample_limits_rules() {
        let config = PipelineConfig::new(
            SamplePlan::new(1, 40),
            vec![ScoringRule::MostInliers, ScoringRule::ClosestPair, ScoringRule::ClosestTriplet],
        );
        let run = run_nonsac(&data(), &Median, &config, None, 1).unwrap();
        assert_eq!(run.selection(&ScoringRule::MostInliers).unwrap().as_ref().unwrap().index, 0);
        assert!(run.selection(&ScoringRule::ClosestPair).unwrap().is_err());
        assert!(run.selection(&ScoringRule::ClosestTriplet).unwrap().is_err());
    }

    #[test]
    fn fixed_sample_runs_once() {
        let config = PipelineConfig::new(
            SamplePlan::new(6, 40).with_fixed_sample(true),
            vec![ScoringRule::FixedSample],
        );
        let run = run_nonsac(&data(), &Median, &config, None, 1).unwrap();
        assert_eq!(run.hypotheses.len(), 1);
        assert!(run.selection(&ScoringRule::FixedSample).unwrap().is_ok());
    }

    #[test]
    fn all_failures_is_an_error() {
        let negative = vec![-1.0; 100];
        let config = PipelineConfig::new(SamplePlan::new(3, 10), vec![ScoringRule::MostInliers]);
        assert_eq!(
            run_nonsac(&negative, &Median, &config, None, 1).unwrap_err(),
            Error::NoViableHypothesis(3)
        );
    }

    #[test]
    fn tlp_reads_only_the_sample_union() {
        // Far-away values outside the samples would dominate a full-dataset
        // evaluation; the union never sees them.
        struct Counting<'a>(&'a [f64], std::sync::atomic::AtomicUsize);
        impl CorrespondenceSource<f64> for Counting<'_> {
            fn len(&self) -> usize {
                self.0.len()
            }
            fn get(&self, i: usize) -> f64 {
                self.1.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                self.0[i]
            }
        }
        let d = data();
        let src = Counting(&d, Default::default());
        let config = PipelineConfig::new(SamplePlan::new(4, 30), vec![ScoringRule::Tlp { p: 0.5, tau: None }]);
        let run = run_nonsac(&src, &Median, &config, None, 3).unwrap();
        let reads = src.1.load(std::sync::atomic::Ordering::Relaxed);
        assert_eq!(reads, 4 * 30 + run.samples.union().len());
    }
}
