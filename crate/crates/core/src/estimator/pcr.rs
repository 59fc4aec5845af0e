//! Rigid registration from 3D-3D correspondences (modified PCR-99).
//!
//! Rigid motions preserve distances, so two inlier correspondences `a`, `b`
//! satisfy `|p_a - p_b| = |q_a - q_b|` up to noise. That one quantity does
//! three jobs here: it scores correspondences (how many partners agree with
//! them), it prescreens 3-point samples before any pose is computed, and it
//! orders the search so likely inliers are tried first.

use nalgebra::Vector3;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{CoreEstimator, EstimatorOutput, Model};
use crate::error::{Error, Result};
use crate::geometry::{procrustes, RigidTransform};
use crate::rng::{derive_tagged, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair3D3D {
    pub source: Vector3<f64>,
    pub target: Vector3<f64>,
}

impl Pair3D3D {
    pub fn new(source: Vector3<f64>, target: Vector3<f64>) -> Self {
        Self { source, target }
    }
}

/// `| |p_a - p_b| - |q_a - q_b| |`; zero for any two exact inliers.
pub fn pairwise_consistency(a: &Pair3D3D, b: &Pair3D3D) -> f64 {
    ((a.source - b.source).norm() - (a.target - b.target).norm()).abs()
}

pub fn registration_residual(pose: &RigidTransform, pair: &Pair3D3D) -> f64 {
    (pose.apply(&pair.source) - pair.target).norm()
}

/// When to stop drawing 3-point samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    /// Stop when `max_valid_triplets` samples passed the prescreen or
    /// `max_total_triplets` were drawn.
    Budget,
    /// Stop once the best model's inlier ratio reaches `target` and at least
    /// `max_valid_triplets` samples have passed; `hard_cap` bounds the draws.
    InlierRatio { target: f64 },
}

/// Order in which 3-point samples are proposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TripletOrder {
    /// Each index drawn with probability proportional to `score + 1`.
    Proportional,
    /// Correspondences ranked by score; triplets of ranks enumerated in
    /// colexicographic order, so the best-scored ones are combined first.
    Ranked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pcr99Config {
    /// δ: tolerance on pairwise consistency, for scoring and prescreening.
    pub prescreen_tolerance: f64,
    /// τ: inlier threshold on the registration residual.
    pub inlier_threshold: f64,
    pub max_valid_triplets: usize,
    pub max_total_triplets: usize,
    pub termination: Termination,
    /// K: partners compared per correspondence when scoring; `None` compares
    /// against every other correspondence in the sample.
    pub scoring_subset_size: Option<usize>,
    pub order: TripletOrder,
    /// Draw limit under [`Termination::InlierRatio`].
    pub hard_cap: usize,
    /// Refit the winning model on its inliers.
    pub refine: bool,
}

impl Pcr99Config {
    /// δ = 6σ, τ = 5σ, budget termination.
    pub fn for_noise(sigma: f64) -> Self {
        Self {
            prescreen_tolerance: 6.0 * sigma,
            inlier_threshold: 5.0 * sigma,
            max_valid_triplets: 1000,
            max_total_triplets: 10_000,
            termination: Termination::Budget,
            scoring_subset_size: None,
            order: TripletOrder::Ranked,
            hard_cap: 1_000_000,
            refine: true,
        }
    }

    pub fn with_inlier_ratio_target(mut self, target: f64) -> Self {
        self.termination = Termination::InlierRatio { target };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.prescreen_tolerance > 0.0) {
            return bad(format!("prescreen tolerance must be positive, got {}", self.prescreen_tolerance));
        }
        if !(self.inlier_threshold > 0.0) {
            return bad(format!("inlier threshold must be positive, got {}", self.inlier_threshold));
        }
        if self.max_valid_triplets == 0 || self.max_total_triplets == 0 || self.hard_cap == 0 {
            return bad("triplet caps must be at least 1".into());
        }
        if self.scoring_subset_size == Some(0) {
            return bad("scoring subset size must be at least 1".into());
        }
        if let Termination::InlierRatio { target } = self.termination {
            if !(target > 0.0 && target < 1.0) {
                return bad(format!("target inlier ratio must lie in (0, 1), got {target}"));
            }
        }
        Ok(())
    }
}

/// Score of each correspondence: the number of partners (all others, or a
/// seeded random subset of K) within the consistency tolerance.
pub fn score_correspondences(set: &[Pair3D3D], config: &Pcr99Config, seed: u64) -> Result<Vec<usize>> {
    let n = set.len();
    let tol = config.prescreen_tolerance;
    match config.scoring_subset_size {
        Some(k) if k < n.saturating_sub(1) => {
            let mut rng = rng_from_seed(derive_tagged(seed, "pcr-score", 0));
            Ok((0..n)
                .map(|a| {
                    index::sample(&mut rng, n - 1, k)
                        .iter()
                        .map(|b| if b >= a { b + 1 } else { b })
                        .filter(|&b| pairwise_consistency(&set[a], &set[b]) < tol)
                        .count()
                })
                .collect())
        }
        Some(k) if k > n.saturating_sub(1) => Err(Error::InsufficientPoints { needed: k + 1, got: n }),
        _ => {
            let mut scores = vec![0usize; n];
            for a in 0..n {
                for b in a + 1..n {
                    if pairwise_consistency(&set[a], &set[b]) < tol {
                        scores[a] += 1;
                        scores[b] += 1;
                    }
                }
            }
            Ok(scores)
        }
    }
}

/// Rigid transform from three correspondences.
pub fn procrustes_3pt(triplet: &[Pair3D3D; 3]) -> Result<RigidTransform> {
    let source = triplet.map(|p| p.source);
    let target = triplet.map(|p| p.target);
    procrustes(&source, &target)
}

/// Colexicographic enumeration of `i < j < k` over `0..n`.
struct Colex {
    n: usize,
    next: Option<[usize; 3]>,
}

impl Colex {
    fn new(n: usize) -> Self {
        Self { n, next: (n >= 3).then_some([0, 1, 2]) }
    }
}

impl Iterator for Colex {
    type Item = [usize; 3];

    fn next(&mut self) -> Option<[usize; 3]> {
        let cur = self.next?;
        let [i, j, k] = cur;
        self.next = if i + 1 < j {
            Some([i + 1, j, k])
        } else if j + 1 < k {
            Some([0, j + 1, k])
        } else if k + 1 < self.n {
            Some([0, 1, k + 1])
        } else {
            None
        };
        Some(cur)
    }
}

/// Diagnostics from one PCR run.
#[derive(Debug, Clone, PartialEq)]
pub struct PcrTrace {
    pub total_draws: usize,
    pub valid_triplets: usize,
    /// Best inlier count after each valid triplet.
    pub best_counts: Vec<usize>,
}

fn count_inliers(set: &[Pair3D3D], pose: &RigidTransform, tau: f64) -> (usize, f64) {
    let mut count = 0;
    let mut sum = 0.0;
    for p in set {
        let r = registration_residual(pose, p);
        if r < tau {
            count += 1;
            sum += r;
        }
    }
    (count, sum)
}

pub fn estimate_pcr(
    sample: &[Pair3D3D],
    config: &Pcr99Config,
    seed: u64,
    budget_scale: usize,
) -> Result<EstimatorOutput<Model>> {
    estimate_pcr_traced(sample, config, seed, budget_scale).map(|(out, _)| out)
}

/// [`estimate_pcr`] plus its search trace. `budget_scale` multiplies the
/// total-draw cap only; the valid-triplet cap is never scaled.
pub fn estimate_pcr_traced(
    sample: &[Pair3D3D],
    config: &Pcr99Config,
    seed: u64,
    budget_scale: usize,
) -> Result<(EstimatorOutput<Model>, PcrTrace)> {
    config.validate()?;
    let n = sample.len();
    if n < 3 {
        return Err(Error::DatasetTooSmall { n, sample_size: 3 });
    }
    let scores = score_correspondences(sample, config, seed)?;
    let tol = config.prescreen_tolerance;
    let tau = config.inlier_threshold;
    let draw_cap = match config.termination {
        Termination::Budget => config.max_total_triplets.saturating_mul(budget_scale.max(1)),
        Termination::InlierRatio { .. } => config.hard_cap,
    };

    let mut proposals: Box<dyn Iterator<Item = [usize; 3]>> = match config.order {
        TripletOrder::Ranked => {
            let mut ranked: Vec<usize> = (0..n).collect();
            ranked.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(a.cmp(&b)));
            Box::new(Colex::new(n).map(move |t| t.map(|r| ranked[r])))
        }
        TripletOrder::Proportional => {
            let weights = WeightedIndex::new(scores.iter().map(|&s| s as f64 + 1.0))
                .map_err(|e| Error::EstimationFailed(e.to_string()))?;
            let mut rng = rng_from_seed(derive_tagged(seed, "pcr-triplets", 0));
            Box::new(std::iter::repeat_with(move || loop {
                let t = [weights.sample(&mut rng), weights.sample(&mut rng), weights.sample(&mut rng)];
                if t[0] != t[1] && t[0] != t[2] && t[1] != t[2] {
                    break t;
                }
            }))
        }
    };

    let mut trace = PcrTrace { total_draws: 0, valid_triplets: 0, best_counts: Vec::new() };
    let mut best: Option<(usize, f64, usize, RigidTransform)> = None;
    while trace.total_draws < draw_cap {
        let Some([a, b, c]) = proposals.next() else { break };
        trace.total_draws += 1;
        let (pa, pb, pc) = (&sample[a], &sample[b], &sample[c]);
        if pairwise_consistency(pa, pb) >= tol
            || pairwise_consistency(pa, pc) >= tol
            || pairwise_consistency(pb, pc) >= tol
        {
            continue;
        }
        let at = trace.valid_triplets;
        trace.valid_triplets += 1;
        if let Ok(pose) = procrustes_3pt(&[*pa, *pb, *pc]) {
            let (count, sum) = count_inliers(sample, &pose, tau);
            let replace = match &best {
                None => true,
                Some((bc, bs, _, _)) => count > *bc || (count == *bc && sum < *bs),
            };
            if replace {
                best = Some((count, sum, at, pose));
            }
        }
        trace.best_counts.push(best.as_ref().map_or(0, |b| b.0));

        let best_count = best.as_ref().map_or(0, |b| b.0);
        let done = match config.termination {
            Termination::Budget => trace.valid_triplets >= config.max_valid_triplets,
            Termination::InlierRatio { target } => {
                trace.valid_triplets >= config.max_valid_triplets
                    && best_count as f64 >= target * n as f64
            }
        };
        if done {
            break;
        }
    }

    let (count, _, found_at, mut pose) = best.ok_or_else(|| {
        Error::EstimationFailed(format!(
            "no valid 3-point sample in {} draws",
            trace.total_draws
        ))
    })?;
    if count < 3 {
        return Err(Error::EstimationFailed(format!(
            "best registration has {count} inliers"
        )));
    }
    if config.refine {
        for _ in 0..3 {
            let inliers: Vec<&Pair3D3D> =
                sample.iter().filter(|p| registration_residual(&pose, p) < tau).collect();
            let source: Vec<_> = inliers.iter().map(|p| p.source).collect();
            let target: Vec<_> = inliers.iter().map(|p| p.target).collect();
            let Ok(refit) = procrustes(&source, &target) else { break };
            if count_inliers(sample, &refit, tau).0 < inliers.len() {
                break;
            }
            pose = refit;
        }
    }

    let residuals: Vec<f64> = sample.iter().map(|p| registration_residual(&pose, p)).collect();
    let inlier_indices = residuals
        .iter()
        .enumerate()
        .filter(|(_, &r)| r < tau)
        .map(|(i, _)| i)
        .collect();
    let out = EstimatorOutput {
        model: Model::Rigid(pose),
        inlier_indices,
        residuals,
        iterations_used: trace.total_draws,
        found_at,
    };
    Ok((out, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcrEstimator {
    pub config: Pcr99Config,
}

impl PcrEstimator {
    pub fn new(config: Pcr99Config) -> Self {
        Self { config }
    }
}

impl CoreEstimator for PcrEstimator {
    type Datum = Pair3D3D;

    fn name(&self) -> &'static str {
        "pcr"
    }

    fn minimal_size(&self) -> usize {
        3
    }

    fn inlier_threshold(&self) -> f64 {
        self.config.inlier_threshold
    }

    fn estimate(
        &self,
        sample: &[Pair3D3D],
        seed: u64,
        budget_scale: usize,
    ) -> Result<EstimatorOutput<Model>> {
        estimate_pcr(sample, &self.config, seed, budget_scale)
    }

    fn residual(&self, model: &Model, d: &Pair3D3D) -> f64 {
        registration_residual(model.pose(), d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_rotation, rotation_distance_deg};
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn cube_point(rng: &mut impl Rng) -> Vector3<f64> {
        Vector3::new(rng.random(), rng.random(), rng.random())
    }

    fn noise(rng: &mut impl Rng, sigma: f64) -> Vector3<f64> {
        Vector3::from_fn(|_, _| sigma * rng.sample::<f64, _>(StandardNormal))
    }

    fn random_transform(rng: &mut impl Rng) -> RigidTransform {
        RigidTransform::new(random_rotation(rng), noise(rng, 1.0))
    }

    /// `inliers` noisy matches under `pose`, then `outliers` random targets.
    fn mixed(rng: &mut impl Rng, pose: &RigidTransform, inliers: usize, outliers: usize, sigma: f64) -> Vec<Pair3D3D> {
        let mut v: Vec<Pair3D3D> = (0..inliers)
            .map(|_| {
                let p = cube_point(rng);
                Pair3D3D::new(p, pose.apply(&p) + noise(rng, sigma))
            })
            .collect();
        let center = pose.apply(&Vector3::repeat(0.5));
        for _ in 0..outliers {
            let p = cube_point(rng);
            let q = loop {
                let d = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                if d.norm() <= 1.0 {
                    break center + d * (3f64.sqrt() / 2.0);
                }
            };
            v.push(Pair3D3D::new(p, q));
        }
        v
    }

    #[test]
    fn consistency_of_exact_inliers_is_zero() {
        let mut rng = rng_from_seed(20);
        for _ in 0..100 {
            let pose = random_transform(&mut rng);
            let (p, q) = (cube_point(&mut rng), cube_point(&mut rng));
            let a = Pair3D3D::new(p, pose.apply(&p));
            let b = Pair3D3D::new(q, pose.apply(&q));
            assert!(pairwise_consistency(&a, &b) < 1e-12);
        }
    }

    #[test]
    fn noisy_inlier_pairs_pass_six_sigma() {
        let mut rng = rng_from_seed(21);
        let sigma = 0.01;
        let trials = 10_000;
        let passed = (0..trials)
            .filter(|_| {
                let pose = random_transform(&mut rng);
                let set = mixed(&mut rng, &pose, 2, 0, sigma);
                pairwise_consistency(&set[0], &set[1]) < 6.0 * sigma
            })
            .count();
        assert!(passed as f64 >= 0.99 * trials as f64, "{passed}");
    }

    #[test]
    fn inlier_outlier_consistency_is_coarse() {
        let mut rng = rng_from_seed(22);
        let pose = random_transform(&mut rng);
        let set = mixed(&mut rng, &pose, 1, 5000, 0.0);
        let values: Vec<f64> = set[1..].iter().map(|o| pairwise_consistency(&set[0], o)).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((0.1..1.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn scores_saturate_on_clean_data() {
        let mut rng = rng_from_seed(23);
        let pose = random_transform(&mut rng);
        let set = mixed(&mut rng, &pose, 300, 0, 0.0);
        let mut config = Pcr99Config::for_noise(0.01);
        config.scoring_subset_size = Some(100);
        assert!(score_correspondences(&set, &config, 1).unwrap().iter().all(|&s| s == 100));
        config.scoring_subset_size = None;
        assert!(score_correspondences(&set, &config, 1).unwrap().iter().all(|&s| s == 299));
    }

    #[test]
    fn outlier_scores_are_far_below_k() {
        let mut rng = rng_from_seed(24);
        let pose = random_transform(&mut rng);
        let set = mixed(&mut rng, &pose, 0, 2000, 0.01);
        let mut config = Pcr99Config::for_noise(0.01);
        config.scoring_subset_size = Some(100);
        let scores = score_correspondences(&set, &config, 2).unwrap();
        let mean = scores.iter().sum::<usize>() as f64 / scores.len() as f64;
        assert!(mean < 40.0, "mean outlier score {mean}");
    }

    #[test]
    fn inlier_scores_separate_at_one_percent() {
        // The margin shrinks as the tolerance grows: about 3.9 pooled std at
        // sigma = 0.002, 2.4 at 0.005, 1.9 at 0.01.
        let mut rng = rng_from_seed(25);
        let pose = random_transform(&mut rng);
        let sigma = 0.002;
        let set = mixed(&mut rng, &pose, 100, 9900, sigma);
        let scores = score_correspondences(&set, &Pcr99Config::for_noise(sigma), 3).unwrap();
        let stats = |s: &[usize]| {
            let m = s.iter().sum::<usize>() as f64 / s.len() as f64;
            let v = s.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
            (m, v)
        };
        let (mi, vi) = stats(&scores[..100]);
        let (mo, vo) = stats(&scores[100..]);
        let pooled = ((vi + vo) / 2.0).sqrt();
        assert!(mi - mo >= 3.0 * pooled, "inlier {mi} outlier {mo} pooled std {pooled}");
    }

    #[test]
    fn inlier_scores_rank_high_at_one_percent() {
        let mut rng = rng_from_seed(25);
        let pose = random_transform(&mut rng);
        let sigma = 0.005;
        let set = mixed(&mut rng, &pose, 100, 9900, sigma);
        let config = Pcr99Config::for_noise(sigma);
        let scores = score_correspondences(&set, &config, 3).unwrap();
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.sort_by(|&a, &b| scores[b].cmp(&scores[a]));
        let top = order[..100].iter().filter(|&&i| i < 100).count();
        assert!(top >= 10, "{top}");
    }

    #[test]
    fn procrustes_3pt_examples() {
        let pts = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)];
        let id = procrustes_3pt(&pts.map(|p| Pair3D3D::new(p, p))).unwrap();
        assert!(id.rotation.angle() < 1e-12 && id.translation.norm() < 1e-12);
        let shift = Vector3::new(0.0, 0.0, 1.0);
        let t = procrustes_3pt(&pts.map(|p| Pair3D3D::new(p, p + shift))).unwrap();
        assert!((t.translation - shift).norm() < 1e-12 && t.rotation.angle() < 1e-12);
        let line = [0.0, 1.0, 2.0].map(|x| Pair3D3D::new(Vector3::new(x, x, x), Vector3::new(x, x, x)));
        assert_eq!(procrustes_3pt(&line), Err(Error::DegenerateTriplet));
    }

    #[test]
    fn procrustes_3pt_recovers_random_transforms() {
        let mut rng = rng_from_seed(26);
        let mut done = 0;
        while done < 1000 {
            let pose = random_transform(&mut rng);
            let t: [Pair3D3D; 3] = std::array::from_fn(|_| {
                let p = cube_point(&mut rng);
                Pair3D3D::new(p, pose.apply(&p))
            });
            let area = (t[1].source - t[0].source).cross(&(t[2].source - t[0].source)).norm();
            if area < 1e-2 {
                continue;
            }
            let est = procrustes_3pt(&t).unwrap();
            assert!(rotation_distance_deg(&est.rotation, &pose.rotation) < 1e-6);
            assert!((est.translation - pose.translation).norm() < 1e-9);
            done += 1;
        }
    }

    #[test]
    fn colex_enumerates_all_triplets_once() {
        let all: Vec<_> = Colex::new(6).collect();
        assert_eq!(all.len(), 20);
        assert_eq!(all[..4], [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]);
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 20);
        assert!(all.iter().all(|t| t[0] < t[1] && t[1] < t[2]));
        assert_eq!(Colex::new(2).count(), 0);
    }

    #[test]
    fn clean_sample_is_recovered_exactly() {
        let mut rng = rng_from_seed(27);
        let pose = random_transform(&mut rng);
        let set = mixed(&mut rng, &pose, 200, 0, 0.0);
        let config = Pcr99Config::for_noise(0.01);
        let (out, trace) = estimate_pcr_traced(&set, &config, 1, 1).unwrap();
        assert_eq!(out.inlier_count(), 200);
        assert!(out.found_at < config.max_valid_triplets);
        assert!(rotation_distance_deg(&out.model.rotation(), &pose.rotation) < 1e-9);
        assert_eq!(trace.valid_triplets, config.max_valid_triplets);
    }

    #[test]
    fn pure_outliers_fail_or_have_low_support() {
        let mut rng = rng_from_seed(28);
        let pose = random_transform(&mut rng);
        let set = mixed(&mut rng, &pose, 0, 1000, 0.01);
        let config = Pcr99Config::for_noise(0.01);
        match estimate_pcr(&set, &config, 1, 1) {
            Ok(out) => assert!(out.is_low_support(3), "{}", out.inlier_count()),
            Err(Error::EstimationFailed(_)) => {}
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn termination_bounds() {
        let mut rng = rng_from_seed(29);
        let pose = random_transform(&mut rng);
        let set = mixed(&mut rng, &pose, 5, 400, 0.01);
        for order in [TripletOrder::Ranked, TripletOrder::Proportional] {
            let mut config = Pcr99Config::for_noise(0.01);
            config.order = order;
            config.max_total_triplets = 3000;
            let (_, trace) = estimate_pcr_traced(&set, &config, 2, 1).unwrap_or_else(|_| panic!("{order:?}"));
            assert!(trace.total_draws <= 3000);
            assert!(trace.valid_triplets <= config.max_valid_triplets);
            assert!(trace.best_counts.windows(2).all(|w| w[0] <= w[1]));
            let (_, scaled) = estimate_pcr_traced(&set, &config, 2, 4).unwrap();
            assert!(scaled.total_draws <= 12_000);
            assert!(scaled.valid_triplets <= config.max_valid_triplets);

            config.termination = Termination::InlierRatio { target: 0.9 };
            config.hard_cap = 5000;
            let (_, capped) = estimate_pcr_traced(&set, &config, 2, 1).unwrap();
            assert!(capped.total_draws <= 5000);
        }
    }

    #[test]
    fn config_validation() {
        let ok = Pcr99Config::for_noise(0.01);
        assert!(ok.validate().is_ok());
        assert!(Pcr99Config { prescreen_tolerance: 0.0, ..ok }.validate().is_err());
        assert!(Pcr99Config { max_valid_triplets: 0, ..ok }.validate().is_err());
        assert!(ok.with_inlier_ratio_target(1.5).validate().is_err());
        assert!(ok.with_inlier_ratio_target(0.0009).validate().is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rotation_is_proper(seed in any::<u64>(), squash in 0.0f64..1.0) {
            let mut rng = rng_from_seed(seed);
            let pose = random_transform(&mut rng);
            // Shrinking one axis pushes triplets toward collinearity.
            let t: [Pair3D3D; 3] = std::array::from_fn(|_| {
                let mut p = cube_point(&mut rng);
                p.z *= 1.0 - squash;
                Pair3D3D::new(p, pose.apply(&p) + noise(&mut rng, 0.01))
            });
            if let Ok(est) = procrustes_3pt(&t) {
                prop_assert!((est.rotation.matrix().determinant() - 1.0).abs() < 1e-9);
            }
        }
    }
}
