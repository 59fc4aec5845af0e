//! Monte-Carlo trials and the mAA metric.
//!
//! A trial generates a fresh scene, runs the pipeline once, and scores every
//! requested rule on that same hypothesis set, so rules are compared paired.
//! `fixed-sample` is the exception: it needs its own pipeline run (one
//! sample, `m`-times budget) on the same scene.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_corfree, gen_pcr, gen_pnp, gen_relpose, CorfreeConfig, GroundTruth, SceneConfig};
use crate::error::{Error, Result};
use crate::estimator::{CoreEstimator, Pcr99Config, PcrEstimator, PnpEstimator, RelPoseEstimator};
use crate::geometry::rotation_distance_deg;
use crate::pipeline::{run_nonsac, CorrespondenceSource, PipelineConfig, TlpEvalSet};
use crate::rng::derive_tagged;
use crate::sampling::SamplePlan;
use crate::scoring::ScoringRule;

/// Mean average accuracy over integer thresholds `1..=theta_max` degrees.
/// Failed trials should be passed as `+inf`.
pub fn maa(errors_deg: &[f64], theta_max: u32) -> Result<f64> {
    if errors_deg.is_empty() {
        return Err(Error::InvalidConfig("mAA of an empty error list".into()));
    }
    if theta_max == 0 {
        return Err(Error::InvalidConfig("theta_max must be at least 1".into()));
    }
    let hits: usize = errors_deg
        .iter()
        .map(|&e| {
            // Number of thresholds θ in 1..=theta_max with e < θ.
            if e.is_nan() {
                0
            } else {
                (1..=theta_max).filter(|&t| e < t as f64).count()
            }
        })
        .sum();
    Ok(hits as f64 / (theta_max as f64 * errors_deg.len() as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub trials: usize,
    pub theta_max: u32,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { trials: 100, theta_max: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    RelPose,
    Pnp,
    Pcr,
    Corfree,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Problem::RelPose => "relpose",
            Problem::Pnp => "pnp",
            Problem::Pcr => "pcr",
            Problem::Corfree => "corfree",
        })
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relpose" => Ok(Problem::RelPose),
            "pnp" => Ok(Problem::Pnp),
            "pcr" => Ok(Problem::Pcr),
            "corfree" => Ok(Problem::Corfree),
            _ => Err(Error::InvalidConfig(format!("unknown problem {s:?}"))),
        }
    }
}

/// Estimator settings per problem.
#[derive(Debug, Clone)]
pub enum EstimatorSpec {
    /// RANSAC draws per sample.
    RelPose { iterations: usize },
    Pnp { iterations: usize },
    Pcr(Pcr99Config),
    Corfree {
        cloud: Arc<Vec<Vector3<f64>>>,
        corfree: CorfreeConfig,
        pcr: Pcr99Config,
    },
}

impl EstimatorSpec {
    pub fn problem(&self) -> Problem {
        match self {
            EstimatorSpec::RelPose { .. } => Problem::RelPose,
            EstimatorSpec::Pnp { .. } => Problem::Pnp,
            EstimatorSpec::Pcr(_) => Problem::Pcr,
            EstimatorSpec::Corfree { .. } => Problem::Corfree,
        }
    }
}

/// One cell of an experiment grid.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub estimator: EstimatorSpec,
    /// Dataset size, noise and outlier ratio. Ignored for `Corfree`, whose
    /// dataset is fully determined by the cloud and [`CorfreeConfig`].
    pub scene: SceneConfig,
    pub plan: SamplePlan,
    pub rules: Vec<ScoringRule>,
    pub metric: MetricConfig,
    pub tlp_eval: TlpEvalSet,
}

impl ExperimentConfig {
    /// Relative-pose cell with `n = m N` and disjoint samples.
    pub fn relpose(sigma: f64, outlier_ratio: f64, m: usize, rules: Vec<ScoringRule>, trials: usize) -> Self {
        Self::simulated(EstimatorSpec::RelPose { iterations: 100 }, 1000, sigma, outlier_ratio, m, rules, trials)
    }

    /// PnP cell; P3P-RANSAC gets 1000 draws per sample.
    pub fn pnp(sigma: f64, outlier_ratio: f64, m: usize, rules: Vec<ScoringRule>, trials: usize) -> Self {
        Self::simulated(EstimatorSpec::Pnp { iterations: 1000 }, 1000, sigma, outlier_ratio, m, rules, trials)
    }

    /// Registration cell with 2000-point samples.
    pub fn pcr(sigma: f64, outlier_ratio: f64, m: usize, rules: Vec<ScoringRule>, trials: usize) -> Self {
        Self::simulated(EstimatorSpec::Pcr(Pcr99Config::for_noise(sigma)), 2000, sigma, outlier_ratio, m, rules, trials)
    }

    /// Correspondence-free cell over all-to-all pairs of two subsets of
    /// `cloud`. PCR-99 stops on the inlier-ratio rule (target 0.09%).
    pub fn corfree(
        cloud: Arc<Vec<Vector3<f64>>>,
        corfree: CorfreeConfig,
        m: usize,
        sample_size: usize,
        rules: Vec<ScoringRule>,
        trials: usize,
    ) -> Self {
        let pairs = corfree.points_per_cloud * corfree.points_per_cloud;
        let pcr = Pcr99Config::for_noise(corfree.sigma).with_inlier_ratio_target(0.0009);
        Self {
            estimator: EstimatorSpec::Corfree { cloud, corfree, pcr },
            scene: SceneConfig::new(pairs, corfree.sigma, 0.0),
            plan: SamplePlan::new(m, sample_size),
            rules,
            metric: MetricConfig { trials, theta_max: 10 },
            tlp_eval: TlpEvalSet::SampleUnion,
        }
    }

    fn simulated(
        estimator: EstimatorSpec,
        sample_size: usize,
        sigma: f64,
        outlier_ratio: f64,
        m: usize,
        rules: Vec<ScoringRule>,
        trials: usize,
    ) -> Self {
        Self {
            estimator,
            scene: SceneConfig::new(m * sample_size, sigma, outlier_ratio),
            plan: SamplePlan::new(m, sample_size).disjoint(),
            rules,
            metric: MetricConfig { trials, theta_max: 10 },
            tlp_eval: TlpEvalSet::SampleUnion,
        }
    }

    /// Noise and outlier ratio as reported in result rows.
    pub fn reported_scene(&self) -> (f64, f64) {
        match &self.estimator {
            EstimatorSpec::Corfree { corfree, .. } => {
                let p = corfree.points_per_cloud as f64;
                (corfree.sigma, 1.0 - corfree.shared() as f64 / (p * p))
            }
            _ => (self.scene.sigma, self.scene.outlier_ratio),
        }
    }
}

/// Rotation errors of one trial, one per rule (`+inf` where the rule could
/// not select).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub errors: Vec<f64>,
    pub failed_samples: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub rules: Vec<ScoringRule>,
    pub trials: Vec<TrialRecord>,
}

impl CellResult {
    /// Errors of rule `r` across trials.
    pub fn errors(&self, r: usize) -> Vec<f64> {
        self.trials.iter().map(|t| t.errors[r]).collect()
    }

    pub fn rule_errors(&self, rule: &ScoringRule) -> Option<Vec<f64>> {
        self.rules.iter().position(|x| x == rule).map(|r| self.errors(r))
    }

    pub fn maa(&self, rule: &ScoringRule, theta_max: u32) -> Option<f64> {
        self.rule_errors(rule).and_then(|e| maa(&e, theta_max).ok())
    }

    pub fn mean_seconds(&self) -> f64 {
        self.trials.iter().map(|t| t.seconds).sum::<f64>() / self.trials.len().max(1) as f64
    }
}

fn trial_errors<E, S>(
    data: &S,
    gt: &GroundTruth,
    estimator: &E,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(Vec<f64>, usize)>
where
    E: CoreEstimator,
    S: CorrespondenceSource<E::Datum> + ?Sized,
{
    let shared: Vec<ScoringRule> = config
        .rules
        .iter()
        .copied()
        .filter(|r| *r != ScoringRule::FixedSample)
        .collect();
    let truth = gt.pose.rotation;
    let mut errors = vec![f64::INFINITY; config.rules.len()];
    let mut failed = 0;
    let error_of = |run: &crate::pipeline::NonsacRun, rule: &ScoringRule| -> f64 {
        match run.selection(rule) {
            Some(Ok(sel)) => run.hypotheses[sel.index]
                .model
                .as_ref()
                .map_or(f64::INFINITY, |m| rotation_distance_deg(&m.rotation(), &truth)),
            _ => f64::INFINITY,
        }
    };
    if !shared.is_empty() {
        let pipeline = PipelineConfig {
            plan: config.plan,
            rules: shared,
            tlp_eval: config.tlp_eval,
        };
        match run_nonsac(data, estimator, &pipeline, Some(&truth), derive_tagged(seed, "nonsac", 0)) {
            Ok(run) => {
                failed += run.failures();
                for (k, rule) in config.rules.iter().enumerate() {
                    if *rule != ScoringRule::FixedSample {
                        errors[k] = error_of(&run, rule);
                    }
                }
            }
            Err(Error::NoViableHypothesis(n)) => failed += n,
            Err(e) => return Err(e),
        }
    }
    if let Some(k) = config.rules.iter().position(|r| *r == ScoringRule::FixedSample) {
        let pipeline = PipelineConfig {
            plan: config.plan.with_fixed_sample(true),
            rules: vec![ScoringRule::FixedSample],
            tlp_eval: config.tlp_eval,
        };
        match run_nonsac(data, estimator, &pipeline, Some(&truth), derive_tagged(seed, "fixed", 0)) {
            Ok(run) => errors[k] = error_of(&run, &ScoringRule::FixedSample),
            Err(Error::NoViableHypothesis(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((errors, failed))
}

fn run_trial(config: &ExperimentConfig, seed: u64) -> Result<(Vec<f64>, usize)> {
    let scene_seed = derive_tagged(seed, "scene", 0);
    let scene = &config.scene;
    match &config.estimator {
        EstimatorSpec::RelPose { iterations } => {
            let (data, gt) = gen_relpose(scene, scene_seed)?;
            trial_errors(&data, &gt, &RelPoseEstimator::for_noise(scene.sigma, *iterations), config, seed)
        }
        EstimatorSpec::Pnp { iterations } => {
            let (data, gt) = gen_pnp(scene, scene_seed)?;
            trial_errors(&data, &gt, &PnpEstimator::for_noise(scene.sigma, *iterations), config, seed)
        }
        EstimatorSpec::Pcr(pcr) => {
            let (data, gt) = gen_pcr(scene, scene_seed)?;
            trial_errors(&data, &gt, &PcrEstimator::new(*pcr), config, seed)
        }
        EstimatorSpec::Corfree { cloud, corfree, pcr } => {
            let (data, gt) = gen_corfree(cloud, corfree, scene_seed)?;
            trial_errors(&data, &gt, &PcrEstimator::new(*pcr), config, seed)
        }
    }
}

/// Runs every trial of one cell. Trials run in parallel; results come back
/// in trial order and depend only on `seed`.
pub fn run_cell(config: &ExperimentConfig, seed: u64) -> Result<CellResult> {
    if config.metric.trials == 0 || config.metric.theta_max == 0 {
        return Err(Error::InvalidConfig("need at least one trial and theta_max >= 1".into()));
    }
    if config.rules.is_empty() {
        return Err(Error::InvalidConfig("no scoring rule requested".into()));
    }
    let trials = (0..config.metric.trials as u64)
        .into_par_iter()
        .map(|t| {
            let start = Instant::now();
            let (errors, failed_samples) = run_trial(config, derive_tagged(seed, "trial", t))?;
            Ok(TrialRecord {
                errors,
                failed_samples,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellResult {
        rules: config.rules.clone(),
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub problem: Problem,
    pub sigma: f64,
    pub outlier_ratio: f64,
    pub m: usize,
    pub rule: String,
    /// Empty when the cell could not run.
    pub maa: Option<f64>,
    pub trials: usize,
    /// Mean wall-clock seconds per trial; only recorded on request because
    /// it makes output non-reproducible.
    pub seconds: Option<f64>,
}

/// Runs each cell with a seed derived from `seed` and its position and
/// emits one row per (cell, rule). A cell that fails yields rows with no
/// mAA; the grid carries on.
pub fn run_grid(cells: &[ExperimentConfig], seed: u64, record_time: bool) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        let result = run_cell(cell, derive_tagged(seed, "cell", c as u64));
        let (sigma, outlier_ratio) = cell.reported_scene();
        for rule in &cell.rules {
            let (maa, seconds) = match &result {
                Ok(r) => (r.maa(rule, cell.metric.theta_max), Some(r.mean_seconds())),
                Err(_) => (None, None),
            };
            rows.push(ResultRow {
                problem: cell.estimator.problem(),
                sigma,
                outlier_ratio,
                m: cell.plan.samples,
                rule: rule.to_string(),
                maa,
                trials: cell.metric.trials,
                seconds: seconds.filter(|_| record_time),
            });
        }
    }
    rows
}

pub const CSV_HEADER: [&str; 8] = ["problem", "sigma", "outlier_ratio", "m", "rule", "maa", "trials", "seconds"];

pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| Error::EstimationFailed(format!("CSV output failed: {e}"));
    w.write_record(CSV_HEADER).map_err(fail)?;
    for row in rows {
        w.serialize((
            row.problem,
            row.sigma,
            row.outlier_ratio,
            row.m,
            &row.rule,
            row.maa,
            row.trials,
            row.seconds,
        ))
        .map_err(fail)?;
    }
    w.flush().map_err(|e| Error::EstimationFailed(e.to_string()))
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(rows, file)
}

pub fn emit_json(rows: &[ResultRow], path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(rows).expect("rows serialize");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r.headers().map_err(|e| Error::io(path, e))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::InvalidConfig(format!("{} does not have the result header", path.display())));
    }
    r.deserialize().map(|row| row.map_err(|e| Error::io(path, e))).collect()
}

pub fn read_json(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::io(path, e))
}

/// JSON when the extension says so, CSV otherwise.
pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    if is_json_path(path) {
        read_json(path)
    } else {
        read_csv(path)
    }
}

pub fn emit_rows(rows: &[ResultRow], path: &Path) -> Result<()> {
    if is_json_path(path) {
        emit_json(rows, path)
    } else {
        emit_csv(rows, path)
    }
}

fn is_json_path(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub const GROUP_COLUMNS: [&str; 5] = ["problem", "sigma", "outlier_ratio", "m", "rule"];

/// Mean mAA over rows sharing the `group_by` columns, groups in order of
/// first appearance. Rows without an mAA are skipped.
pub fn aggregate(rows: &[ResultRow], group_by: &[String]) -> Result<(Vec<String>, Vec<(Vec<String>, f64, usize)>)> {
    for col in group_by {
        if !GROUP_COLUMNS.contains(&col.as_str()) {
            return Err(Error::InvalidConfig(format!(
                "cannot group by {col:?}; choose from {}",
                GROUP_COLUMNS.join(",")
            )));
        }
    }
    let key = |row: &ResultRow| -> Vec<String> {
        group_by
            .iter()
            .map(|c| match c.as_str() {
                "problem" => row.problem.to_string(),
                "sigma" => row.sigma.to_string(),
                "outlier_ratio" => row.outlier_ratio.to_string(),
                "m" => row.m.to_string(),
                _ => row.rule.clone(),
            })
            .collect()
    };
    let mut groups: Vec<(Vec<String>, f64, usize)> = Vec::new();
    for row in rows {
        let Some(v) = row.maa else { continue };
        let k = key(row);
        match groups.iter_mut().find(|g| g.0 == k) {
            Some(g) => {
                g.1 += v;
                g.2 += 1;
            }
            None => groups.push((k, v, 1)),
        }
    }
    for g in &mut groups {
        g.1 /= g.2 as f64;
    }
    Ok((group_by.to_vec(), groups))
}
