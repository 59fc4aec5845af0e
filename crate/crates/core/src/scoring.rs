//! Choosing one hypothesis out of the per-sample estimates.
//!
//! Every rule sees the same list of [`HypothesisRecord`]s. Failed samples
//! are never selected. Remaining ties go to the hypothesis with more inliers,
//! then to the lower sample index.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Model;
use crate::geometry::{rotation_distance_deg, Rotation};

/// Smallest rotation distance (degrees) used by the pair cost.
pub const PAIR_DISTANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub sample_index: usize,
    pub model: Option<Model>,
    pub inlier_count: usize,
    pub inlier_residuals: Vec<f64>,
    /// Residuals over the whole sample.
    pub sample_residuals: Vec<f64>,
    pub failed: bool,
}

impl HypothesisRecord {
    pub fn failed(sample_index: usize) -> Self {
        Self {
            sample_index,
            model: None,
            inlier_count: 0,
            inlier_residuals: Vec::new(),
            sample_residuals: Vec::new(),
            failed: true,
        }
    }

    fn rotation(&self) -> Rotation {
        self.model.as_ref().expect("viable hypothesis has a model").rotation()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScoringRule {
    /// Closest to the ground-truth rotation; an upper bound, not a method.
    Ideal,
    /// Reuse one sample with an `m`-times budget; selects by inlier count.
    FixedSample,
    MostInliers,
    ClosestPair,
    ClosestTriplet,
    MinMean,
    MinMedian,
    MinQ3,
    /// Maximize `max(n_i, n_j) / d_ij^k` over pairs.
    PairCost { k: f64 },
    /// Minimize `sum_j min(|r_j|^p, tau^p)`; `tau` defaults to the
    /// estimator's inlier threshold.
    Tlp { p: f64, tau: Option<f64> },
}

impl ScoringRule {
    pub const PAIR_K_DEFAULTS: [f64; 6] = [0.02, 0.05, 0.1, 0.2, 0.5, 1.0];
    pub const TLP_P_DEFAULTS: [f64; 7] = [0.01, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0];

    /// Fewest viable hypotheses the rule can work with.
    pub fn min_hypotheses(&self) -> usize {
        match self {
            ScoringRule::ClosestPair | ScoringRule::PairCost { .. } => 2,
            ScoringRule::ClosestTriplet => 3,
            _ => 1,
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |reason: String| Err(rule_error(self, reason));
        match *self {
            ScoringRule::PairCost { k } if !(k > 0.0 && k.is_finite()) => bad(format!("k must be positive, got {k}")),
            ScoringRule::Tlp { p, .. } if !(p > 0.0 && p.is_finite()) => bad(format!("p must be positive, got {p}")),
            ScoringRule::Tlp { tau: Some(t), .. } if !(t > 0.0) => bad(format!("tau must be positive, got {t}")),
            _ => Ok(()),
        }
    }
}

fn rule_error(rule: &ScoringRule, reason: impl Into<String>) -> Error {
    Error::Scoring {
        rule: rule.to_string(),
        reason: reason.into(),
    }
}

impl fmt::Display for ScoringRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoringRule::Ideal => f.write_str("ideal"),
            ScoringRule::FixedSample => f.write_str("fixed-sample"),
            ScoringRule::MostInliers => f.write_str("most-inliers"),
            ScoringRule::ClosestPair => f.write_str("closest-pair"),
            ScoringRule::ClosestTriplet => f.write_str("closest-triplet"),
            ScoringRule::MinMean => f.write_str("min-mean"),
            ScoringRule::MinMedian => f.write_str("min-median"),
            ScoringRule::MinQ3 => f.write_str("min-q3"),
            ScoringRule::PairCost { k } => write!(f, "pair:{k}"),
            ScoringRule::Tlp { p, tau: None } => write!(f, "tlp:{p}"),
            ScoringRule::Tlp { p, tau: Some(t) } => write!(f, "tlp:{p}:{t}"),
        }
    }
}

impl FromStr for ScoringRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let number = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad number {v:?} in rule {s:?}")))
        };
        let rule = match s {
            "ideal" => ScoringRule::Ideal,
            "fixed-sample" => ScoringRule::FixedSample,
            "most-inliers" => ScoringRule::MostInliers,
            "closest-pair" => ScoringRule::ClosestPair,
            "closest-triplet" => ScoringRule::ClosestTriplet,
            "min-mean" => ScoringRule::MinMean,
            "min-median" => ScoringRule::MinMedian,
            "min-q3" => ScoringRule::MinQ3,
            _ => {
                let parts: Vec<&str> = s.split(':').collect();
                match parts.as_slice() {
                    ["pair", k] => ScoringRule::PairCost { k: number(k)? },
                    ["tlp", p] => ScoringRule::Tlp { p: number(p)?, tau: None },
                    ["tlp", p, t] => ScoringRule::Tlp {
                        p: number(p)?,
                        tau: Some(number(t)?),
                    },
                    _ => return Err(Error::InvalidConfig(format!("unknown scoring rule {s:?}"))),
                }
            }
        };
        rule.check()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(rule)
    }
}

/// Parses a comma-separated rule list.
pub fn parse_rules(list: &str) -> Result<Vec<ScoringRule>> {
    let rules: Vec<ScoringRule> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if rules.is_empty() {
        return Err(Error::InvalidConfig("empty rule list".into()));
    }
    Ok(rules)
}

/// What some rules need beyond the hypotheses themselves.
#[derive(Debug, Clone, Copy, Default)]
pub struct SelectionContext<'a> {
    /// Residuals of each hypothesis over the common evaluation set, indexed
    /// like the hypothesis list (entries of failed hypotheses are ignored).
    pub eval_residuals: Option<&'a [Vec<f64>]>,
    /// Default TLP truncation threshold.
    pub tlp_threshold: Option<f64>,
    pub ground_truth: Option<&'a Rotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Position in the hypothesis list.
    pub index: usize,
    /// Per-hypothesis score under the rule; `None` where not scored. For
    /// pairwise rules, the best value over pairs containing the hypothesis.
    pub scores: Vec<Option<f64>>,
}

/// Linear-interpolation quantile: `q (len - 1)` indexes the sorted values.
pub fn quartile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("quantile of an empty list".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidConfig(format!("quantile fraction {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

/// Truncated L_p cost `sum_j min(|r_j|^p, tau^p)`.
pub fn tlp_cost(residuals: &[f64], p: f64, tau: f64) -> f64 {
    let cap = tau.powf(p);
    residuals.iter().map(|r| r.abs().powf(p).min(cap)).sum()
}

/// `max(n_i, n_j) / max(d, floor)^k`.
pub fn pair_cost(n_i: usize, n_j: usize, d_deg: f64, k: f64) -> f64 {
    n_i.max(n_j) as f64 / d_deg.max(PAIR_DISTANCE_FLOOR).powf(k)
}

/// True when hypothesis `a` wins a tie against `b`.
fn tie_wins(hyps: &[HypothesisRecord], a: usize, b: usize) -> bool {
    let (ha, hb) = (&hyps[a], &hyps[b]);
    ha.inlier_count > hb.inlier_count
        || (ha.inlier_count == hb.inlier_count && ha.sample_index < hb.sample_index)
}

/// Index with the smallest score; ties by inlier count, then sample index.
fn argmin(hyps: &[HypothesisRecord], scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        let Some(s) = *s else { continue };
        best = match best {
            Some((b, bs)) if s > bs || (s == bs && !tie_wins(hyps, i, b)) => Some((b, bs)),
            _ => Some((i, s)),
        };
    }
    best.map(|(i, _)| i)
}

/// Better member of a pair or triplet: more inliers, then lower index.
fn pick_within(hyps: &[HypothesisRecord], group: &[usize]) -> usize {
    let mut best = group[0];
    for &g in &group[1..] {
        if tie_wins(hyps, g, best) {
            best = g;
        }
    }
    best
}

/// Best group under `cost` (lower is better); equal costs resolved by the
/// member each group would contribute.
fn best_group(hyps: &[HypothesisRecord], groups: impl Iterator<Item = (Vec<usize>, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (group, cost) in groups {
        let pick = pick_within(hyps, &group);
        best = match best {
            Some((b, bc)) if cost > bc || (cost == bc && !tie_wins(hyps, pick, b)) => Some((b, bc)),
            _ => Some((pick, cost)),
        };
    }
    best.map(|(i, _)| i)
}

pub fn select(hyps: &[HypothesisRecord], rule: &ScoringRule, ctx: &SelectionContext<'_>) -> Result<Selection> {
    rule.check()?;
    let viable: Vec<usize> = (0..hyps.len())
        .filter(|&i| !hyps[i].failed && hyps[i].model.is_some())
        .collect();
    let needed = rule.min_hypotheses();
    if viable.len() < needed {
        return Err(rule_error(
            rule,
            format!("needs {needed} viable hypotheses, have {}", viable.len()),
        ));
    }
    let mut scores: Vec<Option<f64>> = vec![None; hyps.len()];
    let rotations: Vec<Option<Rotation>> = hyps
        .iter()
        .map(|h| (!h.failed).then(|| h.model.as_ref().map(Model::rotation)).flatten())
        .collect();
    let dist = |i: usize, j: usize| rotation_distance_deg(rotations[i].as_ref().unwrap(), rotations[j].as_ref().unwrap());

    let index = match *rule {
        ScoringRule::Ideal => {
            let gt = ctx
                .ground_truth
                .ok_or_else(|| rule_error(rule, "ground truth is required"))?;
            for &i in &viable {
                scores[i] = Some(rotation_distance_deg(&hyps[i].rotation(), gt));
            }
            argmin(hyps, &scores)
        }
        ScoringRule::FixedSample | ScoringRule::MostInliers => {
            for &i in &viable {
                scores[i] = Some(-(hyps[i].inlier_count as f64));
            }
            let idx = argmin(hyps, &scores);
            scores.iter_mut().for_each(|s| *s = s.map(|v| -v));
            idx
        }
        ScoringRule::MinMean | ScoringRule::MinMedian | ScoringRule::MinQ3 => {
            for &i in &viable {
                let r = &hyps[i].inlier_residuals;
                if r.is_empty() {
                    continue;
                }
                scores[i] = Some(match rule {
                    ScoringRule::MinMean => r.iter().sum::<f64>() / r.len() as f64,
                    ScoringRule::MinMedian => quartile(r, 0.5)?,
                    _ => quartile(r, 0.75)?,
                });
            }
            let idx = argmin(hyps, &scores);
            if idx.is_none() {
                return Err(rule_error(rule, "no hypothesis has inliers"));
            }
            idx
        }
        ScoringRule::Tlp { p, tau } => {
            let eval = ctx
                .eval_residuals
                .ok_or_else(|| rule_error(rule, "an evaluation set is required"))?;
            if eval.len() != hyps.len() {
                return Err(rule_error(rule, "evaluation residuals do not match the hypotheses"));
            }
            let tau = tau
                .or(ctx.tlp_threshold)
                .ok_or_else(|| rule_error(rule, "no truncation threshold"))?;
            for &i in &viable {
                scores[i] = Some(tlp_cost(&eval[i], p, tau));
            }
            argmin(hyps, &scores)
        }
        ScoringRule::ClosestPair => {
            let pairs: Vec<(Vec<usize>, f64)> = pairs_of(&viable).map(|(i, j)| (vec![i, j], dist(i, j))).collect();
            for (g, d) in &pairs {
                for &i in g {
                    scores[i] = Some(scores[i].map_or(*d, |s: f64| s.min(*d)));
                }
            }
            best_group(hyps, pairs.into_iter())
        }
        ScoringRule::PairCost { k } => {
            let pairs: Vec<(Vec<usize>, f64)> = pairs_of(&viable)
                .map(|(i, j)| {
                    let c = pair_cost(hyps[i].inlier_count, hyps[j].inlier_count, dist(i, j), k);
                    (vec![i, j], c)
                })
                .collect();
            for (g, c) in &pairs {
                for &i in g {
                    scores[i] = Some(scores[i].map_or(*c, |s: f64| s.max(*c)));
                }
            }
            best_group(hyps, pairs.into_iter().map(|(g, c)| (g, -c)))
        }
        ScoringRule::ClosestTriplet => {
            let mut triplets = Vec::new();
            for (a, &i) in viable.iter().enumerate() {
                for (b, &j) in viable.iter().enumerate().skip(a + 1) {
                    let dij = dist(i, j);
                    for &l in &viable[b + 1..] {
                        let spread = dij.max(dist(i, l)).max(dist(j, l));
                        triplets.push((vec![i, j, l], spread));
                    }
                }
            }
            for (g, d) in &triplets {
                for &i in g {
                    scores[i] = Some(scores[i].map_or(*d, |s: f64| s.min(*d)));
                }
            }
            best_group(hyps, triplets.into_iter())
        }
    };
    let index = index.ok_or_else(|| rule_error(rule, "no hypothesis could be scored"))?;
    Ok(Selection { index, scores })
}

fn pairs_of(v: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    v.iter()
        .enumerate()
        .flat_map(move |(a, &i)| v[a + 1..].iter().map(move |&j| (i, j)))
}
