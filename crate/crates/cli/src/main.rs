use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nonsac::datagen::{load_ply, surface_cloud, write_ply, CorfreeConfig, PlyEncoding, SceneConfig};
use nonsac::estimator::Pcr99Config;
use nonsac::experiment::{
    aggregate, emit_rows, read_rows, run_grid, EstimatorSpec, ExperimentConfig, MetricConfig,
};
use nonsac::pipeline::TlpEvalSet;
use nonsac::scoring::{parse_rules, ScoringRule};
use nonsac::SamplePlan;

#[derive(Parser)]
#[command(name = "nonsac", version, about = "NONSAC robust estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo grid on a synthetic problem. `--sigma`, `--outlier-ratio`
    /// and `--m` take comma-separated lists; every combination is one cell.
    Simulate(SimulateArgs),
    /// Correspondence-free registration over all-to-all pairs of two
    /// overlapping subsets of a point cloud.
    Corfree(CorfreeArgs),
    /// Mean mAA of a result file grouped by columns.
    Report(ReportArgs),
    /// Write the built-in synthetic surface cloud as PLY.
    Cloud(CloudArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SimProblem {
    Relpose,
    Pnp,
    Pcr,
}

#[derive(Args)]
struct Common {
    /// Non-minimal samples per trial.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    m: Vec<usize>,
    /// Correspondences per sample.
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long, default_value_t = 25)]
    trials: usize,
    /// Comma-separated rules, e.g. `ideal,most-inliers,pair:0.1,tlp:0.1`.
    #[arg(long, default_value = "ideal,most-inliers,tlp:0.1")]
    rules: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; `.json` writes JSON, anything else CSV.
    #[arg(long)]
    out: PathBuf,
    /// Largest mAA threshold in degrees.
    #[arg(long, default_value_t = 10)]
    theta_max: u32,
    /// Record mean seconds per trial (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
    /// Evaluate TLP over the whole dataset instead of the sample union.
    #[arg(long)]
    tlp_full: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(value_enum)]
    problem: SimProblem,
    #[arg(long, value_delimiter = ',', required = true)]
    sigma: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    outlier_ratio: Vec<f64>,
    /// Dataset size; defaults to `m * sample-size`.
    #[arg(long)]
    n: Option<usize>,
    /// Partition one permutation prefix into non-overlapping samples.
    #[arg(long)]
    disjoint: bool,
    /// Add the fixed-sample baseline to the rule list.
    #[arg(long)]
    fixed_sample: bool,
    /// Minimal draws per sample (relpose default 100, pnp 1000).
    #[arg(long)]
    iterations: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CorfreeArgs {
    #[arg(long)]
    ply: PathBuf,
    /// Points in each of the two subsets.
    #[arg(long, default_value_t = 500)]
    points: usize,
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    /// PCR-99 stops once the best inlier ratio reaches this value.
    #[arg(long, default_value_t = 0.0009)]
    target_inlier_ratio: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "rule")]
    group_by: Vec<String>,
}

#[derive(Args)]
struct CloudArgs {
    #[arg(long, default_value_t = 2000)]
    points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write ASCII instead of binary little-endian.
    #[arg(long)]
    ascii: bool,
}

fn rules_of(common: &Common, fixed_sample: bool) -> anyhow::Result<Vec<ScoringRule>> {
    let mut rules = parse_rules(&common.rules)?;
    if fixed_sample && !rules.contains(&ScoringRule::FixedSample) {
        rules.push(ScoringRule::FixedSample);
    }
    Ok(rules)
}

fn tlp_eval(common: &Common) -> TlpEvalSet {
    if common.tlp_full {
        TlpEvalSet::FullDataset
    } else {
        TlpEvalSet::SampleUnion
    }
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<Vec<ExperimentConfig>> {
    let common = &args.common;
    let rules = rules_of(common, args.fixed_sample)?;
    let sample_size = common.sample_size.unwrap_or(match args.problem {
        SimProblem::Pcr => 2000,
        _ => 1000,
    });
    let mut cells = Vec::new();
    for &m in &common.m {
        for &sigma in &args.sigma {
            for &outlier_ratio in &args.outlier_ratio {
                let estimator = match args.problem {
                    SimProblem::Relpose => EstimatorSpec::RelPose { iterations: args.iterations.unwrap_or(100) },
                    SimProblem::Pnp => EstimatorSpec::Pnp { iterations: args.iterations.unwrap_or(1000) },
                    SimProblem::Pcr => EstimatorSpec::Pcr(Pcr99Config::for_noise(sigma)),
                };
                let mut plan = SamplePlan::new(m, sample_size);
                if args.disjoint {
                    plan = plan.disjoint();
                }
                cells.push(ExperimentConfig {
                    estimator,
                    scene: SceneConfig::new(args.n.unwrap_or(m * sample_size), sigma, outlier_ratio),
                    plan,
                    rules: rules.clone(),
                    metric: MetricConfig { trials: common.trials, theta_max: common.theta_max },
                    tlp_eval: tlp_eval(common),
                });
            }
        }
    }
    Ok(cells)
}

fn corfree(args: &CorfreeArgs) -> anyhow::Result<Vec<ExperimentConfig>> {
    let common = &args.common;
    let cloud = load_ply(&args.ply).with_context(|| format!("reading {}", args.ply.display()))?;
    let cloud = Arc::new(cloud);
    let config = CorfreeConfig { points_per_cloud: args.points, overlap: args.overlap, sigma: args.sigma };
    let sample_size = common.sample_size.unwrap_or(10_000);
    let rules = rules_of(common, false)?;
    Ok(common
        .m
        .iter()
        .map(|&m| {
            let mut cell = ExperimentConfig::corfree(cloud.clone(), config, m, sample_size, rules.clone(), common.trials);
            if let EstimatorSpec::Corfree { pcr, .. } = &mut cell.estimator {
                *pcr = pcr.with_inlier_ratio_target(args.target_inlier_ratio);
            }
            cell.metric.theta_max = common.theta_max;
            cell.tlp_eval = tlp_eval(common);
            cell
        })
        .collect())
}

fn run_cells(cells: &[ExperimentConfig], common: &Common) -> anyhow::Result<()> {
    for cell in cells {
        for rule in &cell.rules {
            if *rule == ScoringRule::FixedSample && matches!(cell.estimator, EstimatorSpec::Corfree { .. }) {
                bail!("fixed-sample is not defined for the correspondence-free problem");
            }
        }
    }
    let rows = run_grid(cells, common.seed, common.timing);
    let failed = rows.iter().filter(|r| r.maa.is_none()).count();
    emit_rows(&rows, &common.out)?;
    if failed > 0 {
        bail!("{failed} of {} rows have no result; see {}", rows.len(), common.out.display());
    }
    Ok(())
}

fn report(args: &ReportArgs) -> anyhow::Result<()> {
    let rows = read_rows(&args.input)?;
    let (columns, groups) = aggregate(&rows, &args.group_by)?;
    println!("{},mean_maa,rows", columns.join(","));
    for (key, mean, count) in groups {
        println!("{},{mean:.4},{count}", key.join(","));
    }
    Ok(())
}

fn cloud(args: &CloudArgs) -> anyhow::Result<()> {
    let encoding = if args.ascii { PlyEncoding::Ascii } else { PlyEncoding::BinaryLittleEndian };
    write_ply(&args.out, &surface_cloud(args.points, args.seed), encoding)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args).and_then(|cells| run_cells(&cells, &args.common)),
        Command::Corfree(args) => corfree(args).and_then(|cells| run_cells(&cells, &args.common)),
        Command::Report(args) => report(args),
        Command::Cloud(args) => cloud(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
