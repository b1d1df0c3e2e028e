//! `sr-arith`: run the stochastic rounding experiments from the command line.
//!
//! Every experiment subcommand writes a CSV table. With `--out DIR` it writes
//! `DIR/<experiment>.csv` and `DIR/<experiment>.meta.json`; without it the CSV
//! goes to stdout. Output bytes depend only on the arguments and the seed,
//! never on `--threads`.
//!
//! CSV schemas:
//!
//! | file | columns |
//! |------|---------|
//! | `unbiasedness.csv` | mode, x, trials, up_frequency, mean_err, std_err, median_err, ci95 |
//! | `stagnation.csv` | mode, trial_count, mean_final, std_final, expected_exact |
//! | `error_growth.csv` | experiment, mode, n, trials, median_err, rms_err, mean_signed_err, ci95 |
//! | `conditioning.csv` | mode, sigma_min_before, median_sigma_min_after, q05, q95, frac_positive |
//! | `pipeline.csv` | mode, pipeline, trials, failed, mean_err, median_err, q05, q95, ci95 |
//! | `singvals.csv` | index, sigma |
//!
//! Exit status is 0 on success, 2 for usage errors and 1 for runtime failures.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use sr_core::experiments::{
    self, calibration, ConditioningParams, ErrorGrowthParams, ExperimentConfig, PipelineParams,
    StagnationParams, SummandDistribution,
};
use sr_core::io::{load_matrix_csv, Table};
use sr_core::{linalg, ArithEnv, FormatSpec, OverflowPolicy, RngKey, RoundingMode};

#[derive(Parser, Debug)]
#[command(name = "sr-arith", version, about = "Stochastic rounding experiments on low-precision number formats")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Round one value repeatedly and print each result.
    Round(RoundArgs),
    /// Empirical bias of each mode at a fixed real.
    Unbiasedness(UnbiasednessArgs),
    /// Repeatedly add a small increment to a large accumulator.
    Stagnation(StagnationArgs),
    /// Normalized summation error against the number of summands.
    ErrorGrowth(ErrorGrowthArgs),
    /// Smallest singular value of a tall matrix before and after quantization.
    Conditioning(ConditioningArgs),
    /// Least squares with rounded inputs only versus rounded arithmetic throughout.
    Pipeline(PipelineArgs),
    /// Singular values of a matrix read from a headerless CSV file.
    Singvals(SingvalsArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Number format, e.g. f5e10m, bf16, q4.8, uq1.0.
    #[arg(long, default_value = "f5e10m")]
    format: FormatSpec,
    /// Comma-separated rounding modes: rn, sr, sr-updown, sr-sel[:tau].
    #[arg(long, value_delimiter = ',', default_value = "rn,sr")]
    modes: Vec<RoundingMode>,
    #[arg(long, env = "SR_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    trials: Option<usize>,
    /// Overflow handling: strict or saturate.
    #[arg(long, default_value = "strict")]
    policy: OverflowPolicy,
    /// Worker threads for trial parallelism (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for `<experiment>.csv` and `<experiment>.meta.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self, default_trials: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            self.format,
            self.modes.clone(),
            self.seed,
            self.trials.unwrap_or(default_trials),
        );
        cfg.policy = self.policy;
        cfg
    }
}

#[derive(Args, Debug)]
struct RoundArgs {
    #[arg(long, default_value = "f5e10m")]
    format: FormatSpec,
    #[arg(long, default_value = "sr")]
    mode: RoundingMode,
    #[arg(long, default_value = "strict")]
    policy: OverflowPolicy,
    #[arg(long, env = "SR_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, allow_negative_numbers = true)]
    value: f64,
    #[arg(long, default_value_t = 1)]
    repeat: u64,
}

#[derive(Args, Debug)]
struct UnbiasednessArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_negative_numbers = true)]
    value: f64,
}

#[derive(Args, Debug)]
struct StagnationArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_negative_numbers = true)]
    s0: f64,
    #[arg(long, allow_negative_numbers = true)]
    inc: f64,
    #[arg(long)]
    k: usize,
}

#[derive(Args, Debug)]
struct ErrorGrowthArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated, strictly increasing summand counts.
    #[arg(long, value_delimiter = ',', default_value = "1000,3000,10000,30000,100000")]
    n: Vec<usize>,
    /// Use this constant for every summand instead of uniform(0, 1) draws.
    #[arg(long, allow_negative_numbers = true)]
    constant: Option<f64>,
}

#[derive(Args, Debug)]
struct ConditioningArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 200)]
    rows: usize,
    #[arg(long, default_value_t = 5)]
    cols: usize,
    /// Keep all columns independent instead of duplicating the first.
    #[arg(long)]
    full_rank: bool,
    /// Read the matrix from a headerless CSV file instead of generating one.
    #[arg(long, conflicts_with_all = ["rows", "cols", "full_rank"])]
    matrix: Option<PathBuf>,
    #[arg(long, default_value_t = calibration::SIGMA_MIN_POSITIVE)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 100)]
    rows: usize,
    #[arg(long, default_value_t = 4)]
    cols: usize,
}

#[derive(Args, Debug)]
struct SingvalsArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Errors caused by the arguments rather than by the computation.
fn is_usage_error(e: &anyhow::Error) -> bool {
    matches!(
        e.downcast_ref::<sr_core::Error>(),
        Some(sr_core::Error::Config(_) | sr_core::Error::InvalidFormat(_))
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Round(a) => round(a),
        Command::Singvals(a) => singvals(a),
        Command::Unbiasedness(a) => with_pool(&a.common, || unbiasedness(&a)),
        Command::Stagnation(a) => with_pool(&a.common, || stagnation(&a)),
        Command::ErrorGrowth(a) => with_pool(&a.common, || error_growth(&a)),
        Command::Conditioning(a) => with_pool(&a.common, || conditioning(&a)),
        Command::Pipeline(a) => with_pool(&a.common, || pipeline(&a)),
    }
}

fn with_pool<F>(common: &Common, f: F) -> Result<()>
where
    F: FnOnce() -> Result<()> + Send,
{
    match common.threads {
        None => f(),
        Some(0) => Err(sr_core::Error::Config("--threads must be positive".into()).into()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")?
            .install(f),
    }
}

fn round(a: RoundArgs) -> Result<()> {
    let key = RngKey::derive(a.seed, ["round"]);
    let mut env = ArithEnv::new(a.format, a.mode, a.policy, key);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for _ in 0..a.repeat {
        let v = env.round(a.value).with_context(|| format!("--value {}", a.value))?;
        writeln!(out, "{}", sr_core::io::format_real(v))?;
    }
    Ok(())
}

fn singvals(a: SingvalsArgs) -> Result<()> {
    let m = load_matrix_csv(&a.matrix)?;
    let sv = linalg::singular_values(&m)?;
    let mut t = Table::new(&["index", "sigma"]);
    for (i, s) in sv.iter().enumerate() {
        t.push(vec![i.into(), (*s).into()]);
    }
    let meta = json!({
        "matrix": a.matrix.display().to_string(),
        "rows": m.rows(),
        "cols": m.cols(),
        "frobenius_norm": m.frobenius_norm(),
    });
    emit("singvals", &t, meta, a.out.as_deref())
}

fn unbiasedness(a: &UnbiasednessArgs) -> Result<()> {
    let cfg = a.common.config(experiments::MIN_UNBIASEDNESS_TRIALS);
    let report = experiments::run_unbiasedness(&cfg, a.value)?;
    let meta = json!({
        "config": cfg,
        "x": a.value,
        "bracket": [report.lo, report.hi],
    });
    emit("unbiasedness", &report.to_table(), meta, a.common.out.as_deref())
}

fn stagnation(a: &StagnationArgs) -> Result<()> {
    let cfg = a.common.config(1000);
    let params = StagnationParams { s0: a.s0, increment: a.inc, k: a.k };
    let report = experiments::run_stagnation(&cfg, &params)?;
    let meta = json!({
        "config": cfg,
        "params": params,
        "neighbor_distance": report.neighbor_distance,
    });
    emit("stagnation", &report.to_table(), meta, a.common.out.as_deref())
}

fn error_growth(a: &ErrorGrowthArgs) -> Result<()> {
    let cfg = a.common.config(100);
    let distribution = match a.constant {
        Some(c) => SummandDistribution::Constant { c },
        None => SummandDistribution::Uniform01,
    };
    let params = ErrorGrowthParams { n_list: a.n.clone(), distribution };
    let report = experiments::run_error_growth(&cfg, &params)?;
    let meta = json!({
        "config": cfg,
        "params": params,
        "normalization": report.normalization,
        "unit_roundoff": report.unit_roundoff,
        "fits": report.fits,
    });
    emit("error_growth", &report.to_table(), meta, a.common.out.as_deref())
}

fn conditioning(a: &ConditioningArgs) -> Result<()> {
    let cfg = a.common.config(1000);
    let (report, source) = match &a.matrix {
        Some(path) => {
            let m = load_matrix_csv(path)?;
            let r = experiments::run_conditioning_on(&cfg, &m, a.threshold)?;
            (r, json!({ "matrix": path.display().to_string() }))
        }
        None => {
            let mut params = ConditioningParams::new(a.rows, a.cols, !a.full_rank);
            params.positive_threshold = a.threshold;
            (experiments::run_conditioning(&cfg, &params)?, json!(params))
        }
    };
    let meta = json!({
        "config": cfg,
        "params": source,
        "frobenius_norm": report.frobenius_norm,
        "frac_increased": report
            .rows
            .iter()
            .map(|r| json!({ "mode": r.mode, "frac_increased": r.frac_increased }))
            .collect::<Vec<_>>(),
    });
    emit("conditioning", &report.to_table(), meta, a.common.out.as_deref())
}

fn pipeline(a: &PipelineArgs) -> Result<()> {
    let cfg = a.common.config(100);
    let params = PipelineParams { rows: a.rows, cols: a.cols };
    let report = experiments::run_pipeline_comparison(&cfg, &params)?;
    let meta = json!({
        "config": cfg,
        "params": params,
        "x_true": report.x_true,
    });
    emit("pipeline", &report.to_table(), meta, a.common.out.as_deref())
}

fn metadata(experiment: &str, extra: Value) -> Value {
    json!({
        "experiment": experiment,
        "tool": "sr-arith",
        "version": concat!("v", env!("CARGO_PKG_VERSION")),
        "calibration": {
            "id": calibration::ID,
            "sr_slope_band": calibration::SR_SLOPE_BAND,
            "rn_over_sr_min_factor": calibration::RN_OVER_SR_MIN_FACTOR,
            "sigma_min_positive": calibration::SIGMA_MIN_POSITIVE,
            "sigma_min_min_fraction": calibration::SIGMA_MIN_MIN_FRACTION,
        },
        "run": extra,
    })
}

fn emit(experiment: &str, table: &Table, extra: Value, out: Option<&Path>) -> Result<()> {
    let csv = table.to_csv_string();
    match out {
        None => {
            std::io::stdout().write_all(csv.as_bytes())?;
        }
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating --out {}", dir.display()))?;
            let csv_path = dir.join(format!("{experiment}.csv"));
            fs::write(&csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;
            let meta_path = dir.join(format!("{experiment}.meta.json"));
            let mut text = serde_json::to_string_pretty(&metadata(experiment, extra))?;
            text.push('\n');
            fs::write(&meta_path, text).with_context(|| format!("writing {}", meta_path.display()))?;
        }
    }
    Ok(())
}
