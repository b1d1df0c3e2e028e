//! Reproducible Monte-Carlo drivers.
//!
//! Every trial draws from its own stream `derive(seed, [experiment, ..., trial])`
//! and starts its counter at zero, so trials are independent of execution
//! order and thread count. Trials run on the ambient rayon pool; results are
//! collected in trial order before any statistic is computed.
//!
//! Within one trial every rounding mode reuses the same stream, which pairs
//! the modes on common random numbers.

use rayon::prelude::*;
use serde::Serialize;

use crate::arith::{sum_exact, ArithEnv};
use crate::error::{Error, Result};
use crate::formats::FormatSpec;
use crate::io::{Cell, Table};
use crate::linalg::{lls_solve, sigma_min, Matrix};
use crate::rng::{Label, RngKey};
use crate::rounding::{round_parts, OverflowPolicy, RoundingMode};
use crate::stats::SummaryStats;

/// Thresholds measured by a release calibration run and then frozen.
pub mod calibration {
    /// Identifier written into every metadata sidecar.
    pub const ID: &str = "cal-2026-10-a";
    /// Accepted range for the SR log-log slope of RMS normalized error.
    pub const SR_SLOPE_BAND: (f64, f64) = (0.35, 0.65);
    /// RN median normalized error at the largest n must exceed SR's by this factor.
    pub const RN_OVER_SR_MIN_FACTOR: f64 = 5.0;
    /// σ_min after quantization counts as positive above this value.
    pub const SIGMA_MIN_POSITIVE: f64 = 1e-12;
    /// Required fraction of trials with σ_min above the threshold.
    pub const SIGMA_MIN_MIN_FRACTION: f64 = 0.99;
}

/// Minimum trial count for any statistical claim.
pub const MIN_TRIALS: usize = 30;
/// Minimum trial count for the unbiasedness experiment.
pub const MIN_UNBIASEDNESS_TRIALS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub fmt: FormatSpec,
    pub modes: Vec<RoundingMode>,
    pub policy: OverflowPolicy,
    pub seed: u64,
    pub trials: usize,
}

impl ExperimentConfig {
    pub fn new(fmt: FormatSpec, modes: Vec<RoundingMode>, seed: u64, trials: usize) -> Self {
        Self {
            fmt,
            modes,
            policy: OverflowPolicy::Strict,
            seed,
            trials,
        }
    }

    fn validate(&self, min_trials: usize) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Config("at least one rounding mode is required".into()));
        }
        if self.trials < min_trials {
            return Err(Error::Config(format!(
                "trials must be at least {min_trials}, got {}",
                self.trials
            )));
        }
        Ok(())
    }

    fn trial_key(&self, experiment: &str, extra: &[Label], trial: usize) -> RngKey {
        let path = std::iter::once(Label::from(experiment))
            .chain(extra.iter().cloned())
            .chain(std::iter::once(Label::from(trial)));
        RngKey::derive(self.seed, path)
    }

    fn env(&self, mode: RoundingMode, key: RngKey) -> ArithEnv {
        ArithEnv::new(self.fmt, mode, self.policy, key)
    }
}

fn for_trial<T>(trial: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Trial {
        trial,
        source: Box::new(e),
    })
}

/// Runs `f` for every trial on the ambient pool, in trial order.
fn run_trials<T, F>(trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| for_trial(t, f(t)))
        .collect()
}

// ---------------------------------------------------------------------------
// Unbiasedness

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnbiasednessRow {
    pub mode: RoundingMode,
    /// Statistics of `round(x) - x`.
    pub error: SummaryStats,
    /// Fraction of trials that returned the upper bracket endpoint.
    pub up_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnbiasednessReport {
    pub x: f64,
    pub lo: f64,
    pub hi: f64,
    pub rows: Vec<UnbiasednessRow>,
}

pub fn run_unbiasedness(cfg: &ExperimentConfig, x: f64) -> Result<UnbiasednessReport> {
    cfg.validate(MIN_UNBIASEDNESS_TRIALS)?;
    let bracket = cfg.fmt.bracket(x)?;
    let rows = cfg
        .modes
        .iter()
        .map(|&mode| {
            let results = run_trials(cfg.trials, |t| {
                let key = cfg.trial_key("unbiasedness", &[], t);
                cfg.env(mode, key).round(x)
            })?;
            let errors: Vec<f64> = results.iter().map(|r| r - x).collect();
            let ups = results
                .iter()
                .filter(|&&r| !bracket.is_exact() && r == bracket.hi)
                .count();
            Ok(UnbiasednessRow {
                mode,
                error: SummaryStats::from_samples(&errors)?,
                up_frequency: ups as f64 / cfg.trials as f64,
            })
        })
        .collect::<Result<_>>()?;
    Ok(UnbiasednessReport {
        x,
        lo: bracket.lo,
        hi: bracket.hi,
        rows,
    })
}

impl UnbiasednessReport {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            "mode",
            "x",
            "trials",
            "up_frequency",
            "mean_err",
            "std_err",
            "median_err",
            "ci95",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.mode.to_string().into(),
                self.x.into(),
                r.error.trials.into(),
                r.up_frequency.into(),
                r.error.mean.into(),
                r.error.std.into(),
                r.error.median.into(),
                r.error.ci95_halfwidth.into(),
            ]);
        }
        t
    }
}

// ---------------------------------------------------------------------------
// Stagnation

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StagnationParams {
    /// Starting value of the accumulator (must be a member of the format).
    pub s0: f64,
    /// Value added at every step (must be a member of the format).
    pub increment: f64,
    /// Number of increments.
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StagnationRow {
    pub mode: RoundingMode,
    pub final_sum: SummaryStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StagnationReport {
    pub params: StagnationParams,
    pub expected_exact: f64,
    /// Distance from `s0` to the next member in the direction of the increment.
    pub neighbor_distance: f64,
    pub rows: Vec<StagnationRow>,
}

pub fn run_stagnation(cfg: &ExperimentConfig, params: &StagnationParams) -> Result<StagnationReport> {
    cfg.validate(MIN_TRIALS)?;
    let StagnationParams { s0, increment, k } = *params;
    for (name, v) in [("s0", s0), ("increment", increment)] {
        if !cfg.fmt.is_representable(v) {
            return Err(Error::Config(format!("{name} = {v} is not a member of {}", cfg.fmt)));
        }
    }
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let neighbor = if increment >= 0.0 { cfg.fmt.next_up(s0) } else { cfg.fmt.next_down(s0) };
    let neighbor_distance = neighbor.map_or(f64::INFINITY, |v| (v - s0).abs());
    if increment.abs() >= neighbor_distance / 2.0 {
        log::warn!(
            "increment {increment} is not below half the spacing {neighbor_distance} at s0 = {s0}; \
             round-to-nearest will not stagnate"
        );
    }
    let mut xs = Vec::with_capacity(k + 1);
    xs.push(s0);
    xs.extend(std::iter::repeat_n(increment, k));
    let expected_exact = sum_exact(&xs)?;

    let rows = cfg
        .modes
        .iter()
        .map(|&mode| {
            let finals = run_trials(cfg.trials, |t| {
                let key = cfg.trial_key("stagnation", &[], t);
                cfg.env(mode, key).sum_sequential(&xs)
            })?;
            Ok(StagnationRow {
                mode,
                final_sum: SummaryStats::from_samples(&finals)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(StagnationReport {
        params: *params,
        expected_exact,
        neighbor_distance,
        rows,
    })
}

impl StagnationReport {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["mode", "trial_count", "mean_final", "std_final", "expected_exact"]);
        for r in &self.rows {
            t.push(vec![
                r.mode.to_string().into(),
                r.final_sum.trials.into(),
                r.final_sum.mean.into(),
                r.final_sum.std.into(),
                self.expected_exact.into(),
            ]);
        }
        t
    }
}

// ---------------------------------------------------------------------------
// Error growth

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SummandDistribution {
    /// Uniform on [0, 1), rounded to nearest into the format.
    Uniform01,
    /// The same value for every summand, rounded to nearest into the format.
    Constant { c: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorGrowthParams {
    pub n_list: Vec<usize>,
    pub distribution: SummandDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorGrowthRow {
    pub mode: RoundingMode,
    pub n: usize,
    pub trials: usize,
    pub median_err: f64,
    pub rms_err: f64,
    pub mean_signed_err: f64,
    pub ci95: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub mode: RoundingMode,
    pub slope: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorGrowthReport {
    pub params: ErrorGrowthParams,
    /// How each error is normalized.
    pub normalization: &'static str,
    pub unit_roundoff: f64,
    pub rows: Vec<ErrorGrowthRow>,
    /// Log-log slope of RMS normalized error against n, per mode.
    pub fits: Vec<SlopeFit>,
}

pub const ERROR_NORMALIZATION: &str = "|computed - exact| / (unit_roundoff * sum(|x_i|))";

fn summands(cfg: &ExperimentConfig, dist: SummandDistribution, n: usize, trial: usize) -> Result<Vec<f64>> {
    let nearest = |v: f64| {
        round_parts(&cfg.fmt, RoundingMode::NearestEven, cfg.policy, v, 0.0, || 0.0).map(|r| r.value)
    };
    match dist {
        SummandDistribution::Uniform01 => {
            let key = cfg.trial_key("error-growth", &["data".into(), n.into()], trial);
            (0..n as u64).map(|c| nearest(key.uniform_unit(c))).collect()
        }
        SummandDistribution::Constant { c } => {
            let v = nearest(c)?;
            Ok(vec![v; n])
        }
    }
}

pub fn run_error_growth(cfg: &ExperimentConfig, params: &ErrorGrowthParams) -> Result<ErrorGrowthReport> {
    cfg.validate(MIN_TRIALS)?;
    let n_list = &params.n_list;
    if n_list.is_empty() || n_list[0] == 0 {
        return Err(Error::Config("n_list must contain positive sizes".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("n_list must be strictly increasing".into()));
    }
    if n_list.len() > 1 && (*n_list.last().unwrap() as f64) < 100.0 * n_list[0] as f64 {
        log::warn!("n_list spans less than two decades; the fitted slope will be noisy");
    }
    let u = cfg.fmt.unit_roundoff().value;
    let max = cfg.fmt.max_finite();

    let mut rows = Vec::new();
    for &n in n_list {
        // per trial: one normalized signed error per mode
        let per_trial: Vec<Vec<f64>> = run_trials(cfg.trials, |t| {
            let xs = summands(cfg, params.distribution, n, t)?;
            let exact = sum_exact(&xs)?;
            let abs: Vec<f64> = xs.iter().map(|v| v.abs()).collect();
            let scale = sum_exact(&abs)?;
            if scale > max {
                return Err(Error::Config(format!(
                    "n = {n}: sum of |x_i| = {scale} exceeds the format maximum {max}"
                )));
            }
            let key = cfg.trial_key("error-growth", &[n.into()], t);
            cfg.modes
                .iter()
                .map(|&mode| {
                    let computed = cfg.env(mode, key).sum_sequential(&xs)?;
                    Ok(if scale == 0.0 {
                        0.0
                    } else {
                        (computed - exact) / (u * scale)
                    })
                })
                .collect()
        })?;
        for (m, &mode) in cfg.modes.iter().enumerate() {
            let signed: Vec<f64> = per_trial.iter().map(|v| v[m]).collect();
            let abs: Vec<f64> = signed.iter().map(|v| v.abs()).collect();
            let signed_stats = SummaryStats::from_samples(&signed)?;
            let abs_stats = SummaryStats::from_samples(&abs)?;
            let rms = (abs.iter().map(|v| v * v).sum::<f64>() / abs.len() as f64).sqrt();
            rows.push(ErrorGrowthRow {
                mode,
                n,
                trials: cfg.trials,
                median_err: abs_stats.median,
                rms_err: rms,
                mean_signed_err: signed_stats.mean,
                ci95: signed_stats.ci95_halfwidth,
            });
        }
    }

    let mut fits = Vec::new();
    if n_list.len() >= 2 {
        for &mode in &cfg.modes {
            let points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.mode == mode)
                .map(|r| (r.n as f64, r.rms_err))
                .collect();
            match fit_loglog_slope(&points) {
                Ok(fit) => fits.push(SlopeFit {
                    mode,
                    slope: fit.slope,
                    stderr: fit.stderr,
                }),
                Err(e) => log::warn!("no slope fit for mode {mode}: {e}"),
            }
        }
    }
    Ok(ErrorGrowthReport {
        params: params.clone(),
        normalization: ERROR_NORMALIZATION,
        unit_roundoff: u,
        rows,
        fits,
    })
}

impl ErrorGrowthReport {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            "experiment",
            "mode",
            "n",
            "trials",
            "median_err",
            "rms_err",
            "mean_signed_err",
            "ci95",
        ]);
        for r in &self.rows {
            t.push(vec![
                "error_growth".into(),
                r.mode.to_string().into(),
                r.n.into(),
                r.trials.into(),
                r.median_err.into(),
                r.rms_err.into(),
                r.mean_signed_err.into(),
                r.ci95.into(),
            ]);
        }
        t
    }

    pub fn row(&self, mode: RoundingMode, n: usize) -> Option<&ErrorGrowthRow> {
        self.rows.iter().find(|r| r.mode == mode && r.n == n)
    }

    pub fn fit(&self, mode: RoundingMode) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.mode == mode)
    }
}

// ---------------------------------------------------------------------------
// Conditioning

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditioningParams {
    pub rows: usize,
    pub cols: usize,
    /// Make the last column an exact copy of the first.
    pub near_rank_deficiency: bool,
    /// σ_min above this counts as positive.
    pub positive_threshold: f64,
}

impl ConditioningParams {
    pub fn new(rows: usize, cols: usize, near_rank_deficiency: bool) -> Self {
        Self {
            rows,
            cols,
            near_rank_deficiency,
            positive_threshold: calibration::SIGMA_MIN_POSITIVE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditioningRow {
    pub mode: RoundingMode,
    pub sigma_min_after: SummaryStats,
    /// Fraction of trials whose σ_min exceeds the positive threshold.
    pub frac_positive: f64,
    /// Fraction of trials whose σ_min is at least the unquantized σ_min.
    pub frac_increased: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditioningReport {
    pub rows_cols: (usize, usize),
    pub frobenius_norm: f64,
    pub sigma_min_before: f64,
    pub positive_threshold: f64,
    pub rows: Vec<ConditioningRow>,
}

/// Deterministic tall test matrix with entries uniform on [-1, 1).
pub fn conditioning_matrix(seed: u64, params: &ConditioningParams) -> Result<Matrix> {
    let ConditioningParams { rows, cols, near_rank_deficiency, .. } = *params;
    if cols == 0 || rows < 4 * cols {
        return Err(Error::Config(format!(
            "conditioning needs a tall matrix with rows >= 4 * cols, got {rows}x{cols}"
        )));
    }
    if near_rank_deficiency && cols < 2 {
        return Err(Error::Config("a duplicated column needs at least two columns".into()));
    }
    let key = RngKey::derive(seed, ["conditioning", "matrix"]);
    let mut data: Vec<f64> = (0..(rows * cols) as u64)
        .map(|c| 2.0 * key.uniform_unit(c) - 1.0)
        .collect();
    if near_rank_deficiency {
        for i in 0..rows {
            data[i * cols + cols - 1] = data[i * cols];
        }
    }
    Matrix::from_row_major(rows, cols, data)
}

pub fn run_conditioning(cfg: &ExperimentConfig, params: &ConditioningParams) -> Result<ConditioningReport> {
    let a = conditioning_matrix(cfg.seed, params)?;
    run_conditioning_on(cfg, &a, params.positive_threshold)
}

/// Conditioning experiment on a caller-supplied matrix.
pub fn run_conditioning_on(cfg: &ExperimentConfig, a: &Matrix, positive_threshold: f64) -> Result<ConditioningReport> {
    cfg.validate(MIN_TRIALS)?;
    let before = sigma_min(a)?;
    let rows = cfg
        .modes
        .iter()
        .map(|&mode| {
            let after = run_trials(cfg.trials, |t| {
                let key = cfg.trial_key("conditioning", &[], t);
                let q = cfg.env(mode, key).quantize_matrix(a)?;
                sigma_min(&q)
            })?;
            let n = after.len() as f64;
            Ok(ConditioningRow {
                mode,
                sigma_min_after: SummaryStats::from_samples(&after)?,
                frac_positive: after.iter().filter(|&&s| s > positive_threshold).count() as f64 / n,
                frac_increased: after.iter().filter(|&&s| s >= before).count() as f64 / n,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ConditioningReport {
        rows_cols: (a.rows(), a.cols()),
        frobenius_norm: a.frobenius_norm(),
        sigma_min_before: before,
        positive_threshold,
        rows,
    })
}

impl ConditioningReport {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            "mode",
            "sigma_min_before",
            "median_sigma_min_after",
            "q05",
            "q95",
            "frac_positive",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.mode.to_string().into(),
                self.sigma_min_before.into(),
                r.sigma_min_after.median.into(),
                r.sigma_min_after.q05.into(),
                r.sigma_min_after.q95.into(),
                r.frac_positive.into(),
            ]);
        }
        t
    }
}

// ---------------------------------------------------------------------------
// Perturbation-only versus full rounded computation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Round the inputs once, then solve in working precision.
    InputOnly,
    /// Round the inputs, then solve the normal equations with every operation rounded.
    Full,
}

impl Pipeline {
    pub fn label(&self) -> &'static str {
        match self {
            Pipeline::InputOnly => "input_only",
            Pipeline::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineParams {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineRow {
    pub mode: RoundingMode,
    pub pipeline: Pipeline,
    pub succeeded: usize,
    pub failed: usize,
    /// Relative solution error `‖x̂ - x*‖ / ‖x*‖` over successful trials.
    pub error: Option<SummaryStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedRow {
    pub mode: RoundingMode,
    /// Trials where both pipelines succeeded.
    pub pairs: usize,
    /// Statistics of `full_error - input_only_error`.
    pub difference: Option<SummaryStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub rows_cols: (usize, usize),
    pub x_true: Vec<f64>,
    pub rows: Vec<PipelineRow>,
    pub paired: Vec<PairedRow>,
}

/// Well-conditioned tall system with entries uniform on [-0.5, 0.5).
///
/// The range keeps `AᵀA` and `Aᵀb` inside small fixed-point grids such as q4.8
/// for about a hundred rows.
pub fn pipeline_system(seed: u64, params: &PipelineParams) -> Result<(Matrix, Vec<f64>)> {
    let PipelineParams { rows, cols } = *params;
    if cols == 0 || rows < 4 * cols {
        return Err(Error::Config(format!(
            "pipeline needs a tall matrix with rows >= 4 * cols, got {rows}x{cols}"
        )));
    }
    let key = RngKey::derive(seed, ["pipeline", "matrix"]);
    let data = (0..(rows * cols) as u64)
        .map(|c| key.uniform_unit(c) - 0.5)
        .collect();
    let a = Matrix::from_row_major(rows, cols, data)?;
    let pattern = [1.0, -0.5, 0.25, 0.75];
    let x_true = (0..cols).map(|j| pattern[j % pattern.len()]).collect();
    Ok((a, x_true))
}

pub fn run_pipeline_comparison(cfg: &ExperimentConfig, params: &PipelineParams) -> Result<PipelineReport> {
    let (a, x_true) = pipeline_system(cfg.seed, params)?;
    run_pipeline_on(cfg, &a, &x_true)
}

fn relative_error(x: &[f64], truth: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = truth.iter().map(|v| v * v).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::RankDeficient { .. } | Error::OutOfRange { .. } | Error::DivisionByZero
    )
}

/// Pipeline comparison on a caller-supplied system `A x = A x_true`.
pub fn run_pipeline_on(cfg: &ExperimentConfig, a: &Matrix, x_true: &[f64]) -> Result<PipelineReport> {
    cfg.validate(MIN_TRIALS)?;
    let b = a.matvec(x_true)?;
    let mut rows = Vec::new();
    let mut paired = Vec::new();
    for &mode in &cfg.modes {
        let outcomes: Vec<(Option<f64>, Option<f64>)> = run_trials(cfg.trials, |t| {
            let key = cfg.trial_key("pipeline", &[], t);
            let mut env = cfg.env(mode, key);
            let aq = env.quantize_matrix(a)?;
            let bq = env.quantize_vector(&b)?;
            let settle = |r: Result<Vec<f64>>| match r {
                Ok(x) => Ok(Some(relative_error(&x, x_true))),
                Err(e) if recoverable(&e) => Ok(None),
                Err(e) => Err(e),
            };
            let input_only = settle(lls_solve(&aq, &bq))?;
            let full = settle(env.solve_normal_equations(&aq, &bq))?;
            Ok((input_only, full))
        })?;
        for pipeline in [Pipeline::InputOnly, Pipeline::Full] {
            let errs: Vec<f64> = outcomes
                .iter()
                .filter_map(|o| match pipeline {
                    Pipeline::InputOnly => o.0,
                    Pipeline::Full => o.1,
                })
                .collect();
            rows.push(PipelineRow {
                mode,
                pipeline,
                succeeded: errs.len(),
                failed: outcomes.len() - errs.len(),
                error: SummaryStats::from_samples(&errs).ok(),
            });
        }
        let diffs: Vec<f64> = outcomes
            .iter()
            .filter_map(|o| Some(o.1? - o.0?))
            .collect();
        paired.push(PairedRow {
            mode,
            pairs: diffs.len(),
            difference: SummaryStats::from_samples(&diffs).ok(),
        });
    }
    Ok(PipelineReport {
        rows_cols: (a.rows(), a.cols()),
        x_true: x_true.to_vec(),
        rows,
        paired,
    })
}

impl PipelineReport {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            "mode",
            "pipeline",
            "trials",
            "failed",
            "mean_err",
            "median_err",
            "q05",
            "q95",
            "ci95",
        ]);
        let stats_cells = |s: &Option<SummaryStats>| -> Vec<Cell> {
            match s {
                Some(s) => vec![
                    s.mean.into(),
                    s.median.into(),
                    s.q05.into(),
                    s.q95.into(),
                    s.ci95_halfwidth.into(),
                ],
                None => vec![Cell::Text(String::new()); 5],
            }
        };
        for r in &self.rows {
            let mut row: Vec<Cell> = vec![
                r.mode.to_string().into(),
                r.pipeline.label().into(),
                (r.succeeded + r.failed).into(),
                r.failed.into(),
            ];
            row.extend(stats_cells(&r.error));
            t.push(row);
        }
        for p in &self.paired {
            let total = self
                .rows
                .iter()
                .find(|r| r.mode == p.mode)
                .map_or(0, |r| r.succeeded + r.failed);
            let mut row: Vec<Cell> = vec![
                p.mode.to_string().into(),
                "full_minus_input_only".into(),
                total.into(),
                (total - p.pairs).into(),
            ];
            row.extend(stats_cells(&p.difference));
            t.push(row);
        }
        t
    }

    pub fn row(&self, mode: RoundingMode, pipeline: Pipeline) -> Option<&PipelineRow> {
        self.rows.iter().find(|r| r.mode == mode && r.pipeline == pipeline)
    }
}

// ---------------------------------------------------------------------------
// Slope fitting

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    /// Standard error of the slope; NaN when there are only two points.
    pub stderr: f64,
}

/// Least-squares line through `(ln n, ln y)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "a slope needs at least two points, got {}",
            points.len()
        )));
    }
    for &(n, y) in points {
        if n.is_nan() || n <= 0.0 {
            return Err(Error::NonPositive(n));
        }
        if y.is_nan() || y <= 0.0 {
            return Err(Error::NonPositive(y));
        }
    }
    let mut ns: Vec<f64> = points.iter().map(|p| p.0).collect();
    ns.sort_by(f64::total_cmp);
    if ns.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("log-log fit needs distinct n values".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let design = Matrix::from_row_major(
        points.len(),
        2,
        xs.iter().flat_map(|&x| [1.0, x]).collect(),
    )?;
    let coef = lls_solve(&design, &ys)?;
    let slope = coef[1];
    let m = points.len();
    let stderr = if m > 2 {
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - coef[0] - slope * x).powi(2))
            .sum();
        let mean_x = xs.iter().sum::<f64>() / m as f64;
        let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
        (rss / (m - 2) as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(LogLogFit { slope, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rn_sr() -> Vec<RoundingMode> {
        vec![RoundingMode::NearestEven, RoundingMode::SrProportional]
    }

    #[test]
    fn loglog_exact_lines() {
        let fit = fit_loglog_slope(&[(1.0, 1.0), (10.0, 10.0), (100.0, 100.0)]).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!(fit.stderr.abs() < 1e-12);
        let fit = fit_loglog_slope(&[(1.0, 1.0), (100.0, 10.0)]).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!(fit.stderr.is_nan());
        assert!(matches!(fit_loglog_slope(&[(1.0, 0.0), (2.0, 1.0)]), Err(Error::NonPositive(_))));
        assert!(fit_loglog_slope(&[(2.0, 1.0), (2.0, 3.0)]).is_err());
    }

    #[test]
    fn loglog_noisy_square_root() {
        let key = RngKey::derive(31, ["fit"]);
        let points: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let n = 10f64.powf(1.0 + i as f64 * 0.1);
                let eps = 0.01 * key.standard_normal(i);
                (n, n.sqrt() * eps.exp())
            })
            .collect();
        let fit = fit_loglog_slope(&points).unwrap();
        assert!((fit.slope - 0.5).abs() <= 3.0 * fit.stderr, "{fit:?}");
        assert!(fit.stderr > 0.0);
    }

    #[test]
    fn unbiasedness_members_have_zero_error() {
        let cfg = ExperimentConfig::new(
            FormatSpec::binary16(),
            vec![RoundingMode::NearestEven, RoundingMode::SrProportional, RoundingMode::SrUpDown],
            1,
            10_000,
        );
        let r = run_unbiasedness(&cfg, 1.5).unwrap();
        for row in &r.rows {
            assert_eq!((row.error.mean, row.error.std, row.up_frequency), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn unbiasedness_rn_is_deterministic() {
        let cfg = ExperimentConfig::new(FormatSpec::one_bit(), rn_sr(), 1, 10_000);
        let r = run_unbiasedness(&cfg, 0.7).unwrap();
        let rn = &r.rows[0];
        assert!((rn.error.mean - 0.3).abs() < 1e-12);
        assert!(rn.error.std < 1e-12);
        let sr = &r.rows[1];
        assert!(sr.error.mean_within(0.0, 4.0));
        let small = ExperimentConfig::new(FormatSpec::one_bit(), rn_sr(), 1, 100);
        assert!(matches!(run_unbiasedness(&small, 0.7), Err(Error::Config(_))));
    }

    #[test]
    fn stagnation_small() {
        let cfg = ExperimentConfig::new(FormatSpec::binary16(), rn_sr(), 7, 200);
        let p = StagnationParams { s0: 2048.0, increment: 0.5, k: 1000 };
        let r = run_stagnation(&cfg, &p).unwrap();
        assert_eq!(r.expected_exact, 2548.0);
        assert_eq!(r.neighbor_distance, 2.0);
        assert_eq!(r.rows[0].final_sum.mean, 2048.0);
        assert_eq!(r.rows[0].final_sum.std, 0.0);
        assert!(r.rows[1].final_sum.mean_within(2548.0, 4.0));
        let bad = StagnationParams { s0: 2049.0, ..p };
        assert!(matches!(run_stagnation(&cfg, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn error_growth_single_element_is_exact() {
        let cfg = ExperimentConfig::new(FormatSpec::binary16(), rn_sr(), 3, 30);
        let p = ErrorGrowthParams { n_list: vec![1], distribution: SummandDistribution::Uniform01 };
        let r = run_error_growth(&cfg, &p).unwrap();
        for row in &r.rows {
            assert_eq!((row.median_err, row.rms_err, row.mean_signed_err), (0.0, 0.0, 0.0));
        }
        assert!(r.fits.is_empty());
    }

    #[test]
    fn error_growth_rejects_overflow_and_bad_lists() {
        let cfg = ExperimentConfig::new(FormatSpec::binary16(), rn_sr(), 3, 30);
        let p = ErrorGrowthParams {
            n_list: vec![10, 100_000],
            distribution: SummandDistribution::Constant { c: 1.0 },
        };
        let err = run_error_growth(&cfg, &p).unwrap_err().to_string();
        assert!(err.contains("n = 100000"), "{err}");
        let p = ErrorGrowthParams { n_list: vec![10, 10], distribution: SummandDistribution::Uniform01 };
        assert!(run_error_growth(&cfg, &p).is_err());
    }

    #[test]
    fn conditioning_on_grid_matrix_is_unchanged() {
        let fmt = FormatSpec::fixed(true, 4, 8).unwrap();
        let cfg = ExperimentConfig::new(fmt, rn_sr(), 5, 40);
        let params = ConditioningParams::new(40, 5, false);
        let raw = conditioning_matrix(5, &params).unwrap();
        let mut rn = ArithEnv::new(fmt, RoundingMode::NearestEven, OverflowPolicy::Strict, RngKey::new(0, 0));
        let on_grid = rn.quantize_matrix(&raw).unwrap();
        let r = run_conditioning_on(&cfg, &on_grid, 1e-12).unwrap();
        for row in &r.rows {
            assert_eq!(row.sigma_min_after.q05, r.sigma_min_before);
            assert_eq!(row.sigma_min_after.q95, r.sigma_min_before);
        }
    }

    #[test]
    fn conditioning_requires_tall_matrix() {
        let cfg = ExperimentConfig::new(FormatSpec::fixed(true, 4, 8).unwrap(), rn_sr(), 5, 40);
        assert!(run_conditioning(&cfg, &ConditioningParams::new(10, 5, true)).is_err());
    }

    #[test]
    fn pipeline_identity_on_grid() {
        let cfg = ExperimentConfig::new(FormatSpec::fixed(true, 4, 8).unwrap(), rn_sr(), 9, 30);
        let r = run_pipeline_on(&cfg, &Matrix::identity(4), &[1.0, -0.5, 0.25, 0.75]).unwrap();
        for row in &r.rows {
            assert_eq!(row.failed, 0);
            let s = row.error.unwrap();
            assert_eq!((s.mean, s.q95), (0.0, 0.0));
        }
    }

    #[test]
    fn trials_are_independent_of_thread_count() {
        let cfg = ExperimentConfig::new(FormatSpec::binary16(), rn_sr(), 11, 64);
        let p = StagnationParams { s0: 1024.0, increment: 0.25, k: 100 };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_stagnation(&cfg, &p)).unwrap();
        let b = four.install(|| run_stagnation(&cfg, &p)).unwrap();
        assert_eq!(a, b);
    }
}
