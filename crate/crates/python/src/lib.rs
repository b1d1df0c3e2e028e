//! Python bindings: `import sr_arith`.

use pyo3::exceptions::{PyOverflowError, PyRuntimeError, PyValueError, PyZeroDivisionError};
use pyo3::prelude::*;

use sr_core::experiments::{self, ExperimentConfig};
use sr_core::{linalg, Label, Matrix, OverflowPolicy, RoundingMode};

fn to_py(e: sr_core::Error) -> PyErr {
    use sr_core::Error as E;
    match e {
        E::OutOfRange { .. } => PyOverflowError::new_err(e.to_string()),
        E::DivisionByZero => PyZeroDivisionError::new_err(e.to_string()),
        E::NonConvergence { .. } | E::Io { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = sr_core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py)
}

fn labels(items: &[Bound<'_, PyAny>]) -> PyResult<Vec<Label>> {
    items
        .iter()
        .map(|item| {
            if let Ok(s) = item.extract::<String>() {
                Ok(Label::Str(s))
            } else if let Ok(v) = item.extract::<u64>() {
                Ok(Label::Int(v))
            } else {
                Err(PyValueError::new_err("stream labels must be str or non-negative int"))
            }
        })
        .collect()
}

/// A finite number format such as `Format("f5e10m")` or `Format("q4.8")`.
#[pyclass(name = "Format", frozen)]
struct Format(sr_core::FormatSpec);

#[pymethods]
impl Format {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        parse(spec).map(Format)
    }

    #[getter]
    fn total_bits(&self) -> u32 {
        self.0.total_bits()
    }

    #[getter]
    fn max_finite(&self) -> f64 {
        self.0.max_finite()
    }

    #[getter]
    fn min_value(&self) -> f64 {
        self.0.min_value()
    }

    #[getter]
    fn min_positive(&self) -> f64 {
        self.0.min_positive()
    }

    /// `(value, kind)` where kind is "relative" or "absolute".
    #[getter]
    fn unit_roundoff(&self) -> (f64, String) {
        let r = self.0.unit_roundoff();
        (r.value, format!("{:?}", r.kind).to_lowercase())
    }

    /// Neighbouring members `(lo, hi)` around `x`; equal when `x` is a member.
    fn bracket(&self, x: f64) -> PyResult<(f64, f64)> {
        let b = self.0.bracket(x).map_err(to_py)?;
        Ok((b.lo, b.hi))
    }

    fn is_representable(&self, x: f64) -> bool {
        self.0.is_representable(x)
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Format('{}')", self.0)
    }
}

/// Counter-based random stream identity.
#[pyclass(name = "RngKey", frozen)]
struct RngKey(sr_core::RngKey);

#[pymethods]
impl RngKey {
    #[new]
    fn new(seed: u64, stream: u64) -> Self {
        RngKey(sr_core::RngKey::new(seed, stream))
    }

    #[staticmethod]
    fn derive(seed: u64, path: Vec<Bound<'_, PyAny>>) -> PyResult<Self> {
        Ok(RngKey(sr_core::RngKey::derive(seed, labels(&path)?)))
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn stream(&self) -> u64 {
        self.0.stream
    }

    fn uniform_u64(&self, counter: u64) -> u64 {
        self.0.uniform_u64(counter)
    }

    fn uniform_unit(&self, counter: u64) -> f64 {
        self.0.uniform_unit(counter)
    }

    fn __repr__(&self) -> String {
        format!("RngKey(seed={}, stream={})", self.0.seed, self.0.stream)
    }
}

/// Arithmetic in a format, rounding every result with one mode.
#[pyclass(name = "ArithEnv")]
struct ArithEnv(sr_core::ArithEnv);

#[pymethods]
impl ArithEnv {
    #[new]
    #[pyo3(signature = (format, mode, key, policy = "strict"))]
    fn new(format: PyRef<'_, Format>, mode: &str, key: PyRef<'_, RngKey>, policy: &str) -> PyResult<Self> {
        let mode: RoundingMode = parse(mode)?;
        let policy: OverflowPolicy = parse(policy)?;
        Ok(ArithEnv(sr_core::ArithEnv::new(format.0, mode, policy, key.0)))
    }

    /// Number of random draws consumed so far.
    #[getter]
    fn counter(&self) -> u64 {
        self.0.counter()
    }

    fn round(&mut self, x: f64) -> PyResult<f64> {
        self.0.round(x).map_err(to_py)
    }

    fn add(&mut self, a: f64, b: f64) -> PyResult<f64> {
        self.0.add(a, b).map_err(to_py)
    }

    fn sub(&mut self, a: f64, b: f64) -> PyResult<f64> {
        self.0.sub(a, b).map_err(to_py)
    }

    fn mul(&mut self, a: f64, b: f64) -> PyResult<f64> {
        self.0.mul(a, b).map_err(to_py)
    }

    fn div(&mut self, a: f64, b: f64) -> PyResult<f64> {
        self.0.div(a, b).map_err(to_py)
    }

    fn sqrt(&mut self, a: f64) -> PyResult<f64> {
        self.0.sqrt(a).map_err(to_py)
    }

    fn fma(&mut self, a: f64, b: f64, c: f64) -> PyResult<f64> {
        self.0.fma(a, b, c).map_err(to_py)
    }

    fn sum_sequential(&mut self, xs: Vec<f64>) -> PyResult<f64> {
        self.0.sum_sequential(&xs).map_err(to_py)
    }

    #[pyo3(signature = (xs, ys, fused = false))]
    fn dot(&mut self, xs: Vec<f64>, ys: Vec<f64>, fused: bool) -> PyResult<f64> {
        let strategy = if fused {
            sr_core::DotStrategy::Fused
        } else {
            sr_core::DotStrategy::MulThenAdd
        };
        self.0.dot(&xs, &ys, strategy).map_err(to_py)
    }

    fn quantize(&mut self, xs: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.quantize_vector(&xs).map_err(to_py)
    }
}

/// Round `x` once using draw `counter` of stream `key`.
#[pyfunction]
#[pyo3(signature = (format, mode, x, key, counter = 0, policy = "strict"))]
fn round(
    format: PyRef<'_, Format>,
    mode: &str,
    x: f64,
    key: PyRef<'_, RngKey>,
    counter: u64,
    policy: &str,
) -> PyResult<f64> {
    let mode: RoundingMode = parse(mode)?;
    let policy: OverflowPolicy = parse(policy)?;
    sr_core::rounding::round(&format.0, mode, policy, x, key.0, counter).map_err(to_py)
}

/// Probability that proportional SR returns the upper neighbour of `x`.
#[pyfunction]
fn round_prob_up(format: PyRef<'_, Format>, x: f64) -> PyResult<f64> {
    sr_core::rounding::round_prob_up(&format.0, x).map_err(to_py)
}

/// Correctly rounded double-precision sum.
#[pyfunction]
fn sum_exact(xs: Vec<f64>) -> PyResult<f64> {
    sr_core::sum_exact(&xs).map_err(to_py)
}

#[pyfunction]
fn singular_values(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    linalg::singular_values(&matrix(rows)?).map_err(to_py)
}

#[pyfunction]
fn sigma_min(rows: Vec<Vec<f64>>) -> PyResult<f64> {
    linalg::sigma_min(&matrix(rows)?).map_err(to_py)
}

#[pyfunction]
fn lls_solve(rows: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<Vec<f64>> {
    linalg::lls_solve(&matrix(rows)?, &b).map_err(to_py)
}

/// `(slope, stderr)` of log y against log n.
#[pyfunction]
fn fit_loglog_slope(points: Vec<(f64, f64)>) -> PyResult<(f64, f64)> {
    let fit = experiments::fit_loglog_slope(&points).map_err(to_py)?;
    Ok((fit.slope, fit.stderr))
}

/// Per-mode `(mode, mean_err, std_err, up_frequency)` for rounding `x` many times.
#[pyfunction]
#[pyo3(signature = (format, x, modes, seed, trials = 10_000))]
fn run_unbiasedness(
    py: Python<'_>,
    format: PyRef<'_, Format>,
    x: f64,
    modes: Vec<String>,
    seed: u64,
    trials: usize,
) -> PyResult<Vec<(String, f64, f64, f64)>> {
    let modes = modes.iter().map(|m| parse(m)).collect::<PyResult<Vec<RoundingMode>>>()?;
    let cfg = ExperimentConfig::new(format.0, modes, seed, trials);
    let report = py
        .detach(|| experiments::run_unbiasedness(&cfg, x))
        .map_err(to_py)?;
    Ok(report
        .rows
        .iter()
        .map(|r| (r.mode.to_string(), r.error.mean, r.error.std, r.up_frequency))
        .collect())
}

#[pymodule]
pub fn sr_arith(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Format>()?;
    m.add_class::<RngKey>()?;
    m.add_class::<ArithEnv>()?;
    m.add_function(wrap_pyfunction!(round, m)?)?;
    m.add_function(wrap_pyfunction!(round_prob_up, m)?)?;
    m.add_function(wrap_pyfunction!(sum_exact, m)?)?;
    m.add_function(wrap_pyfunction!(singular_values, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_min, m)?)?;
    m.add_function(wrap_pyfunction!(lls_solve, m)?)?;
    m.add_function(wrap_pyfunction!(fit_loglog_slope, m)?)?;
    m.add_function(wrap_pyfunction!(run_unbiasedness, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
