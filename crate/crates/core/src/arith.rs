//! Rounded arithmetic in a counter-managed environment.
//!
//! An [`ArithEnv`] bundles a format, a rounding mode, an overflow policy and a
//! random stream. Each operation computes its result in the `f64` carrier and
//! rounds it once into the format, advancing the draw counter by one for every
//! stochastic rounding event and by nothing otherwise.
//!
//! `add`, `sub` and `mul` carry the carrier's rounding error along as an exact
//! tail (`TwoSum` / `TwoProduct`), so the round-up probability is that of the
//! exact result. `div`, `sqrt` and `fma` recover the tail from an `f64`
//! residual, which is accurate to within one carrier rounding of the tail
//! itself. A product that underflows the `f64` normal range (only reachable
//! with 10- or 11-bit exponents) loses its tail.
//!
//! Kernels consume draws in evaluation order; matrices are visited row-major.

use crate::error::{Error, Result};
use crate::formats::FormatSpec;
use crate::linalg::Matrix;
use crate::rng::RngKey;
use crate::rounding::{round_parts, OverflowPolicy, RoundingMode};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// How [`ArithEnv::dot`] accumulates each term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DotStrategy {
    /// `acc = add(acc, mul(x, y))`: two roundings per term.
    #[default]
    MulThenAdd,
    /// `acc = fma(x, y, acc)`: one rounding per term.
    Fused,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArithEnv {
    pub fmt: FormatSpec,
    pub mode: RoundingMode,
    pub policy: OverflowPolicy,
    pub key: RngKey,
    counter: u64,
}

impl ArithEnv {
    pub fn new(fmt: FormatSpec, mode: RoundingMode, policy: OverflowPolicy, key: RngKey) -> Self {
        Self {
            fmt,
            mode,
            policy,
            key,
            counter: 0,
        }
    }

    /// Number of random draws consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    fn finish(&mut self, head: f64, tail: f64) -> Result<f64> {
        let (key, counter) = (self.key, self.counter);
        let r = round_parts(&self.fmt, self.mode, self.policy, head, tail, || {
            key.uniform_unit(counter)
        })?;
        if r.drew {
            self.counter += 1;
        }
        Ok(r.value)
    }

    fn operand(&self, v: f64, name: &str) -> Result<f64> {
        if self.fmt.is_representable(v) {
            Ok(v)
        } else {
            Err(Error::InvalidInput(format!(
                "operand {name} = {v} is not a member of {}",
                self.fmt
            )))
        }
    }

    /// Rounds an arbitrary carrier value into the format.
    pub fn round(&mut self, x: f64) -> Result<f64> {
        self.finish(x, 0.0)
    }

    pub fn add(&mut self, a: f64, b: f64) -> Result<f64> {
        let (a, b) = (self.operand(a, "a")?, self.operand(b, "b")?);
        let (s, e) = two_sum(a, b);
        self.finish(s, e)
    }

    pub fn sub(&mut self, a: f64, b: f64) -> Result<f64> {
        let (a, b) = (self.operand(a, "a")?, self.operand(b, "b")?);
        let (s, e) = two_sum(a, -b);
        self.finish(s, e)
    }

    pub fn mul(&mut self, a: f64, b: f64) -> Result<f64> {
        let (a, b) = (self.operand(a, "a")?, self.operand(b, "b")?);
        let (p, e) = two_prod(a, b);
        self.finish(p, e)
    }

    pub fn div(&mut self, a: f64, b: f64) -> Result<f64> {
        let (a, b) = (self.operand(a, "a")?, self.operand(b, "b")?);
        if b == 0.0 {
            return Err(Error::DivisionByZero);
        }
        let q = a / b;
        // a = q·b + r exactly, so a/b = q + r/b
        let r = (-q).mul_add(b, a);
        self.finish(q, r / b)
    }

    pub fn sqrt(&mut self, a: f64) -> Result<f64> {
        let a = self.operand(a, "a")?;
        if a < 0.0 {
            return Err(Error::InvalidInput(format!("square root of negative {a}")));
        }
        let s = a.sqrt();
        if s == 0.0 {
            return Ok(0.0);
        }
        let r = (-s).mul_add(s, a);
        self.finish(s, r / (2.0 * s))
    }

    /// `a·b + c` with a single rounding.
    pub fn fma(&mut self, a: f64, b: f64, c: f64) -> Result<f64> {
        let a = self.operand(a, "a")?;
        let b = self.operand(b, "b")?;
        let c = self.operand(c, "c")?;
        let (p, pe) = two_prod(a, b);
        let (s, se) = two_sum(p, c);
        let (head, tail) = two_sum(s, se + pe);
        self.finish(head, tail)
    }

    /// Left-to-right rounded sum `((x0 + x1) + x2) + ...`.
    pub fn sum_sequential(&mut self, xs: &[f64]) -> Result<f64> {
        let (&first, rest) = xs.split_first().ok_or(Error::EmptyInput)?;
        let mut acc = self.operand(first, "xs[0]")?;
        for &x in rest {
            acc = self.add(acc, x)?;
        }
        Ok(acc)
    }

    pub fn dot(&mut self, xs: &[f64], ys: &[f64], strategy: DotStrategy) -> Result<f64> {
        if xs.len() != ys.len() {
            return Err(Error::Shape(format!(
                "dot of vectors with lengths {} and {}",
                xs.len(),
                ys.len()
            )));
        }
        if xs.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut acc = self.mul(xs[0], ys[0])?;
        for (&x, &y) in xs.iter().zip(ys).skip(1) {
            acc = match strategy {
                DotStrategy::MulThenAdd => {
                    let p = self.mul(x, y)?;
                    self.add(acc, p)?
                }
                DotStrategy::Fused => self.fma(x, y, acc)?,
            };
        }
        Ok(acc)
    }

    /// Rounds each element independently, in index order.
    pub fn quantize_vector(&mut self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.round(x)).collect()
    }

    /// Rounds each entry independently, row-major.
    pub fn quantize_matrix(&mut self, a: &Matrix) -> Result<Matrix> {
        let data = self.quantize_vector(a.data())?;
        Matrix::from_row_major(a.rows(), a.cols(), data)
    }

    /// Least squares through the normal equations, every operation rounded.
    ///
    /// Forms `G = AᵀA` (upper triangle, mirrored) and `h = Aᵀb` with
    /// [`Self::dot`], then runs Gaussian elimination with partial pivoting
    /// and back substitution in the format. `a` and `b` must already be
    /// members of the format.
    pub fn solve_normal_equations(&mut self, a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
        let n = a.cols();
        if b.len() != a.rows() {
            return Err(Error::Shape(format!(
                "right-hand side has length {}, expected {}",
                b.len(),
                a.rows()
            )));
        }
        let columns: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
        let mut g = vec![vec![0.0; n]; n];
        let mut h = vec![0.0; n];
        for i in 0..n {
            for j in i..n {
                g[i][j] = self.dot(&columns[i], &columns[j], DotStrategy::MulThenAdd)?;
                g[j][i] = g[i][j];
            }
            h[i] = self.dot(&columns[i], b, DotStrategy::MulThenAdd)?;
        }
        for k in 0..n {
            let pivot = (k..n)
                .max_by(|&p, &q| g[p][k].abs().total_cmp(&g[q][k].abs()))
                .expect("non-empty range");
            if g[pivot][k] == 0.0 {
                return Err(Error::RankDeficient { column: k, pivot: 0.0 });
            }
            g.swap(k, pivot);
            h.swap(k, pivot);
            for i in k + 1..n {
                if g[i][k] == 0.0 {
                    continue;
                }
                let l = self.div(g[i][k], g[k][k])?;
                for j in k + 1..n {
                    let t = self.mul(l, g[k][j])?;
                    g[i][j] = self.sub(g[i][j], t)?;
                }
                let t = self.mul(l, h[k])?;
                h[i] = self.sub(h[i], t)?;
                g[i][k] = 0.0;
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let mut acc = h[k];
            for j in k + 1..n {
                let t = self.mul(g[k][j], x[j])?;
                acc = self.sub(acc, t)?;
            }
            x[k] = self.div(acc, g[k][k])?;
        }
        Ok(x)
    }
}

/// Correctly rounded sum of carrier values.
///
/// Keeps a list of non-overlapping partial sums (Shewchuk's algorithm) so the
/// running total is exact, then rounds it once to nearest-even.
pub fn sum_exact(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut partials: Vec<f64> = Vec::new();
    for &x in xs {
        if !x.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite summand {x}")));
        }
        let mut x = x;
        let mut kept = 0;
        for i in 0..partials.len() {
            let mut y = partials[i];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    // Add partials from the top down; stop once the sum no longer changes and
    // fix up a half-way case that the remaining partials break.
    let mut n = partials.len();
    let mut hi = partials[n - 1];
    let mut lo = 0.0;
    n -= 1;
    while n > 0 {
        let x = hi;
        let y = partials[n - 1];
        n -= 1;
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    if !hi.is_finite() {
        return Err(Error::InvalidInput("sum overflows the carrier".into()));
    }
    Ok(hi)
}
