//! Software emulation of stochastic rounding (SR).
//!
//! The crate is organised bottom-up:
//!
//! - [`formats`]: finite number sets (float-style and fixed-point grids) and
//!   the bracket `lo ≤ x ≤ hi` of adjacent members around a real value.
//! - [`rng`]: a counter-based Philox generator keyed by `(seed, stream)` so
//!   every random draw is a pure function of its coordinates.
//! - [`rounding`]: round-to-nearest-even, proportional SR, SR-up-or-down and
//!   selective SR.
//! - [`arith`]: rounded elementary operations and kernels (summation, dot
//!   products, quantization) that keep an explicit draw counter.
//! - [`linalg`]: working-precision oracles (one-sided Jacobi SVD, Householder
//!   least squares) used to measure conditioning.
//! - [`experiments`]: reproducible Monte-Carlo drivers.
//! - [`io`]: CSV tables and matrix files.
//!
//! All real values travel in an `f64` carrier. Format members, bracket gaps
//! and the residual `x - lo` are exact in that carrier, so the probability of
//! rounding up is computed without extended precision.

pub mod arith;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod rounding;
pub mod stats;

pub use arith::{sum_exact, ArithEnv, DotStrategy};
pub use error::{Error, Result};
pub use formats::{Bracket, FormatSpec, Roundoff};
pub use linalg::Matrix;
pub use rng::{Label, RngKey};
pub use rounding::{OverflowPolicy, RoundingMode};
pub use stats::SummaryStats;
