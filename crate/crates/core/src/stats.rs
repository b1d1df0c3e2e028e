use serde::Serialize;

use crate::arith::sum_exact;
use crate::error::{Error, Result};

/// Distribution summary of per-trial results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator; 0 for one sample).
    pub std: f64,
    pub median: f64,
    pub q05: f64,
    pub q95: f64,
    /// Normal-approximation 95% half-width of the mean, `1.96·std/√n`.
    pub ci95_halfwidth: f64,
    pub trials: usize,
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl SummaryStats {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = samples.len();
        let total = sum_exact(samples).unwrap_or_else(|_| samples.iter().sum());
        let mean = total / n as f64;
        let std = if n > 1 {
            (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        Ok(Self {
            mean,
            std,
            median: quantile_sorted(&sorted, 0.5),
            q05: quantile_sorted(&sorted, 0.05),
            q95: quantile_sorted(&sorted, 0.95),
            ci95_halfwidth: 1.96 * std / (n as f64).sqrt(),
            trials: n,
        })
    }

    /// `|mean - target| ≤ k·std/√n`.
    pub fn mean_within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std / (self.trials as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sample() {
        let s = SummaryStats::from_samples(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.median, 3.0);
        assert!((s.std - 2.5f64.sqrt()).abs() < 1e-15);
        assert!((s.q05 - 1.2).abs() < 1e-12);
        assert!((s.q95 - 4.8).abs() < 1e-12);
        assert!(s.q05 <= s.median && s.median <= s.q95);
        assert_eq!(s.trials, 5);
    }

    #[test]
    fn constant_sample_has_zero_spread() {
        let s = SummaryStats::from_samples(&[2048.0; 10]).unwrap();
        assert_eq!((s.std, s.ci95_halfwidth), (0.0, 0.0));
        assert!(s.mean_within(2048.0, 4.0));
        assert!(SummaryStats::from_samples(&[]).is_err());
    }
}
