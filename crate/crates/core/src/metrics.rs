//! Network-wide error metrics.
//!
//! The mean squared error of the node estimates against the true common error
//! splits exactly into the spread of the estimates around their mean and the
//! squared error of that mean:
//!
//! ```text
//! (1/N) sum ||x_i - c||^2 = (1/N) sum ||x_i - xbar||^2 + ||xbar - c||^2
//! ```

use crate::filter::CommonError;
use crate::{Error, Result, Vec2};

/// Relative tolerance for the decomposition identity.
pub const IDENTITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub t: usize,
    pub rmse: f64,
    pub variance: f64,
    pub mean_bias_sq: f64,
    pub per_node_error: Vec<f64>,
}

impl MetricsRecord {
    pub fn mse(&self) -> f64 {
        self.rmse * self.rmse
    }

    /// `rmse^2 == variance + mean_bias_sq` and every entry finite, non-negative.
    pub fn check_identity(&self) -> Result<()> {
        let all = [self.rmse, self.variance, self.mean_bias_sq]
            .into_iter()
            .chain(self.per_node_error.iter().copied());
        for v in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "record t={} has invalid entry {v}",
                    self.t
                )));
            }
        }
        let lhs = self.mse();
        let rhs = self.variance + self.mean_bias_sq;
        if (lhs - rhs).abs() > IDENTITY_TOL * lhs.max(rhs).max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidInput(format!(
                "record t={}: rmse^2 {lhs} != variance + bias^2 {rhs}",
                self.t
            )));
        }
        Ok(())
    }
}

pub fn decompose_error(t: usize, estimates: &[CommonError], truth: CommonError) -> Result<MetricsRecord> {
    if estimates.is_empty() {
        return Err(Error::InvalidInput("no estimates to score".into()));
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().fold(Vec2::zeros(), |acc, e| acc + e.offset) / n;
    let variance = estimates
        .iter()
        .map(|e| (e.offset - mean).norm_squared())
        .sum::<f64>()
        / n;
    let mean_bias_sq = (mean - truth.offset).norm_squared();
    Ok(MetricsRecord {
        t,
        rmse: (variance + mean_bias_sq).sqrt(),
        variance,
        mean_bias_sq,
        per_node_error: estimates
            .iter()
            .map(|e| (e.offset - truth.offset).norm())
            .collect(),
    })
}

/// Mean RMSE over the last half of a run.
pub fn steady_state_rmse(records: &[MetricsRecord]) -> f64 {
    steady_state(records, |r| r.rmse)
}

/// Mean variance over the last half of a run.
pub fn steady_state_variance(records: &[MetricsRecord]) -> f64 {
    steady_state(records, |r| r.variance)
}

fn steady_state(records: &[MetricsRecord], f: impl Fn(&MetricsRecord) -> f64) -> f64 {
    if records.is_empty() {
        return f64::NAN;
    }
    let tail = &records[records.len() / 2..];
    tail.iter().map(f).sum::<f64>() / tail.len() as f64
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}
