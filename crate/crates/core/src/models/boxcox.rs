//! Box-Cox variance-stabilizing transform with a fixed additive shift.
//!
//! ```text
//! z = ((y + shift)^lambda - 1) / lambda     (lambda != 0)
//! z = ln(y + shift)                         (lambda == 0)
//! ```
//!
//! The smoothing models transform with shift 1.0 so zero-case days stay
//! representable, and pick lambda by maximizing the profile log-likelihood.

use crate::error::{Error, Result};
use crate::models::optim::golden_section_max;

/// Search interval for the lambda MLE.
pub const LAMBDA_MIN: f64 = -1.0;
pub const LAMBDA_MAX: f64 = 2.0;

/// A fixed Box-Cox transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxCox {
    pub lambda: f64,
    pub shift: f64,
}

impl BoxCox {
    pub fn new(lambda: f64, shift: f64) -> Result<Self> {
        if !lambda.is_finite() || !shift.is_finite() || shift < 0.0 {
            return Err(Error::Config(format!(
                "bad Box-Cox parameters lambda={lambda} shift={shift}"
            )));
        }
        Ok(BoxCox { lambda, shift })
    }

    /// Identity-like transform (lambda 1, shift 0): z = y - 1.
    pub fn identity() -> Self {
        BoxCox { lambda: 1.0, shift: 0.0 }
    }

    pub fn transform(&self, y: f64) -> Result<f64> {
        let x = y + self.shift;
        if x <= 0.0 {
            return Err(Error::Transform(format!(
                "Box-Cox needs y + shift > 0, got {x}"
            )));
        }
        if self.lambda == 0.0 {
            Ok(x.ln())
        } else {
            // expm1(lambda * ln x) / lambda is stable for small lambda
            Ok(f64::exp_m1(self.lambda * x.ln()) / self.lambda)
        }
    }

    /// Inverse transform. Values below the transform's range (possible when
    /// extrapolating a negative trend) are mapped to the lower boundary
    /// `-shift` instead of NaN; forecasts are clamped at zero downstream.
    pub fn inverse(&self, z: f64) -> f64 {
        if self.lambda == 0.0 {
            return z.exp() - self.shift;
        }
        let base = self.lambda * z + 1.0;
        if base <= 0.0 {
            return -self.shift;
        }
        f64::exp(f64::ln(base) / self.lambda) - self.shift
    }

    pub fn transform_series(&self, values: &[f64]) -> Result<Vec<f64>> {
        values.iter().map(|&y| self.transform(y)).collect()
    }
}

/// Profile log-likelihood of lambda for the shifted data (up to constants):
/// `-n/2 * ln(sigma^2(z)) + (lambda - 1) * sum(ln(y + shift))`.
fn profile_loglik(lambda: f64, values: &[f64], shift: f64, log_sum: f64) -> f64 {
    let bc = BoxCox { lambda, shift };
    let n = values.len() as f64;
    let mut mean = 0.0;
    let mut transformed = Vec::with_capacity(values.len());
    for &y in values {
        // callers guarantee y + shift > 0
        let z = bc.transform(y).unwrap();
        mean += z;
        transformed.push(z);
    }
    mean /= n;
    let var = transformed.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -0.5 * n * var.ln() + (lambda - 1.0) * log_sum
}

/// Maximum-likelihood lambda over [`LAMBDA_MIN`, `LAMBDA_MAX`] for the given
/// shift. Degenerate (constant) series get lambda 1.
pub fn fit_lambda(values: &[f64], shift: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientHistory { needed: 1, got: 0 });
    }
    let mut log_sum = 0.0;
    for &y in values {
        let x = y + shift;
        if !(x > 0.0) {
            return Err(Error::Transform(format!(
                "Box-Cox needs y + shift > 0, got {x}"
            )));
        }
        log_sum += x.ln();
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Ok(1.0);
    }
    Ok(golden_section_max(
        |lambda| profile_loglik(lambda, values, shift, log_sum),
        LAMBDA_MIN,
        LAMBDA_MAX,
        80,
    ))
}
