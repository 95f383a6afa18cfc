//! Damped-trend exponential smoothing (Holt-Winters without seasonality) on
//! Box-Cox transformed data.
//!
//! Recursion in transformed space, with smoothing weights `alpha`, `beta`
//! and damping `phi`:
//!
//! ```text
//! level_t = alpha * z_t + (1 - alpha) * (level_{t-1} + phi * trend_{t-1})
//! trend_t = beta * (level_t - level_{t-1}) + (1 - beta) * phi * trend_{t-1}
//! zhat_{t+h} = level_t + (phi + phi^2 + ... + phi^h) * trend_t
//! ```
//!
//! Fitting minimizes the one-step sum of squared errors in transformed space
//! with Nelder-Mead over logit-parametrized weights; lambda comes from the
//! Box-Cox profile likelihood. Forecasts are mapped back through the inverse
//! transform and clamped at zero.
//!
//! ES-daily fits the daily history and sums an `fh`-step forecast; ES-sum
//! fits the sequence of non-overlapping backward `fh`-day block totals and
//! forecasts one step.

use crate::error::{Error, Result};
use crate::models::boxcox::{fit_lambda, BoxCox};
use crate::models::optim::nelder_mead_min;

/// Additive shift applied before the Box-Cox transform so zero-case days
/// remain transformable.
pub const BOXCOX_SHIFT: f64 = 1.0;

/// Smallest admissible smoothing weight; also the value reported for a
/// degenerate (constant) series.
pub const MIN_WEIGHT: f64 = 1e-4;
const MAX_WEIGHT: f64 = 1.0 - 1e-4;

/// Optimizer start point: (alpha, beta, phi).
const FIT_START: (f64, f64, f64) = (0.5, 0.1, 0.98);
/// Default damping reported for degenerate fits.
const DEFAULT_PHI: f64 = 0.98;

/// Smoothing weights plus the transform and initial state they assume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoltWintersParams {
    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
    pub boxcox: BoxCox,
    /// State before the first observation, in transformed space.
    pub initial_level: f64,
    pub initial_trend: f64,
}

impl HoltWintersParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.alpha < 1.0
            && self.beta > 0.0
            && self.beta < 1.0
            && self.phi > 0.0
            && self.phi <= 1.0
            && self.initial_level.is_finite()
            && self.initial_trend.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("bad Holt-Winters parameters: {self:?}")))
        }
    }

    /// Runs the recursion over a transformed series, starting from the
    /// initial state. Returns the final (level, trend) and the one-step SSE
    /// accumulated from the second observation on.
    pub fn smooth(&self, z: &[f64]) -> (f64, f64, f64) {
        let mut level = self.initial_level;
        let mut trend = self.initial_trend;
        let mut sse = 0.0;
        for &obs in z.iter().skip(1) {
            let predicted = level + self.phi * trend;
            let err = obs - predicted;
            sse += err * err;
            let new_level = self.alpha * obs + (1.0 - self.alpha) * (level + self.phi * trend);
            trend = self.beta * (new_level - level) + (1.0 - self.beta) * self.phi * trend;
            level = new_level;
        }
        (level, trend, sse)
    }
}

/// A fitted model: parameters plus the smoothed state at the end of history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoltWintersModel {
    pub params: HoltWintersParams,
    pub level: f64,
    pub trend: f64,
}

impl HoltWintersModel {
    /// Builds a model directly from a known state (used by tests and by the
    /// forecast examples; normal use goes through [`fit_holt_winters`]).
    pub fn from_state(params: HoltWintersParams, level: f64, trend: f64) -> Result<Self> {
        params.validate()?;
        Ok(HoltWintersModel { params, level, trend })
    }
}

/// Damped h-step forecasts in original units, clamped at zero.
pub fn hw_forecast(model: &HoltWintersModel, steps: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps);
    let mut damp = 1.0;
    let mut damp_sum = 0.0;
    for _ in 0..steps {
        damp *= model.params.phi;
        damp_sum += damp;
        let z = model.level + damp_sum * model.trend;
        out.push(model.params.boxcox.inverse(z).max(0.0));
    }
    out
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn to_weight(u: f64) -> f64 {
    MIN_WEIGHT + (MAX_WEIGHT - MIN_WEIGHT) * sigmoid(u)
}

fn to_logit(w: f64) -> f64 {
    let t = ((w - MIN_WEIGHT) / (MAX_WEIGHT - MIN_WEIGHT)).clamp(1e-12, 1.0 - 1e-12);
    (t / (1.0 - t)).ln()
}

/// Initial trend: mean of the first up-to-10 transformed first differences.
fn initial_trend(z: &[f64]) -> f64 {
    let k = (z.len() - 1).min(10);
    (0..k).map(|i| z[i + 1] - z[i]).sum::<f64>() / k as f64
}

fn fit_with_min_len(history: &[f64], min_len: usize) -> Result<HoltWintersModel> {
    if history.len() < min_len {
        return Err(Error::InsufficientHistory {
            needed: min_len,
            got: history.len(),
        });
    }
    let lambda = fit_lambda(history, BOXCOX_SHIFT)?;
    let boxcox = BoxCox::new(lambda, BOXCOX_SHIFT)?;
    let z = boxcox.transform_series(history)?;

    let first = z[0];
    if z.iter().all(|&v| v == first) {
        // Degenerate series: weights at the lower bound, flat forecast.
        let params = HoltWintersParams {
            alpha: MIN_WEIGHT,
            beta: MIN_WEIGHT,
            phi: DEFAULT_PHI,
            boxcox,
            initial_level: first,
            initial_trend: 0.0,
        };
        return Ok(HoltWintersModel { params, level: first, trend: 0.0 });
    }

    let initial_level = z[0];
    let initial_trend = initial_trend(&z);
    let objective = |u: &[f64]| -> f64 {
        let params = HoltWintersParams {
            alpha: to_weight(u[0]),
            beta: to_weight(u[1]),
            phi: to_weight(u[2]),
            boxcox,
            initial_level,
            initial_trend,
        };
        params.smooth(&z).2
    };
    let start = [
        to_logit(FIT_START.0),
        to_logit(FIT_START.1),
        to_logit(FIT_START.2),
    ];
    let best = nelder_mead_min(objective, &start, 1.0, 400, 1e-12);
    let params = HoltWintersParams {
        alpha: to_weight(best[0]),
        beta: to_weight(best[1]),
        phi: to_weight(best[2]),
        boxcox,
        initial_level,
        initial_trend,
    };
    let (level, trend, _) = params.smooth(&z);
    Ok(HoltWintersModel { params, level, trend })
}

/// Fits transform, initial state and smoothing weights on a history of at
/// least 10 points.
pub fn fit_holt_winters(history: &[f64]) -> Result<HoltWintersModel> {
    fit_with_min_len(history, 10)
}

/// ES-daily: fit on the daily history up to the anchor, forecast `fh` daily
/// values and return their total (already non-negative).
pub fn es_daily_predict(history: &[f64], fh: usize) -> Result<f64> {
    if fh == 0 {
        return Err(Error::Config("forecast horizon must be >= 1".into()));
    }
    let model = fit_holt_winters(history)?;
    Ok(hw_forecast(&model, fh).iter().sum())
}

/// Non-overlapping backward `fh`-day block totals, oldest first. The last
/// block ends at the last history day; a leading partial block is dropped,
/// so the result has `floor(n / fh)` entries.
pub fn backward_block_sums(history: &[f64], fh: usize) -> Vec<f64> {
    let n = history.len();
    let k = n / fh;
    let mut blocks = Vec::with_capacity(k);
    for j in 0..k {
        let start = n - (k - j) * fh;
        let mut total = 0.0;
        for &v in &history[start..start + fh] {
            total += v;
        }
        blocks.push(total);
    }
    blocks
}

/// ES-sum: fit on the backward block totals and forecast the next block.
/// Needs at least 3 full blocks of history.
pub fn es_sum_predict(history: &[f64], fh: usize) -> Result<f64> {
    if fh == 0 {
        return Err(Error::Config("forecast horizon must be >= 1".into()));
    }
    let blocks = backward_block_sums(history, fh);
    if blocks.len() < 3 {
        return Err(Error::InsufficientHistory {
            needed: 3 * fh,
            got: history.len(),
        });
    }
    // Block series are short at large horizons (3 blocks on the earliest
    // folds), so the fit relaxes the public 10-point minimum.
    let model = fit_with_min_len(&blocks, 3)?;
    Ok(hw_forecast(&model, 1)[0])
}
