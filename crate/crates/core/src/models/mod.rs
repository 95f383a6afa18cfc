//! Forecasting models operating on normalized per-100k series.
//!
//! All models predict the *total* of the `fh` days following an anchor day.
//! Persistence baselines and exponential smoothing consume the raw history
//! up to the anchor; the linear models consume 14-lag windows of the
//! backward horizon-sum series.

pub mod boxcox;
pub mod dummy;
pub mod holt_winters;
pub mod linear;
pub(crate) mod optim;

use chrono::NaiveDate;

/// A single horizon-total prediction, clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineForecast {
    pub anchor_date: NaiveDate,
    pub horizon: usize,
    pub predicted_total: f64,
}

impl BaselineForecast {
    pub fn new(anchor_date: NaiveDate, horizon: usize, predicted_total: f64) -> Self {
        BaselineForecast {
            anchor_date,
            horizon,
            predicted_total: predicted_total.max(0.0),
        }
    }
}
