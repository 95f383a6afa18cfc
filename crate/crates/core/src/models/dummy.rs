//! Persistence baselines.
//!
//! D-daily repeats the anchor day's value for every day of the horizon;
//! D-sum repeats the total of the last `fh` observed days.

use crate::data::NormalizedSeries;
use crate::error::{Error, Result};

/// D-daily: `fh` times the value observed on the anchor day.
pub fn d_daily_forecast(norm: &NormalizedSeries, anchor: usize, fh: usize) -> Result<f64> {
    if fh == 0 {
        return Err(Error::Config("forecast horizon must be >= 1".into()));
    }
    let Some(&last) = norm.values.get(anchor) else {
        return Err(Error::InsufficientHistory {
            needed: anchor + 1,
            got: norm.len(),
        });
    };
    Ok(last * fh as f64)
}

/// D-sum: the total of the `fh` days ending at the anchor (the backward
/// horizon sum at the anchor day), repeated as the next total.
pub fn d_sum_forecast(norm: &NormalizedSeries, anchor: usize, fh: usize) -> Result<f64> {
    if fh == 0 {
        return Err(Error::Config("forecast horizon must be >= 1".into()));
    }
    if anchor >= norm.len() {
        return Err(Error::InsufficientHistory {
            needed: anchor + 1,
            got: norm.len(),
        });
    }
    if anchor + 1 < fh {
        return Err(Error::InsufficientHistory {
            needed: fh,
            got: anchor + 1,
        });
    }
    let mut total = 0.0;
    for d in anchor + 1 - fh..=anchor {
        total += norm.values[d];
    }
    Ok(total)
}
