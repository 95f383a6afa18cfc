//! Cumulative (expanding-window) cross-validation over calendar dates.
//!
//! A [`FoldPlan`] fixes a global date span and an ordered list of boundary
//! dates. Fold k trains on everything before boundary k and tests on the
//! interval up to the next boundary, so training ranges are nested and every
//! test range is later than all of its training data.

use chrono::{Duration, NaiveDate};

use crate::error::{Error, Result};

/// Half-open calendar interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        DateRange { start, end }
    }

    /// Number of days covered (0 when start >= end).
    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days().max(0)
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && date < self.end
    }

    /// Last day inside the range (inclusive), if non-empty.
    pub fn last_day(&self) -> Option<NaiveDate> {
        if self.is_empty() {
            None
        } else {
            Some(self.end - Duration::days(1))
        }
    }

    pub fn intersect(&self, other: &DateRange) -> DateRange {
        DateRange {
            start: self.start.max(other.start),
            end: self.end.min(other.end),
        }
    }
}

/// Global span plus boundary dates separating training from test intervals.
///
/// `global_end` is inclusive (the last day with data). Boundaries must be
/// strictly increasing and lie strictly inside the span; each boundary date
/// belongs to the test side of its fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub global_start: NaiveDate,
    pub global_end: NaiveDate,
    pub boundaries: Vec<NaiveDate>,
}

impl FoldPlan {
    pub fn new(
        global_start: NaiveDate,
        global_end: NaiveDate,
        boundaries: Vec<NaiveDate>,
    ) -> Result<Self> {
        if global_start >= global_end {
            return Err(Error::Config(format!(
                "global range [{global_start}, {global_end}] is empty"
            )));
        }
        if boundaries.is_empty() {
            return Err(Error::Config("fold plan needs at least one boundary".into()));
        }
        for pair in boundaries.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Config(format!(
                    "fold boundaries must be strictly increasing ({} >= {})",
                    pair[0], pair[1]
                )));
            }
        }
        let first = boundaries[0];
        let last = *boundaries.last().unwrap();
        if first <= global_start || last > global_end {
            return Err(Error::Config(format!(
                "fold boundaries [{first}, {last}] fall outside ({global_start}, {global_end}]"
            )));
        }
        Ok(FoldPlan {
            global_start,
            global_end,
            boundaries,
        })
    }

    pub fn n_folds(&self) -> usize {
        self.boundaries.len()
    }

    /// Cuts the span into one expanding-train fold per boundary.
    pub fn split_cumulative(&self) -> Vec<FoldSplit> {
        let end_exclusive = self.global_end + Duration::days(1);
        let mut folds = Vec::with_capacity(self.boundaries.len());
        for (k, &boundary) in self.boundaries.iter().enumerate() {
            let test_end = self
                .boundaries
                .get(k + 1)
                .copied()
                .unwrap_or(end_exclusive);
            folds.push(FoldSplit {
                fold: k + 1,
                train: DateRange::new(self.global_start, boundary),
                test: DateRange::new(boundary, test_end),
            });
        }
        folds
    }
}

/// The five boundary dates of the benchmark protocol over the
/// 2020-03-12 .. 2022-02-15 span.
impl Default for FoldPlan {
    fn default() -> Self {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
        FoldPlan::new(
            d(2020, 3, 12),
            d(2022, 2, 15),
            vec![
                d(2020, 7, 22),
                d(2020, 12, 2),
                d(2021, 4, 14),
                d(2021, 8, 25),
                d(2022, 1, 5),
            ],
        )
        .unwrap()
    }
}

/// One fold: nested train range and the following test range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldSplit {
    /// 1-based fold number.
    pub fold: usize,
    pub train: DateRange,
    pub test: DateRange,
}

impl FoldSplit {
    /// Anchor dates whose `fh`-day target window stays inside the training
    /// range. This is what keeps test information out of training samples:
    /// the last usable anchor is `fh` days before the range end.
    pub fn train_anchor_range(&self, fh: usize) -> DateRange {
        DateRange::new(self.train.start, self.train.end - Duration::days(fh as i64))
    }

    /// Anchor dates scored in this fold: the target window must stay inside
    /// the test range, so the last `fh` days of the range are not anchors.
    pub fn test_anchor_range(&self, fh: usize) -> DateRange {
        DateRange::new(self.test.start, self.test.end - Duration::days(fh as i64))
    }
}

/// Splits a date range into a leading fit part and a trailing validation
/// part of `ceil(fraction * days)` days. Errors when the range is shorter
/// than 5 days.
pub fn validation_tail(range: DateRange, fraction: f64) -> Result<(DateRange, DateRange)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "validation fraction must be in (0, 1), got {fraction}"
        )));
    }
    let days = range.days();
    if days < 5 {
        return Err(Error::InsufficientHistory {
            needed: 5,
            got: days.max(0) as usize,
        });
    }
    let val_days = (fraction * days as f64).ceil() as i64;
    let cut = range.start + Duration::days(days - val_days);
    Ok((
        DateRange::new(range.start, cut),
        DateRange::new(cut, range.end),
    ))
}
