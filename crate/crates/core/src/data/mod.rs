//! Canonical data model: regional daily case series, per-100k normalization,
//! horizon-sum target series and lag-window samples.
//!
//! Day indexing convention used throughout: index `t` of a region's series
//! corresponds to calendar date `start_date + t`. A forecast "anchored" at
//! day `t` predicts the total of days `t+1 ..= t+fh`.

use chrono::{Duration, NaiveDate};

use crate::error::{Error, Result};

pub mod ingest;

/// First calendar day kept at ingestion.
pub fn data_window_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 12).unwrap()
}

/// Last calendar day kept at ingestion (inclusive).
pub fn data_window_end() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 2, 15).unwrap()
}

/// Countries covered by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Country {
    Us,
    Ru,
}

impl Country {
    /// Two-letter code used in CSV files and as the synthetic total-region id.
    pub fn code(self) -> &'static str {
        match self {
            Country::Us => "US",
            Country::Ru => "RU",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "US" | "USA" | "United States" => Ok(Country::Us),
            "RU" | "RUS" | "Russia" => Ok(Country::Ru),
            other => Err(Error::RejectedRecord(format!("unknown country {other:?}"))),
        }
    }

    pub fn all() -> [Country; 2] {
        [Country::Us, Country::Ru]
    }
}

impl std::fmt::Display for Country {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Contiguous daily series of new confirmed cases for one region.
///
/// Invariants (enforced by [`RegionSeries::new`]): population > 0, all values
/// finite and >= 0, one value per day starting at `start_date` with no gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSeries {
    pub region_id: String,
    pub country: Country,
    pub population: u64,
    pub start_date: NaiveDate,
    pub daily_confirmed: Vec<f64>,
}

impl RegionSeries {
    pub fn new(
        region_id: impl Into<String>,
        country: Country,
        population: u64,
        start_date: NaiveDate,
        daily_confirmed: Vec<f64>,
    ) -> Result<Self> {
        let region_id = region_id.into();
        if population == 0 {
            return Err(Error::RejectedRecord(format!(
                "region {region_id}: population must be positive"
            )));
        }
        if daily_confirmed.is_empty() {
            return Err(Error::RejectedRecord(format!(
                "region {region_id}: empty series"
            )));
        }
        for (i, &v) in daily_confirmed.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::RejectedRecord(format!(
                    "region {region_id}: bad daily count {v} at day {i}"
                )));
            }
        }
        Ok(RegionSeries {
            region_id,
            country,
            population,
            start_date,
            daily_confirmed,
        })
    }

    pub fn len(&self) -> usize {
        self.daily_confirmed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.daily_confirmed.is_empty()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start_date + Duration::days(index as i64)
    }

    /// Last date with data (inclusive).
    pub fn end_date(&self) -> NaiveDate {
        self.date_at(self.len() - 1)
    }

    /// Index of `date` within the series, if covered.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let off = (date - self.start_date).num_days();
        if off >= 0 && (off as usize) < self.len() {
            Some(off as usize)
        } else {
            None
        }
    }
}

/// Daily new cases per 100 000 inhabitants, aligned with the source region.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSeries {
    pub start_date: NaiveDate,
    pub values: Vec<f64>,
}

impl NormalizedSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start_date + Duration::days(index as i64)
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let off = (date - self.start_date).num_days();
        if off >= 0 && (off as usize) < self.len() {
            Some(off as usize)
        } else {
            None
        }
    }
}

/// Rescales a region's daily counts to cases per 100 000 inhabitants.
pub fn normalize_per_100k(region: &RegionSeries) -> Result<NormalizedSeries> {
    if region.population == 0 {
        return Err(Error::RejectedRecord(format!(
            "region {}: population must be positive",
            region.region_id
        )));
    }
    let scale = 100_000.0 / region.population as f64;
    Ok(NormalizedSeries {
        start_date: region.start_date,
        values: region.daily_confirmed.iter().map(|v| v * scale).collect(),
    })
}

/// Forward horizon sums: `values[t] = sum of normalized days t+1 ..= t+fh`.
///
/// Defined for anchors `t in 0 .. n - fh`, so the series is `fh` days shorter
/// than its source.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSeries {
    pub horizon: usize,
    pub start_date: NaiveDate,
    pub values: Vec<f64>,
}

impl TargetSeries {
    /// Target total anchored at day index `t` of the source series.
    pub fn at_day(&self, t: usize) -> Option<f64> {
        self.values.get(t).copied()
    }
}

/// Builds the forward `fh`-day target sums of a normalized series.
///
/// Sums run in ascending day order so results are bit-for-bit reproducible
/// against a plain loop over the defining formula.
pub fn build_target_series(norm: &NormalizedSeries, fh: usize) -> Result<TargetSeries> {
    if fh == 0 {
        return Err(Error::Config("forecast horizon must be >= 1".into()));
    }
    let n = norm.len();
    if n < fh + 1 {
        return Err(Error::InsufficientHistory {
            needed: fh + 1,
            got: n,
        });
    }
    let mut values = Vec::with_capacity(n - fh);
    for t in 0..n - fh {
        let mut total = 0.0;
        for i in 1..=fh {
            total += norm.values[t + i];
        }
        values.push(total);
    }
    Ok(TargetSeries {
        horizon: fh,
        start_date: norm.start_date,
        values,
    })
}

/// Backward horizon sums: the value at day `t` is the total of the `fh` days
/// ending at `t` (days `t-fh+1 ..= t`). Defined for `t >= fh - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SumSeries {
    pub horizon: usize,
    /// Date of day index 0 of the *source* series (the sum series itself
    /// starts `fh - 1` days later).
    pub start_date: NaiveDate,
    pub values: Vec<f64>,
}

impl SumSeries {
    /// First source-series day index with a defined sum.
    pub fn first_day(&self) -> usize {
        self.horizon - 1
    }

    /// Backward sum ending at source day index `t`.
    pub fn at_day(&self, t: usize) -> Option<f64> {
        if t < self.first_day() {
            return None;
        }
        self.values.get(t - self.first_day()).copied()
    }
}

/// Builds the backward `fh`-day sums of a normalized series
/// (length `n - fh + 1`).
pub fn build_sum_series(norm: &NormalizedSeries, fh: usize) -> Result<SumSeries> {
    if fh == 0 {
        return Err(Error::Config("forecast horizon must be >= 1".into()));
    }
    let n = norm.len();
    if n < fh {
        return Err(Error::InsufficientHistory { needed: fh, got: n });
    }
    let mut values = Vec::with_capacity(n - fh + 1);
    for t in fh - 1..n {
        let mut total = 0.0;
        for d in t + 1 - fh..=t {
            total += norm.values[d];
        }
        values.push(total);
    }
    Ok(SumSeries {
        horizon: fh,
        start_date: norm.start_date,
        values,
    })
}

/// One supervised sample: `lag` consecutive input values ending at the anchor
/// day, plus the value(s) the models must predict for the following `fh` days.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub region_id: String,
    pub anchor_date: NaiveDate,
    pub inputs: Vec<f64>,
    /// Length 1 (horizon total) or `fh` (per-day values), depending on the
    /// target kind the window was built with.
    pub target: Vec<f64>,
}

/// Which series the input windows are read from.
#[derive(Debug, Clone, Copy)]
pub enum WindowSource<'a> {
    /// Daily normalized values; valid from day 0.
    Daily(&'a NormalizedSeries),
    /// Backward horizon sums; valid from day `fh - 1`.
    Sums(&'a SumSeries),
}

impl<'a> WindowSource<'a> {
    fn first_day(&self) -> usize {
        match self {
            WindowSource::Daily(_) => 0,
            WindowSource::Sums(s) => s.first_day(),
        }
    }

    fn last_day(&self) -> usize {
        match self {
            WindowSource::Daily(n) => n.len() - 1,
            WindowSource::Sums(s) => s.first_day() + s.values.len() - 1,
        }
    }

    fn value_at(&self, t: usize) -> f64 {
        match self {
            WindowSource::Daily(n) => n.values[t],
            WindowSource::Sums(s) => s.at_day(t).unwrap(),
        }
    }

    fn start_date(&self) -> NaiveDate {
        match self {
            WindowSource::Daily(n) => n.start_date,
            WindowSource::Sums(s) => s.start_date,
        }
    }
}

/// What each window predicts.
#[derive(Debug, Clone, Copy)]
pub enum WindowTarget<'a> {
    /// The `fh`-day total (target vector of length 1).
    Total(&'a TargetSeries),
    /// The `fh` individual daily values following the anchor.
    Daily { norm: &'a NormalizedSeries, fh: usize },
}

impl<'a> WindowTarget<'a> {
    /// Last anchor day with a fully observed target.
    fn last_anchor(&self) -> Option<usize> {
        match self {
            WindowTarget::Total(t) => t.values.len().checked_sub(1),
            WindowTarget::Daily { norm, fh } => norm.len().checked_sub(fh + 1),
        }
    }

    fn values_at(&self, t: usize, scale: f64) -> Vec<f64> {
        match self {
            WindowTarget::Total(ts) => vec![ts.values[t] * scale],
            WindowTarget::Daily { norm, fh } => {
                (t + 1..=t + fh).map(|d| norm.values[d] * scale).collect()
            }
        }
    }
}

/// Options for [`make_lag_windows`].
#[derive(Debug, Clone)]
pub struct WindowSpec {
    pub lag: usize,
    pub stride: usize,
    /// Multiplier applied to every input value (e.g. 1e-3 for the NNs).
    pub input_scale: f64,
    /// Multiplier applied to every target value.
    pub target_scale: f64,
    /// Optional inclusive anchor-date window; anchors outside it are skipped.
    pub anchor_window: Option<(NaiveDate, NaiveDate)>,
}

impl WindowSpec {
    pub fn new(lag: usize) -> Self {
        WindowSpec {
            lag,
            stride: 1,
            input_scale: 1.0,
            target_scale: 1.0,
            anchor_window: None,
        }
    }

    pub fn scaled(lag: usize, scale: f64) -> Self {
        WindowSpec {
            input_scale: scale,
            target_scale: scale,
            ..WindowSpec::new(lag)
        }
    }

    pub fn with_anchor_window(mut self, from: NaiveDate, to: NaiveDate) -> Self {
        self.anchor_window = Some((from, to));
        self
    }
}

/// Slides a `lag`-wide window over `source` and pairs each window with the
/// target value(s) anchored at the window's last day.
///
/// Anchors advance by `spec.stride` from the earliest valid day. With stride
/// 1, a daily source and a total target, the number of samples is
/// `max(0, n - lag - fh + 1)` for a source of length `n`.
pub fn make_lag_windows(
    region_id: &str,
    source: WindowSource<'_>,
    target: WindowTarget<'_>,
    spec: &WindowSpec,
) -> Result<Vec<WindowSample>> {
    if spec.lag == 0 {
        return Err(Error::Config("window lag must be >= 1".into()));
    }
    if spec.stride == 0 {
        return Err(Error::Config("window stride must be >= 1".into()));
    }
    let first = source.first_day() + spec.lag - 1;
    let Some(target_last) = target.last_anchor() else {
        return Ok(Vec::new());
    };
    let last = target_last.min(source.last_day());
    let mut samples = Vec::new();
    let mut t = first;
    while t <= last {
        let date = source.start_date() + Duration::days(t as i64);
        let in_window = spec
            .anchor_window
            .map_or(true, |(from, to)| date >= from && date <= to);
        if in_window {
            let inputs = (t + 1 - spec.lag..=t)
                .map(|d| source.value_at(d) * spec.input_scale)
                .collect();
            samples.push(WindowSample {
                region_id: region_id.to_string(),
                anchor_date: date,
                inputs,
                target: target.values_at(t, spec.target_scale),
            });
        }
        t += spec.stride;
    }
    Ok(samples)
}

/// A loaded collection of region series, keyed by region id.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub regions: Vec<RegionSeries>,
}

impl Dataset {
    /// Builds a dataset, rejecting duplicate region ids and sorting regions
    /// by id for deterministic iteration order.
    pub fn from_regions(mut regions: Vec<RegionSeries>) -> Result<Self> {
        regions.sort_by(|a, b| a.region_id.cmp(&b.region_id));
        for pair in regions.windows(2) {
            if pair[0].region_id == pair[1].region_id {
                return Err(Error::RejectedRecord(format!(
                    "duplicate region id {:?}",
                    pair[0].region_id
                )));
            }
        }
        Ok(Dataset { regions })
    }

    pub fn get(&self, region_id: &str) -> Option<&RegionSeries> {
        self.regions.iter().find(|r| r.region_id == region_id)
    }

    pub fn by_country(&self, country: Country) -> impl Iterator<Item = &RegionSeries> {
        self.regions.iter().filter(move |r| r.country == country)
    }

    /// Adds one synthetic whole-country region per country (id = country
    /// code) by summing raw counts and populations of its regions. Skipped
    /// for countries that already have a region with that id. Regions are
    /// aligned on the union of their date spans; days a region does not
    /// cover contribute zero.
    pub fn with_country_totals(mut self) -> Result<Self> {
        for country in Country::all() {
            if self.get(country.code()).is_some() {
                continue;
            }
            let members: Vec<&RegionSeries> = self.by_country(country).collect();
            if members.is_empty() {
                continue;
            }
            let start = members.iter().map(|r| r.start_date).min().unwrap();
            let end = members.iter().map(|r| r.end_date()).max().unwrap();
            let n = (end - start).num_days() as usize + 1;
            let mut totals = vec![0.0; n];
            let mut population: u64 = 0;
            for r in &members {
                population += r.population;
                let off = (r.start_date - start).num_days() as usize;
                for (i, &v) in r.daily_confirmed.iter().enumerate() {
                    totals[off + i] += v;
                }
            }
            let total = RegionSeries::new(country.code(), country, population, start, totals)?;
            self.regions.push(total);
        }
        self.regions.sort_by(|a, b| a.region_id.cmp(&b.region_id));
        Ok(self)
    }
}
