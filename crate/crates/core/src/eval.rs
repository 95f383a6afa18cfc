//! Scoring: MAPE per (region, fold), aggregation into per-country tables,
//! and the results / per-day forecast CSV formats.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::data::Country;
use crate::error::{Error, Result};

/// One scored anchor day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastPoint {
    pub anchor: NaiveDate,
    pub actual: f64,
    pub predicted: f64,
}

/// All predictions one model made for one (region, fold, horizon) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRun {
    pub model: String,
    pub country: Country,
    pub region_id: String,
    pub fold: usize,
    pub horizon: usize,
    pub points: Vec<ForecastPoint>,
}

/// MAPE plus the day counts behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapeScore {
    pub mape: f64,
    /// Days that entered the mean.
    pub n_days: usize,
    /// Days excluded because the actual was exactly zero.
    pub n_excluded: usize,
}

/// Mean absolute percentage error, in percent. Days with a zero actual are
/// excluded from the mean; if every actual is zero the score is undefined.
pub fn mape(actuals: &[f64], forecasts: &[f64]) -> Result<f64> {
    Ok(mape_score(actuals, forecasts)?.mape)
}

/// Like [`mape`] but also reports how many days were kept/excluded.
pub fn mape_score(actuals: &[f64], forecasts: &[f64]) -> Result<MapeScore> {
    if actuals.len() != forecasts.len() {
        return Err(Error::Shape(format!(
            "mape: {} actuals vs {} forecasts",
            actuals.len(),
            forecasts.len()
        )));
    }
    if actuals.is_empty() {
        return Err(Error::UndefinedScore("mape of an empty series".into()));
    }
    let mut total = 0.0;
    let mut kept = 0usize;
    for (&a, &f) in actuals.iter().zip(forecasts) {
        if a == 0.0 {
            continue;
        }
        total += ((a - f) / a).abs();
        kept += 1;
    }
    if kept == 0 {
        return Err(Error::UndefinedScore(
            "mape undefined: every actual is zero".into(),
        ));
    }
    Ok(MapeScore {
        mape: 100.0 * total / kept as f64,
        n_days: kept,
        n_excluded: actuals.len() - kept,
    })
}

impl ForecastRun {
    pub fn score(&self) -> Result<MapeScore> {
        let actuals: Vec<f64> = self.points.iter().map(|p| p.actual).collect();
        let forecasts: Vec<f64> = self.points.iter().map(|p| p.predicted).collect();
        mape_score(&actuals, &forecasts)
    }
}

/// How per-(region, fold) scores are combined into a table cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    /// Mean over folds within each region, then mean over regions.
    FoldThenRegion,
    /// Plain mean over all (region, fold) scores. Kept as a sensitivity
    /// check; the benchmark tables use [`Averaging::FoldThenRegion`].
    Pooled,
}

/// One aggregated table cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreCell {
    pub mape: f64,
    pub n_regions: usize,
    /// (region, fold) combinations that were absent relative to the fold set
    /// seen for this (model, horizon, country) group.
    pub n_missing_cells: usize,
}

/// Per-country MAPE table: one row per horizon plus an `average` row, one
/// column per model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    pub models: Vec<String>,
    pub horizons: Vec<usize>,
    pub countries: Vec<Country>,
    pub cells: BTreeMap<(Country, usize, String), ScoreCell>,
    /// Mean over the horizons present for (country, model).
    pub averages: BTreeMap<(Country, String), f64>,
}

impl ScoreTable {
    pub fn cell(&self, country: Country, horizon: usize, model: &str) -> Option<&ScoreCell> {
        self.cells.get(&(country, horizon, model.to_string()))
    }

    pub fn average(&self, country: Country, model: &str) -> Option<f64> {
        self.averages.get(&(country, model.to_string())).copied()
    }
}

/// One row of the results CSV (a scored (model, region, fold, horizon) cell).
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub country: Country,
    pub region_id: String,
    pub fold: usize,
    pub horizon: usize,
    pub mape: f64,
    pub n_days: usize,
    pub n_excluded: usize,
}

/// Scores every run. Fails if any run has mismatched lengths or an all-zero
/// actual series (callers are expected to have dropped unscoreable cells).
pub fn score_runs(runs: &[ForecastRun]) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        let score = run.score()?;
        rows.push(ResultRow {
            model: run.model.clone(),
            country: run.country,
            region_id: run.region_id.clone(),
            fold: run.fold,
            horizon: run.horizon,
            mape: score.mape,
            n_days: score.n_days,
            n_excluded: score.n_excluded,
        });
    }
    Ok(rows)
}

/// Aggregates scored rows into per-country tables.
///
/// With [`Averaging::FoldThenRegion`] each region first gets the mean over
/// its folds, the cell is the mean over regions, and missing (region, fold)
/// combinations are counted against the fold set observed in the group.
pub fn aggregate(rows: &[ResultRow], mode: Averaging) -> ScoreTable {
    let mut table = ScoreTable::default();
    let mut groups: BTreeMap<(Country, usize, String), Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.country, row.horizon, row.model.clone()))
            .or_default()
            .push(row);
        if !table.models.contains(&row.model) {
            table.models.push(row.model.clone());
        }
        if !table.horizons.contains(&row.horizon) {
            table.horizons.push(row.horizon);
        }
        if !table.countries.contains(&row.country) {
            table.countries.push(row.country);
        }
    }
    table.models.sort();
    table.horizons.sort_unstable();
    table.countries.sort();

    for ((country, horizon, model), group) in groups {
        let folds_seen: BTreeSet<usize> = group.iter().map(|r| r.fold).collect();
        let mut by_region: BTreeMap<&str, Vec<&ResultRow>> = BTreeMap::new();
        for row in group {
            by_region.entry(row.region_id.as_str()).or_default().push(row);
        }
        let mut missing = 0usize;
        let mape = match mode {
            Averaging::FoldThenRegion => {
                let mut region_means = Vec::with_capacity(by_region.len());
                for rows in by_region.values() {
                    missing += folds_seen.len() - rows.len();
                    let mean = rows.iter().map(|r| r.mape).sum::<f64>() / rows.len() as f64;
                    region_means.push(mean);
                }
                region_means.iter().sum::<f64>() / region_means.len() as f64
            }
            Averaging::Pooled => {
                let all: Vec<f64> = by_region
                    .values()
                    .flat_map(|rows| rows.iter().map(|r| r.mape))
                    .collect();
                for rows in by_region.values() {
                    missing += folds_seen.len() - rows.len();
                }
                all.iter().sum::<f64>() / all.len() as f64
            }
        };
        table.cells.insert(
            (country, horizon, model),
            ScoreCell {
                mape,
                n_regions: by_region.len(),
                n_missing_cells: missing,
            },
        );
    }

    for country in table.countries.clone() {
        for model in table.models.clone() {
            let present: Vec<f64> = table
                .horizons
                .iter()
                .filter_map(|&h| table.cell(country, h, &model).map(|c| c.mape))
                .collect();
            if !present.is_empty() {
                let avg = present.iter().sum::<f64>() / present.len() as f64;
                table.averages.insert((country, model.clone()), avg);
            }
        }
    }
    table
}

const RESULTS_HEADER: &str = "model,country,region,fold,horizon,mape,n_days,n_excluded";

/// Writes scored rows sorted by (model, country, region, fold, horizon).
pub fn write_results_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.model, a.country, &a.region_id, a.fold, a.horizon).cmp(&(
            &b.model, b.country, &b.region_id, b.fold, b.horizon,
        ))
    });
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(RESULTS_HEADER.split(','))?;
    for row in sorted {
        writer.write_record([
            row.model.as_str(),
            row.country.code(),
            row.region_id.as_str(),
            &row.fold.to_string(),
            &row.horizon.to_string(),
            &format!("{}", row.mape),
            &row.n_days.to_string(),
            &row.n_excluded.to_string(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> {
            record.get(i).ok_or(Error::Ingest {
                line,
                msg: format!("missing field {i}"),
            })
        };
        let parse_err = |what: &str| Error::Ingest {
            line,
            msg: format!("bad {what}"),
        };
        rows.push(ResultRow {
            model: field(0)?.to_string(),
            country: Country::parse(field(1)?)?,
            region_id: field(2)?.to_string(),
            fold: field(3)?.parse().map_err(|_| parse_err("fold"))?,
            horizon: field(4)?.parse().map_err(|_| parse_err("horizon"))?,
            mape: field(5)?.parse().map_err(|_| parse_err("mape"))?,
            n_days: field(6)?.parse().map_err(|_| parse_err("n_days"))?,
            n_excluded: field(7)?.parse().map_err(|_| parse_err("n_excluded"))?,
        });
    }
    Ok(rows)
}

const FORECASTS_HEADER: &str = "model,country,region,fold,horizon,date,actual,predicted";

/// Writes every per-day prediction, sorted by run key and date. This is the
/// input for plot generation; results.csv only holds aggregates.
pub fn write_forecasts_csv(runs: &[ForecastRun], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut sorted: Vec<&ForecastRun> = runs.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.model, a.country, &a.region_id, a.fold, a.horizon).cmp(&(
            &b.model, b.country, &b.region_id, b.fold, b.horizon,
        ))
    });
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(FORECASTS_HEADER.split(','))?;
    for run in sorted {
        for point in &run.points {
            writer.write_record([
                run.model.as_str(),
                run.country.code(),
                run.region_id.as_str(),
                &run.fold.to_string(),
                &run.horizon.to_string(),
                &point.anchor.format("%Y-%m-%d").to_string(),
                &format!("{}", point.actual),
                &format!("{}", point.predicted),
            ])?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_forecasts_csv(path: impl AsRef<Path>) -> Result<Vec<ForecastRun>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let mut runs: Vec<ForecastRun> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |what: &str| Error::Ingest {
            line,
            msg: format!("bad {what}"),
        };
        let model = record.get(0).unwrap_or_default().to_string();
        let country = Country::parse(record.get(1).unwrap_or_default())?;
        let region_id = record.get(2).unwrap_or_default().to_string();
        let fold: usize = record
            .get(3)
            .unwrap_or_default()
            .parse()
            .map_err(|_| parse_err("fold"))?;
        let horizon: usize = record
            .get(4)
            .unwrap_or_default()
            .parse()
            .map_err(|_| parse_err("horizon"))?;
        let anchor = NaiveDate::parse_from_str(record.get(5).unwrap_or_default(), "%Y-%m-%d")
            .map_err(|_| parse_err("date"))?;
        let actual: f64 = record
            .get(6)
            .unwrap_or_default()
            .parse()
            .map_err(|_| parse_err("actual"))?;
        let predicted: f64 = record
            .get(7)
            .unwrap_or_default()
            .parse()
            .map_err(|_| parse_err("predicted"))?;
        let point = ForecastPoint {
            anchor,
            actual,
            predicted,
        };
        match runs.last_mut() {
            Some(run)
                if run.model == model
                    && run.region_id == region_id
                    && run.fold == fold
                    && run.horizon == horizon =>
            {
                run.points.push(point)
            }
            _ => runs.push(ForecastRun {
                model,
                country,
                region_id,
                fold,
                horizon,
                points: vec![point],
            }),
        }
    }
    Ok(runs)
}

/// Writes the per-country summary tables (one row per horizon plus an
/// `average` row, one column per model) produced by [`aggregate`].
pub fn write_summary_csv(table: &ScoreTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let emit = |out: &mut std::io::BufWriter<std::fs::File>, line: &str| {
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))
    };
    let mut header = String::from("country,horizon");
    for model in &table.models {
        header.push(',');
        header.push_str(model);
    }
    emit(&mut out, &header)?;
    for &country in &table.countries {
        for &horizon in &table.horizons {
            let mut line = format!("{},{}", country.code(), horizon);
            for model in &table.models {
                line.push(',');
                if let Some(cell) = table.cell(country, horizon, model) {
                    line.push_str(&format!("{:.1}", cell.mape));
                }
            }
            emit(&mut out, &line)?;
        }
        let mut line = format!("{},average", country.code());
        for model in &table.models {
            line.push(',');
            if let Some(avg) = table.average(country, model) {
                line.push_str(&format!("{avg:.1}"));
            }
        }
        emit(&mut out, &line)?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
