//! CSV ingestion: the canonical long format and a wide cumulative importer.
//!
//! Canonical format (one row per region-day):
//! `region_id,country,population,date,confirmed_daily`
//!
//! Wide cumulative format (JHU-style): one row per state/province with a
//! region-name column, optional country and population columns, and one
//! column per date holding *cumulative* confirmed counts. Rows sharing a
//! region key (e.g. county rows) are summed. Dailies are recovered by first
//! differencing and clamped at zero.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;

use crate::data::{data_window_end, data_window_start, Country, RegionSeries};
use crate::error::{Error, Result};

/// Counters reported by ingestion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestStats {
    pub regions: usize,
    pub rows: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub clamped_negatives: usize,
    pub filled_gaps: usize,
    pub dropped_out_of_window: usize,
}

impl fmt::Display for IngestStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "regions: {}", self.regions)?;
        match (self.first_date, self.last_date) {
            (Some(a), Some(b)) => writeln!(f, "date span: {a} .. {b}")?,
            _ => writeln!(f, "date span: (empty)")?,
        }
        writeln!(f, "rows ingested: {}", self.rows)?;
        writeln!(f, "negative dailies clamped: {}", self.clamped_negatives)?;
        writeln!(f, "gap days filled with 0: {}", self.filled_gaps)?;
        write!(f, "rows outside date window: {}", self.dropped_out_of_window)
    }
}

struct RegionAccum {
    country: Country,
    population: u64,
    days: BTreeMap<NaiveDate, f64>,
}

/// Restricts to the benchmark date window, fills interior gaps with zeros and
/// builds the validated series. Returns None when nothing falls in-window.
fn finalize_region(
    region_id: &str,
    accum: RegionAccum,
    stats: &mut IngestStats,
) -> Result<Option<RegionSeries>> {
    let lo = data_window_start();
    let hi = data_window_end();
    let mut kept: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for (date, value) in accum.days {
        if date < lo || date > hi {
            stats.dropped_out_of_window += 1;
        } else {
            kept.insert(date, value);
        }
    }
    let Some((&first, _)) = kept.first_key_value() else {
        return Ok(None);
    };
    let (&last, _) = kept.last_key_value().unwrap();
    let n = (last - first).num_days() as usize + 1;
    let mut values = vec![0.0; n];
    let mut present = vec![false; n];
    for (date, value) in &kept {
        let i = (*date - first).num_days() as usize;
        values[i] = *value;
        present[i] = true;
    }
    stats.filled_gaps += present.iter().filter(|p| !**p).count();
    stats.first_date = Some(stats.first_date.map_or(first, |d| d.min(first)));
    stats.last_date = Some(stats.last_date.map_or(last, |d| d.max(last)));
    let series = RegionSeries::new(region_id, accum.country, accum.population, first, values)?;
    Ok(Some(series))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn bad_line(record: &csv::StringRecord, msg: impl Into<String>) -> Error {
    Error::Ingest {
        line: line_of(record),
        msg: msg.into(),
    }
}

/// Reads the canonical long CSV. Negative dailies are clamped to zero,
/// interior date gaps are zero-filled and everything outside the benchmark
/// window is dropped; all three are counted in the returned stats.
pub fn read_canonical_csv(path: impl AsRef<Path>) -> Result<(Vec<RegionSeries>, IngestStats)> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let expected = ["region_id", "country", "population", "date", "confirmed_daily"];
    let header_fields: Vec<&str> = headers.iter().collect();
    if header_fields != expected {
        return Err(Error::Ingest {
            line: 1,
            msg: format!("expected header {expected:?}, got {header_fields:?}"),
        });
    }

    let mut stats = IngestStats::default();
    let mut accums: BTreeMap<String, RegionAccum> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 5 {
            return Err(bad_line(&record, format!("expected 5 fields, got {}", record.len())));
        }
        let region_id = record[0].trim().to_string();
        if region_id.is_empty() {
            return Err(bad_line(&record, "empty region_id"));
        }
        let country = Country::parse(&record[1])
            .map_err(|e| bad_line(&record, e.to_string()))?;
        let population: u64 = record[2]
            .trim()
            .parse()
            .map_err(|_| bad_line(&record, format!("bad population {:?}", &record[2])))?;
        let date = NaiveDate::parse_from_str(record[3].trim(), "%Y-%m-%d")
            .map_err(|_| bad_line(&record, format!("bad date {:?}", &record[3])))?;
        let mut value: f64 = record[4]
            .trim()
            .parse()
            .map_err(|_| bad_line(&record, format!("bad confirmed_daily {:?}", &record[4])))?;
        if !value.is_finite() {
            return Err(bad_line(&record, "non-finite confirmed_daily"));
        }
        if value < 0.0 {
            value = 0.0;
            stats.clamped_negatives += 1;
        }
        stats.rows += 1;

        let accum = accums.entry(region_id.clone()).or_insert_with(|| RegionAccum {
            country,
            population,
            days: BTreeMap::new(),
        });
        if accum.country != country {
            return Err(bad_line(&record, format!("region {region_id}: conflicting country")));
        }
        if accum.population != population {
            return Err(bad_line(
                &record,
                format!("region {region_id}: conflicting population"),
            ));
        }
        if accum.days.insert(date, value).is_some() {
            return Err(bad_line(&record, format!("region {region_id}: duplicate date {date}")));
        }
    }

    let mut regions = Vec::new();
    for (id, accum) in accums {
        if let Some(series) = finalize_region(&id, accum, &mut stats)? {
            regions.push(series);
        }
    }
    stats.regions = regions.len();
    Ok((regions, stats))
}

/// Writes regions in the canonical long format, sorted by (region_id, date)
/// so identical inputs always produce identical bytes.
pub fn write_canonical_csv(regions: &[RegionSeries], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut sorted: Vec<&RegionSeries> = regions.iter().collect();
    sorted.sort_by(|a, b| a.region_id.cmp(&b.region_id));
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["region_id", "country", "population", "date", "confirmed_daily"])?;
    for region in sorted {
        for (i, value) in region.daily_confirmed.iter().enumerate() {
            writer.write_record([
                region.region_id.as_str(),
                region.country.code(),
                &region.population.to_string(),
                &region.date_at(i).format("%Y-%m-%d").to_string(),
                &format!("{value}"),
            ])?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn parse_wide_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%m/%d/%y"))
        .or_else(|_| NaiveDate::parse_from_str(s, "%m/%d/%Y"))
        .ok()
}

const REGION_HEADERS: [&str; 4] = ["region_id", "Province_State", "Province/State", "region"];
const COUNTRY_HEADERS: [&str; 3] = ["country", "Country_Region", "Country/Region"];
const POPULATION_HEADERS: [&str; 2] = ["population", "Population"];

/// Imports a wide cumulative CSV (JHU-style). `default_country` is used when
/// the file has no country column.
pub fn import_wide_cumulative(
    path: impl AsRef<Path>,
    default_country: Option<Country>,
) -> Result<(Vec<RegionSeries>, IngestStats)> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();

    let mut region_col = None;
    let mut country_col = None;
    let mut population_col = None;
    let mut date_cols: Vec<(usize, NaiveDate)> = Vec::new();
    for (i, name) in headers.iter().enumerate() {
        if REGION_HEADERS.contains(&name) {
            region_col = Some(i);
        } else if COUNTRY_HEADERS.contains(&name) {
            country_col = Some(i);
        } else if POPULATION_HEADERS.contains(&name) {
            population_col = Some(i);
        } else if let Some(date) = parse_wide_date(name) {
            date_cols.push((i, date));
        }
        // anything else (UID, iso codes, lat/long, ...) is ignored
    }
    let Some(region_col) = region_col else {
        return Err(Error::Ingest {
            line: 1,
            msg: format!("no region column found (looked for {REGION_HEADERS:?})"),
        });
    };
    let Some(population_col) = population_col else {
        return Err(Error::Ingest {
            line: 1,
            msg: format!("no population column found (looked for {POPULATION_HEADERS:?})"),
        });
    };
    if date_cols.is_empty() {
        return Err(Error::Ingest {
            line: 1,
            msg: "no date columns found".into(),
        });
    }

    struct WideAccum {
        country: Country,
        population: u64,
        cumulative: BTreeMap<NaiveDate, f64>,
    }

    let mut stats = IngestStats::default();
    let mut accums: BTreeMap<String, WideAccum> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let region_id = record
            .get(region_col)
            .map(str::trim)
            .unwrap_or_default()
            .to_string();
        if region_id.is_empty() {
            return Err(bad_line(&record, "empty region key"));
        }
        let country = match country_col.and_then(|c| record.get(c)) {
            Some(s) if !s.trim().is_empty() => {
                Country::parse(s).map_err(|e| bad_line(&record, e.to_string()))?
            }
            _ => default_country.ok_or_else(|| {
                bad_line(&record, "no country column and no default country given")
            })?,
        };
        let population: u64 = record
            .get(population_col)
            .map(str::trim)
            .unwrap_or_default()
            .parse()
            .map_err(|_| bad_line(&record, "bad population"))?;

        let accum = accums.entry(region_id.clone()).or_insert_with(|| WideAccum {
            country,
            population: 0,
            cumulative: BTreeMap::new(),
        });
        if accum.country != country {
            return Err(bad_line(&record, format!("region {region_id}: conflicting country")));
        }
        accum.population += population;
        for &(col, date) in &date_cols {
            let raw = record.get(col).map(str::trim).unwrap_or_default();
            let value: f64 = if raw.is_empty() {
                0.0
            } else {
                raw.parse()
                    .map_err(|_| bad_line(&record, format!("bad count {raw:?} for {date}")))?
            };
            stats.rows += 1;
            *accum.cumulative.entry(date).or_insert(0.0) += value;
        }
    }

    let mut regions = Vec::new();
    for (id, accum) in accums {
        // first-difference the cumulative series before windowing
        let mut days = BTreeMap::new();
        let mut previous = 0.0;
        for (date, cum) in accum.cumulative {
            let mut daily = cum - previous;
            if daily < 0.0 {
                daily = 0.0;
                stats.clamped_negatives += 1;
            }
            days.insert(date, daily);
            previous = cum;
        }
        let accum = RegionAccum {
            country: accum.country,
            population: accum.population,
            days,
        };
        if let Some(series) = finalize_region(&id, accum, &mut stats)? {
            regions.push(series);
        }
    }
    stats.regions = regions.len();
    Ok((regions, stats))
}
