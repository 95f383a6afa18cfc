//! Summary tables and plot-data files for a finished run.
//!
//! Reads `results.csv` and `forecasts.csv` from a run's output directory and
//! writes `summary.csv` (one MAPE table row per country and horizon, plus an
//! average row) and `plots/<model>-<region>-fh<h>-fold<f>.dat` — plain
//! whitespace-separated `date actual predicted` series that plotting tools
//! consume directly. Regeneration from the same inputs is byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use epibench::error::{Error, Result};
use epibench::eval::{aggregate, read_forecasts_csv, read_results_csv, write_summary_csv, Averaging};

/// What one directory's report produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportSummary {
    pub summary_path: PathBuf,
    pub plot_files: usize,
}

/// Reports `dir` itself when it holds a `results.csv`, otherwise every
/// `seed-*` child that does (the layout `run` produces for multi-seed
/// configs).
pub fn report(dir: &Path, averaging: Averaging) -> Result<Vec<ReportSummary>> {
    if dir.join("results.csv").exists() {
        return Ok(vec![report_one(dir, averaging)?]);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut seed_dirs: Vec<PathBuf> = entries
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("seed-"))
                && p.join("results.csv").exists()
        })
        .collect();
    if seed_dirs.is_empty() {
        return Err(Error::Config(format!(
            "{}: no results.csv here or in any seed-* subdirectory",
            dir.display()
        )));
    }
    seed_dirs.sort();
    seed_dirs
        .iter()
        .map(|d| report_one(d, averaging))
        .collect()
}

fn report_one(dir: &Path, averaging: Averaging) -> Result<ReportSummary> {
    let rows = read_results_csv(dir.join("results.csv"))?;
    let table = aggregate(&rows, averaging);
    let summary_path = dir.join("summary.csv");
    write_summary_csv(&table, &summary_path)?;

    let mut runs = read_forecasts_csv(dir.join("forecasts.csv"))?;
    runs.sort_by(|a, b| {
        (&a.model, a.country, &a.region_id, a.fold, a.horizon)
            .cmp(&(&b.model, b.country, &b.region_id, b.fold, b.horizon))
    });
    let plots_dir = dir.join("plots");
    std::fs::create_dir_all(&plots_dir).map_err(|e| Error::io(&plots_dir, e))?;
    let mut plot_files = 0;
    for run in &runs {
        let mut points = run.points.clone();
        points.sort_by_key(|p| p.anchor);
        let mut text = String::from("# date actual predicted\n");
        for point in &points {
            writeln!(text, "{} {} {}", point.anchor, point.actual, point.predicted)
                .expect("write to string");
        }
        let name = format!(
            "{}-{}-fh{}-fold{}.dat",
            sanitize(&run.model),
            sanitize(&run.region_id),
            run.horizon,
            run.fold
        );
        let path = plots_dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        plot_files += 1;
    }
    Ok(ReportSummary { summary_path, plot_files })
}

/// Lowercases and squeezes everything that is not a letter or digit to
/// single dashes, so region names ("New York", "Алтайский край") become safe
/// unique file stems.
fn sanitize(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut last_dash = true; // swallow leading separators
    for c in name.chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
            last_dash = false;
        } else if !last_dash {
            out.push('-');
            last_dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    if out.is_empty() {
        out.push('x');
    }
    out
}
