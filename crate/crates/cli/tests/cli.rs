//! End-to-end checks of the command-line pipeline: ingest, run, report,
//! both through the library entry points and the compiled binary.
//!
//! All fixtures are synthetic and placed inside the benchmark's date
//! window so the ingestion clamp keeps every row.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use epibench::data::ingest::{read_canonical_csv, write_canonical_csv};
use epibench::data::{Country, RegionSeries};
use epibench::eval::{read_forecasts_csv, read_results_csv, Averaging};
use epibench_cli::config::RunConfig;
use epibench_cli::report::report;
use epibench_cli::runner::run;
use tempfile::TempDir;

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Two positive wavy series, 230 days from 2020-04-01 (ends 2020-11-16).
fn synthetic_regions() -> Vec<RegionSeries> {
    let start = date(2020, 4, 1);
    let alpha = (0..230)
        .map(|i| 40.0 + 20.0 * (i as f64 / 10.0).sin() + (i % 7) as f64)
        .collect();
    let beta = (0..230)
        .map(|i| 60.0 + 25.0 * (i as f64 / 8.0).cos() + (i % 5) as f64)
        .collect();
    vec![
        RegionSeries::new("alpha", Country::Ru, 100_000, start, alpha).unwrap(),
        RegionSeries::new("beta", Country::Us, 50_000, start, beta).unwrap(),
    ]
}

fn write_dataset(dir: &Path) -> PathBuf {
    let path = dir.join("cases.csv");
    write_canonical_csv(&synthetic_regions(), &path).unwrap();
    path
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

/// d-daily and es-daily over two folds; four regions once country totals
/// are added. 2 models x 2 folds x 4 regions = 16 cells.
const BASE_CONFIG: &str = r#"
[data]
canonical = "cases.csv"

[run]
out_dir = "out"
horizons = [14]
seeds = [7]
workers = 2
models = ["d-daily", "es-daily"]

[folds]
start = "2020-04-01"
end = "2020-11-16"
boundaries = ["2020-08-01", "2020-09-15"]
"#;

fn epibench(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epibench"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout_of(output: &Output) -> String {
    assert!(
        output.status.success(),
        "command failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout.clone()).unwrap()
}

#[test]
fn ingest_canonical_roundtrip_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path());
    let output = epibench(
        &["ingest", "cases.csv", "--format", "canonical-long", "--out", "copy.csv"],
        dir.path(),
    );
    let stdout = stdout_of(&output);
    assert!(stdout.contains("regions: 2"), "{stdout}");
    assert!(stdout.contains("date span: 2020-04-01 .. 2020-11-16"), "{stdout}");
    assert_eq!(
        std::fs::read(dir.path().join("cases.csv")).unwrap(),
        std::fs::read(dir.path().join("copy.csv")).unwrap(),
        "canonical read/write should preserve the file byte for byte"
    );
}

#[test]
fn ingest_wide_cumulative_differences_and_sums_counties() {
    let dir = TempDir::new().unwrap();
    // Four records for three regions: s2 is split across two county rows
    // whose counts and populations must be summed, and s3 contains one
    // cumulative correction (a drop) that must clamp to a zero daily.
    let mut wide = String::from("UID,Province_State,Country_Region,Population");
    for day in 1..=10 {
        wide.push_str(&format!(",4/{day}/20"));
    }
    wide.push('\n');
    wide.push_str("1,s1,US,1000,1,2,4,7,11,16,22,29,37,46\n");
    wide.push_str("2,s2,US,300,5,5,6,6,8,8,9,9,11,11\n");
    wide.push_str("3,s2,US,200,5,5,4,6,4,7,6,6,9,15\n");
    wide.push_str("4,s3,US,800,5,8,7,9,9,10,12,12,13,20\n");
    std::fs::write(dir.path().join("wide.csv"), wide).unwrap();

    let output = epibench(
        &["ingest", "wide.csv", "--format", "jhu-wide", "--out", "canonical.csv"],
        dir.path(),
    );
    let stdout = stdout_of(&output);
    assert!(stdout.contains("regions: 3"), "{stdout}");
    assert!(stdout.contains("rows ingested: 40"), "{stdout}");
    assert!(stdout.contains("negative dailies clamped: 1"), "{stdout}");

    let (regions, _) = read_canonical_csv(dir.path().join("canonical.csv")).unwrap();
    let ids: Vec<&str> = regions.iter().map(|r| r.region_id.as_str()).collect();
    assert_eq!(ids, ["s1", "s2", "s3"]);
    for region in &regions {
        assert_eq!(region.start_date, date(2020, 4, 1));
    }
    // First daily equals the first cumulative count (differenced from zero).
    assert_eq!(regions[0].daily_confirmed, vec![1.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
    assert_eq!(regions[1].population, 500, "county populations should sum");
    assert_eq!(regions[1].daily_confirmed, vec![10.0, 0.0, 0.0, 2.0, 0.0, 3.0, 0.0, 0.0, 5.0, 6.0]);
    assert_eq!(regions[2].daily_confirmed, vec![5.0, 3.0, 0.0, 2.0, 0.0, 1.0, 2.0, 0.0, 1.0, 7.0]);
}

#[test]
fn ingest_rejects_malformed_rows_with_line_numbers() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("bad.csv"),
        "region_id,country,population,date,confirmed_daily\n\
         a,RU,1000,2020-04-01,5\n\
         a,RU,1000,2020-13-40,6\n",
    )
    .unwrap();
    let output = epibench(
        &["ingest", "bad.csv", "--format", "canonical-long", "--out", "out.csv"],
        dir.path(),
    );
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 3"), "stderr should name the bad line: {stderr}");
    assert!(!dir.path().join("out.csv").exists(), "no output on failure");
}

#[test]
fn run_scores_every_cell_of_the_grid() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path());
    let config = RunConfig::load(&write_config(dir.path(), BASE_CONFIG)).unwrap();
    let summary = run(&config).unwrap();
    assert_eq!(summary.seeds_run, 1);
    assert_eq!(summary.cells_scored, 16);
    assert_eq!(summary.cells_skipped, 0);
    assert_eq!(summary.networks_trained, 0);

    let rows = read_results_csv(config.out_dir.join("seed-7/results.csv")).unwrap();
    assert_eq!(rows.len(), 16);
    let regions: BTreeSet<&str> = rows.iter().map(|r| r.region_id.as_str()).collect();
    assert_eq!(regions, BTreeSet::from(["RU", "US", "alpha", "beta"]));
    for row in &rows {
        assert!(row.mape.is_finite() && row.mape >= 0.0, "{row:?}");
        assert_eq!(row.horizon, 14);
        // Fold 1 tests Aug 1..Sep 15 (31 scoreable anchors), fold 2 tests
        // Sep 15..Nov 17 (49 anchors before the horizon runs out of data).
        let expected_days = if row.fold == 1 { 31 } else { 49 };
        assert_eq!(row.n_days, expected_days, "{row:?}");
    }

    // The country totals duplicate the single member region's series, so
    // their scores must match exactly.
    for fold in [1, 2] {
        for model in ["d-daily", "es-daily"] {
            let find = |id: &str| {
                rows.iter()
                    .find(|r| r.region_id == id && r.fold == fold && r.model == model)
                    .unwrap()
                    .mape
            };
            assert_eq!(find("alpha"), find("RU"));
            assert_eq!(find("beta"), find("US"));
        }
    }

    // The per-seed directory keeps a resolved copy of the configuration.
    let copy = RunConfig::load(&config.out_dir.join("seed-7/config.toml")).unwrap();
    assert_eq!(copy.models, config.models);
    assert_eq!(copy.horizons, config.horizons);
    assert_eq!(copy.plan, config.plan);
}

#[test]
fn reruns_produce_byte_identical_outputs() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path());
    let path = write_config(dir.path(), BASE_CONFIG);

    let mut first = RunConfig::load(&path).unwrap();
    first.apply_overrides(None, None, Some(dir.path().join("out-a"))).unwrap();
    run(&first).unwrap();

    let mut second = RunConfig::load(&path).unwrap();
    // A different worker count must not change what gets written.
    second.apply_overrides(None, Some(5), Some(dir.path().join("out-b"))).unwrap();
    run(&second).unwrap();

    // Rerunning into the same directory overwrites in place.
    run(&first).unwrap();

    for file in ["results.csv", "forecasts.csv"] {
        let a = std::fs::read(dir.path().join("out-a/seed-7").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("out-b/seed-7").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn report_writes_summary_and_regenerable_plots() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path());
    let config = RunConfig::load(&write_config(dir.path(), BASE_CONFIG)).unwrap();
    run(&config).unwrap();

    let seed_dir = config.out_dir.join("seed-7");
    let reports = report(&seed_dir, Averaging::FoldThenRegion).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].summary_path, seed_dir.join("summary.csv"));
    assert_eq!(reports[0].plot_files, 16, "one plot file per scored cell");

    let summary_bytes = std::fs::read(&reports[0].summary_path).unwrap();
    let plots_dir = seed_dir.join("plots");
    let mut plot_files: Vec<PathBuf> = std::fs::read_dir(&plots_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    plot_files.sort();
    assert_eq!(plot_files.len(), 16);

    let expected: BTreeSet<String> = ["d-daily", "es-daily"]
        .iter()
        .flat_map(|m| {
            ["alpha", "beta", "ru", "us"].iter().flat_map(move |r| {
                [1, 2].iter().map(move |f| format!("{m}-{r}-fh14-fold{f}.dat"))
            })
        })
        .collect();
    let actual: BTreeSet<String> = plot_files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(actual, expected);

    let mut snapshots = Vec::new();
    for path in &plot_files {
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# date actual predicted"));
        let mut dates = Vec::new();
        for line in lines {
            let mut fields = line.split_whitespace();
            let day: NaiveDate = fields.next().unwrap().parse().unwrap();
            let actual: f64 = fields.next().unwrap().parse().unwrap();
            let predicted: f64 = fields.next().unwrap().parse().unwrap();
            assert_eq!(fields.next(), None);
            assert!(actual.is_finite() && predicted.is_finite());
            dates.push(day);
        }
        assert!(dates.windows(2).all(|w| w[0] < w[1]), "plot dates must ascend");
        snapshots.push(text);
    }

    // Reporting again reproduces the same bytes everywhere.
    report(&seed_dir, Averaging::FoldThenRegion).unwrap();
    assert_eq!(std::fs::read(&reports[0].summary_path).unwrap(), summary_bytes);
    for (path, before) in plot_files.iter().zip(&snapshots) {
        assert_eq!(&std::fs::read_to_string(path).unwrap(), before);
    }

    // The parent directory (one seed child) reports the same summary.
    let from_parent = report(&config.out_dir, Averaging::FoldThenRegion).unwrap();
    assert_eq!(from_parent.len(), 1);
    assert_eq!(from_parent[0].summary_path, reports[0].summary_path);
}

#[test]
fn binary_runs_and_reports_end_to_end() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path());
    write_config(dir.path(), BASE_CONFIG);

    let output = epibench(&["run", "--config", "run.toml"], dir.path());
    let stdout = stdout_of(&output);
    assert!(stdout.contains("1 seed(s): 16 cells scored, 0 skipped"), "{stdout}");
    assert!(stdout.contains("outputs under"), "{stdout}");

    let output = epibench(&["report", "out"], dir.path());
    let stdout = stdout_of(&output);
    assert!(stdout.contains("summary.csv (16 plot files)"), "{stdout}");
    assert!(dir.path().join("out/seed-7/summary.csv").exists());
}

#[test]
fn binary_rejects_invalid_config_before_writing_anything() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path());
    write_config(
        dir.path(),
        r#"
[data]
canonical = "cases.csv"

[run]
out_dir = "bad-out"
horizons = [14]
seeds = [7]
models = [{ name = "nn1", set = 1 }]
"#,
    );
    let output = epibench(&["run", "--config", "run.toml"], dir.path());
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("set 2 or 3"), "{stderr}");
    assert!(!dir.path().join("bad-out").exists(), "rejected run must not create outputs");
}

#[test]
fn ml_models_skip_folds_with_scarce_training_data() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path());
    // The first fold's 45 training days yield fewer regression windows
    // than a fit needs, so both regions skip it; the second fold scores.
    let config = RunConfig::load(&write_config(
        dir.path(),
        r#"
[data]
canonical = "cases.csv"
add_country_totals = false

[run]
out_dir = "out"
horizons = [14]
seeds = [7]
models = ["ml-lr"]

[folds]
start = "2020-04-01"
end = "2020-11-16"
boundaries = ["2020-05-16", "2020-09-15"]
"#,
    ))
    .unwrap();
    let summary = run(&config).unwrap();
    assert_eq!(summary.cells_scored, 2);
    assert_eq!(summary.cells_skipped, 2);
    let rows = read_results_csv(config.out_dir.join("seed-7/results.csv")).unwrap();
    assert!(rows.iter().all(|r| r.fold == 2), "only the long fold is scoreable");
}

#[test]
fn nn_run_checkpoints_and_resumes_without_retraining() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path());
    let config = RunConfig::load(&write_config(
        dir.path(),
        r#"
[data]
canonical = "cases.csv"
add_country_totals = false

[run]
out_dir = "out"
horizons = [14]
seeds = [3]
workers = 2
models = ["nn2"]

[folds]
start = "2020-04-01"
end = "2020-11-16"
boundaries = ["2020-08-01"]

[nn]
max_epochs = 3
batch_size = 32
patience = 2
"#,
    ))
    .unwrap();

    let summary = run(&config).unwrap();
    assert_eq!(summary.networks_trained, 1);
    assert_eq!(summary.networks_resumed, 0);
    assert_eq!(summary.cells_scored, 2, "one nn2-set3 cell per region");

    let seed_dir = config.out_dir.join("seed-3");
    let checkpoint = seed_dir.join("checkpoints/nn2-set3-fh14-fold1-all.json");
    let loss = seed_dir.join("loss/nn2-set3-fh14-fold1-all.csv");
    assert!(checkpoint.exists());
    assert!(loss.exists());
    let results_before = std::fs::read(seed_dir.join("results.csv")).unwrap();

    // A rerun with the checkpoint in place must load it instead of
    // training: deleting the loss history proves nothing is retrained,
    // because only training writes that file.
    std::fs::remove_file(&loss).unwrap();
    let summary = run(&config).unwrap();
    assert_eq!(summary.networks_trained, 0);
    assert_eq!(summary.networks_resumed, 1);
    assert!(!loss.exists(), "resumed run must not retrain");
    assert_eq!(
        std::fs::read(seed_dir.join("results.csv")).unwrap(),
        results_before,
        "scores from a resumed network must match the original run"
    );
}

#[test]
fn multi_seed_runs_report_per_seed_summaries() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path());
    let config = RunConfig::load(&write_config(
        dir.path(),
        r#"
[data]
canonical = "cases.csv"

[run]
out_dir = "out"
horizons = [14]
seeds = [1, 2]
models = ["d-daily"]

[folds]
start = "2020-04-01"
end = "2020-11-16"
boundaries = ["2020-08-01"]
"#,
    ))
    .unwrap();
    let summary = run(&config).unwrap();
    assert_eq!(summary.seeds_run, 2);
    assert_eq!(summary.cells_scored, 8, "4 regions x 1 fold x 2 seeds");

    // Baseline models ignore the seed, so the per-seed results agree.
    assert_eq!(
        std::fs::read(config.out_dir.join("seed-1/results.csv")).unwrap(),
        std::fs::read(config.out_dir.join("seed-2/results.csv")).unwrap()
    );

    let reports = report(&config.out_dir, Averaging::FoldThenRegion).unwrap();
    let paths: Vec<&Path> = reports.iter().map(|r| r.summary_path.as_path()).collect();
    assert_eq!(
        paths,
        [
            config.out_dir.join("seed-1/summary.csv"),
            config.out_dir.join("seed-2/summary.csv")
        ]
        .iter()
        .map(PathBuf::as_path)
        .collect::<Vec<_>>()
    );
}

#[test]
fn forecasts_csv_matches_results_rows() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path());
    let config = RunConfig::load(&write_config(dir.path(), BASE_CONFIG)).unwrap();
    run(&config).unwrap();

    let seed_dir = config.out_dir.join("seed-7");
    let rows = read_results_csv(seed_dir.join("results.csv")).unwrap();
    let runs = read_forecasts_csv(seed_dir.join("forecasts.csv")).unwrap();
    assert_eq!(runs.len(), rows.len());
    for (row, fetched) in rows.iter().zip(&runs) {
        assert_eq!(fetched.model, row.model);
        assert_eq!(fetched.region_id, row.region_id);
        assert_eq!(fetched.fold, row.fold);
        assert_eq!(fetched.horizon, row.horizon);
        assert_eq!(fetched.points.len(), row.n_days + row.n_excluded);
        let scored = fetched.score().unwrap();
        assert!(
            (scored.mape - row.mape).abs() < 1e-9,
            "rescoring stored forecasts must reproduce the stored MAPE"
        );
    }
}
