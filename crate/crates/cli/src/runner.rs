//! Grid execution.
//!
//! A run expands its configuration into independent tasks, executes them
//! over a fixed-size worker pool, and writes one output directory per seed
//! (`results.csv`, `forecasts.csv`, a copy of the resolved config, plus
//! network checkpoints and loss histories when networks are in the grid).
//!
//! Everything is deterministic for a given (config, seed, data) triple: task
//! results are merged by task index rather than completion order, and every
//! random draw comes from a seed derived from the run seed and the task key.
//! Re-running into the same directory reuses finished network checkpoints
//! (resume after interruption) and rewrites the CSVs byte-identically.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::Duration;
use epibench::data::ingest::read_canonical_csv;
use epibench::data::{
    build_sum_series, build_target_series, make_lag_windows, normalize_per_100k, Country, Dataset,
    NormalizedSeries, SumSeries, WindowSample, WindowSource, WindowSpec, WindowTarget,
};
use epibench::error::{Error, Result};
use epibench::eval::{score_runs, write_forecasts_csv, write_results_csv, ForecastPoint, ForecastRun};
use epibench::folds::{validation_tail, DateRange, FoldSplit};
use epibench::models::dummy::{d_daily_forecast, d_sum_forecast};
use epibench::models::holt_winters::{es_daily_predict, es_sum_predict};
use epibench::models::linear::{fit_linear_svr, fit_ols, LinearModel};
use epibench::nn::{
    predict_total, train_network, write_history_csv, LstmNetwork, NnArchitecture, NnKind,
    TrainConfig, DEFAULT_LAG, NN_SCALE,
};

use crate::config::{ModelEntry, ModelKind, RunConfig, SetLevel};

/// Lag width of the linear models' input windows over the sum series.
const ML_LAG: usize = 14;

/// Fewest training windows the linear models accept.
const MIN_ML_WINDOWS: usize = 15;

/// Share of each region's training anchors held out to early-stop networks.
const VALIDATION_FRACTION: f64 = 0.2;

/// Counts reported after a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub seeds_run: usize,
    pub cells_scored: usize,
    pub cells_skipped: usize,
    pub networks_trained: usize,
    pub networks_resumed: usize,
}

/// Executes the configured grid once per seed.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    let (regions, _) = read_canonical_csv(&config.canonical)?;
    let mut dataset = Dataset::from_regions(regions)?;
    if config.add_country_totals {
        dataset = dataset.with_country_totals()?;
    }
    if dataset.regions.is_empty() {
        return Err(Error::Config("dataset has no regions".into()));
    }
    let folds = config.plan.split_cumulative();
    let mut summary = RunSummary::default();
    for &seed in &config.seeds {
        let seed_summary = run_seed(config, &dataset, &folds, seed)?;
        summary.seeds_run += 1;
        summary.cells_scored += seed_summary.cells_scored;
        summary.cells_skipped += seed_summary.cells_skipped;
        summary.networks_trained += seed_summary.networks_trained;
        summary.networks_resumed += seed_summary.networks_resumed;
    }
    Ok(summary)
}

fn run_seed(
    config: &RunConfig,
    dataset: &Dataset,
    folds: &[FoldSplit],
    seed: u64,
) -> Result<RunSummary> {
    let dir = config.out_dir.join(format!("seed-{seed}"));
    create_dir(&dir)?;
    let config_copy = dir.join("config.toml");
    std::fs::write(&config_copy, config.to_toml()).map_err(|e| Error::io(&config_copy, e))?;

    let nn_tasks = enumerate_nn_tasks(config, dataset, folds);
    let mut networks = BTreeMap::new();
    let mut summary = RunSummary::default();
    if !nn_tasks.is_empty() {
        create_dir(&dir.join("checkpoints"))?;
        create_dir(&dir.join("loss"))?;
        let trained = parallel_map(config.workers, &nn_tasks, |task| {
            train_or_load(dataset, task, &dir, seed, config)
        });
        for result in trained {
            let outcome = result?;
            if outcome.resumed {
                summary.networks_resumed += 1;
            } else {
                summary.networks_trained += 1;
            }
            networks.insert(outcome.key, outcome.network);
        }
    }

    let cells = enumerate_cells(config, dataset, folds);
    let outcomes = parallel_map(config.workers, &cells, |cell| {
        run_cell(dataset, cell, &networks)
    });
    let mut runs = Vec::new();
    for result in outcomes {
        match result? {
            CellOutcome::Run(run) => runs.push(run),
            CellOutcome::Skipped(_) => summary.cells_skipped += 1,
        }
    }
    runs.sort_by(|a, b| {
        (&a.model, a.country, &a.region_id, a.fold, a.horizon)
            .cmp(&(&b.model, b.country, &b.region_id, b.fold, b.horizon))
    });

    let rows = score_runs(&runs)?;
    summary.cells_scored = rows.len();
    write_results_csv(&rows, dir.join("results.csv"))?;
    write_forecasts_csv(&runs, dir.join("forecasts.csv"))?;
    Ok(summary)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Runs `f` over `items` on up to `workers` threads. Results come back in
/// item order no matter which thread finished first, so output never depends
/// on scheduling.
fn parallel_map<T, R, F>(workers: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let threads = workers.min(items.len());
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut indexed: Vec<(usize, R)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(item) = items.get(i) else { break };
                        done.push((i, f(item)));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    indexed.sort_by_key(|(i, _)| *i);
    indexed.into_iter().map(|(_, r)| r).collect()
}

/// Splitmix of an FNV-1a key hash: stable across runs, spread out enough
/// that task seeds share no obvious structure with the run seed.
fn derive_seed(run_seed: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in key.bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = (h ^ run_seed).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Which regions a pooled training task draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scope {
    Country(Country),
    World,
}

impl Scope {
    fn includes(self, country: Country) -> bool {
        match self {
            Scope::Country(c) => c == country,
            Scope::World => true,
        }
    }

    fn code(self) -> String {
        match self {
            Scope::Country(c) => c.code().to_lowercase(),
            Scope::World => "all".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
struct NnTask {
    entry: ModelEntry,
    kind: NnKind,
    fh: usize,
    fold: FoldSplit,
    scope: Scope,
}

impl NnTask {
    /// Stable identifier used for the checkpoint file, the loss history, the
    /// derived seed and the network lookup at scoring time.
    fn key(&self) -> String {
        format!(
            "{}-fh{}-fold{}-{}",
            self.entry.label(),
            self.fh,
            self.fold.fold,
            self.scope.code()
        )
    }
}

/// One network per (architecture, horizon, fold, scope). Folds whose test
/// part is too short to score the horizon train nothing.
fn enumerate_nn_tasks(config: &RunConfig, dataset: &Dataset, folds: &[FoldSplit]) -> Vec<NnTask> {
    let mut tasks = Vec::new();
    for entry in &config.models {
        let ModelKind::Nn(kind) = entry.kind else { continue };
        let scopes: Vec<Scope> = match entry.set {
            SetLevel::World => vec![Scope::World],
            SetLevel::Country => Country::all()
                .into_iter()
                .filter(|&c| dataset.by_country(c).next().is_some())
                .map(Scope::Country)
                .collect(),
            SetLevel::Single => Vec::new(), // rejected by config validation
        };
        for &fh in &config.horizons {
            for fold in folds {
                if fold.test_anchor_range(fh).is_empty() {
                    continue;
                }
                for &scope in &scopes {
                    tasks.push(NnTask { entry: *entry, kind, fh, fold: *fold, scope });
                }
            }
        }
    }
    tasks.sort_by_cached_key(|t| t.key());
    tasks
}

struct TrainedNetwork {
    key: String,
    network: LstmNetwork,
    resumed: bool,
}

fn train_or_load(
    dataset: &Dataset,
    task: &NnTask,
    dir: &Path,
    run_seed: u64,
    config: &RunConfig,
) -> Result<TrainedNetwork> {
    let key = task.key();
    let arch = NnArchitecture::new(task.kind, task.fh);
    let checkpoint = dir.join("checkpoints").join(format!("{key}.json"));
    if checkpoint.exists() {
        let network = LstmNetwork::load(&checkpoint)?;
        if network.arch != arch {
            return Err(Error::Config(format!(
                "checkpoint {} holds architecture {:?}, task {key} needs {arch:?}",
                checkpoint.display(),
                network.arch
            )));
        }
        return Ok(TrainedNetwork { key, network, resumed: true });
    }

    let (train_samples, val_samples) = pooled_samples(dataset, task)?;
    if train_samples.is_empty() || val_samples.is_empty() {
        return Err(Error::Config(format!(
            "network task {key}: no region in scope has enough training data"
        )));
    }

    let mut train_config = TrainConfig::for_kind(task.kind, derive_seed(run_seed, &key));
    if let Some(v) = config.nn.max_epochs {
        train_config.max_epochs = v;
    }
    if let Some(v) = config.nn.batch_size {
        train_config.batch_size = v;
    }
    if let Some(v) = config.nn.patience {
        train_config.patience = v;
    }

    let outcome = train_network(arch, &train_samples, &val_samples, &train_config)?;
    outcome.network.save(&checkpoint)?;
    write_history_csv(&dir.join("loss").join(format!("{key}.csv")), &outcome.history)?;
    eprintln!(
        "trained {key}: {} epochs, best {}",
        outcome.stopped_epoch, outcome.best_epoch
    );
    Ok(TrainedNetwork { key, network: outcome.network, resumed: false })
}

/// Gathers the 28-day lag windows of every in-scope region, split into fit
/// and validation samples by each region's own 20% anchor tail.
fn pooled_samples(
    dataset: &Dataset,
    task: &NnTask,
) -> Result<(Vec<WindowSample>, Vec<WindowSample>)> {
    let mut train_samples = Vec::new();
    let mut val_samples = Vec::new();
    let anchor_range = task.fold.train_anchor_range(task.fh);
    for region in &dataset.regions {
        if !task.scope.includes(region.country) {
            continue;
        }
        let norm = normalize_per_100k(region)?;
        let Some(span) = region_anchor_span(&norm, anchor_range, DEFAULT_LAG, task.fh) else {
            continue;
        };
        // Regions with fewer than 5 usable anchor days cannot give up a
        // validation tail and sit this task out.
        let Ok((fit_range, val_range)) = validation_tail(span, VALIDATION_FRACTION) else {
            continue;
        };
        let targets = match task.kind {
            NnKind::Nn1 => Some(build_target_series(&norm, task.fh)?),
            NnKind::Nn2 => None,
        };
        for (range, bucket) in [(fit_range, &mut train_samples), (val_range, &mut val_samples)] {
            if range.is_empty() {
                continue;
            }
            let spec = WindowSpec::scaled(DEFAULT_LAG, 1.0 / NN_SCALE)
                .with_anchor_window(range.start, range.end - Duration::days(1));
            let target = match &targets {
                Some(t) => WindowTarget::Total(t),
                None => WindowTarget::Daily { norm: &norm, fh: task.fh },
            };
            bucket.extend(make_lag_windows(
                &region.region_id,
                WindowSource::Daily(&norm),
                target,
                &spec,
            )?);
        }
    }
    Ok((train_samples, val_samples))
}

/// Anchors within `range` where the region can both fill a `lag`-day input
/// window and observe the full `fh`-day target.
fn region_anchor_span(
    norm: &NormalizedSeries,
    range: DateRange,
    lag: usize,
    fh: usize,
) -> Option<DateRange> {
    let n = norm.len();
    if n < lag + fh {
        return None;
    }
    let first = norm.date_at(lag - 1);
    let last = norm.date_at(n - 1 - fh);
    let span = range.intersect(&DateRange::new(first, last + Duration::days(1)));
    if span.is_empty() {
        None
    } else {
        Some(span)
    }
}

#[derive(Debug, Clone)]
struct CellTask {
    entry: ModelEntry,
    fh: usize,
    fold: FoldSplit,
    region_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SkipReason {
    /// No test anchor had both the model's input and an observed target.
    NoAnchors,
    /// The fold's training range gave the model too little data to fit.
    TrainingData,
    /// Every scoreable anchor had a zero actual, so MAPE is undefined.
    ZeroActuals,
}

enum CellOutcome {
    Run(ForecastRun),
    Skipped(#[allow(dead_code)] SkipReason),
}

/// Every (model, horizon, fold, region) combination the grid scores.
fn enumerate_cells(config: &RunConfig, dataset: &Dataset, folds: &[FoldSplit]) -> Vec<CellTask> {
    let mut cells = Vec::new();
    for entry in &config.models {
        for &fh in &config.horizons {
            for fold in folds {
                if fold.test_anchor_range(fh).is_empty() {
                    continue;
                }
                for region_index in 0..dataset.regions.len() {
                    cells.push(CellTask { entry: *entry, fh, fold: *fold, region_index });
                }
            }
        }
    }
    cells.sort_by_cached_key(|c| {
        (
            c.entry.label(),
            c.fh,
            c.fold.fold,
            dataset.regions[c.region_index].region_id.clone(),
        )
    });
    cells
}

/// The fitted state a cell carries from its training range to its anchors.
enum Fitted<'a> {
    /// Baselines refit from the full history at every anchor.
    PerAnchor,
    Linear { model: LinearModel, sums: SumSeries },
    Network(&'a LstmNetwork),
}

fn run_cell(
    dataset: &Dataset,
    cell: &CellTask,
    networks: &BTreeMap<String, LstmNetwork>,
) -> Result<CellOutcome> {
    let region = &dataset.regions[cell.region_index];
    let fh = cell.fh;
    let norm = normalize_per_100k(region)?;
    if norm.len() < fh + 1 {
        return Ok(CellOutcome::Skipped(SkipReason::NoAnchors));
    }
    let targets = build_target_series(&norm, fh)?;

    let fitted = match cell.entry.kind {
        ModelKind::DDaily | ModelKind::DSum | ModelKind::EsDaily | ModelKind::EsSum => {
            Fitted::PerAnchor
        }
        ModelKind::MlLr | ModelKind::MlSvr => {
            let train_range = cell.fold.train_anchor_range(fh);
            if train_range.is_empty() {
                return Ok(CellOutcome::Skipped(SkipReason::TrainingData));
            }
            let sums = build_sum_series(&norm, fh)?;
            let spec = WindowSpec::new(ML_LAG)
                .with_anchor_window(train_range.start, train_range.end - Duration::days(1));
            let windows = make_lag_windows(
                &region.region_id,
                WindowSource::Sums(&sums),
                WindowTarget::Total(&targets),
                &spec,
            )?;
            if windows.len() < MIN_ML_WINDOWS {
                return Ok(CellOutcome::Skipped(SkipReason::TrainingData));
            }
            let model = match cell.entry.kind {
                ModelKind::MlLr => fit_ols(&windows)?,
                _ => fit_linear_svr(&windows)?,
            };
            Fitted::Linear { model, sums }
        }
        ModelKind::Nn(_) => {
            let scope = match cell.entry.set {
                SetLevel::Country => Scope::Country(region.country),
                _ => Scope::World,
            };
            let key = format!(
                "{}-fh{}-fold{}-{}",
                cell.entry.label(),
                fh,
                cell.fold.fold,
                scope.code()
            );
            let Some(network) = networks.get(&key) else {
                return Err(Error::Config(format!("no trained network for cell {key}")));
            };
            Fitted::Network(network)
        }
    };

    let mut points = Vec::new();
    let anchor_range = cell.fold.test_anchor_range(fh);
    let mut date = anchor_range.start;
    while date < anchor_range.end {
        let anchor = date;
        date += Duration::days(1);
        let Some(t) = norm.index_of(anchor) else { continue };
        let Some(actual) = targets.at_day(t) else { continue };
        let predicted = match &fitted {
            Fitted::PerAnchor => {
                let result = match cell.entry.kind {
                    ModelKind::DDaily => d_daily_forecast(&norm, t, fh),
                    ModelKind::DSum => d_sum_forecast(&norm, t, fh),
                    ModelKind::EsDaily => es_daily_predict(&norm.values[..=t], fh),
                    _ => es_sum_predict(&norm.values[..=t], fh),
                };
                match result {
                    Ok(p) => p,
                    // The anchor's history is shorter than the model's
                    // minimum; later anchors of the same cell may qualify.
                    Err(Error::InsufficientHistory { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Fitted::Linear { model, sums } => {
                let Some(window) = sum_window(sums, t) else { continue };
                model.predict(&window)?
            }
            Fitted::Network(network) => {
                if t + 1 < DEFAULT_LAG {
                    continue;
                }
                let window: Vec<f64> = norm.values[t + 1 - DEFAULT_LAG..=t]
                    .iter()
                    .map(|v| v / NN_SCALE)
                    .collect();
                predict_total(network, &window)?
            }
        };
        points.push(ForecastPoint { anchor, actual, predicted });
    }

    if points.is_empty() {
        return Ok(CellOutcome::Skipped(SkipReason::NoAnchors));
    }
    if !points.iter().any(|p| p.actual != 0.0) {
        return Ok(CellOutcome::Skipped(SkipReason::ZeroActuals));
    }
    Ok(CellOutcome::Run(ForecastRun {
        model: cell.entry.label(),
        country: region.country,
        region_id: region.region_id.clone(),
        fold: cell.fold.fold,
        horizon: fh,
        points,
    }))
}

/// The `ML_LAG` backward sums ending at anchor `t`, oldest first.
fn sum_window(sums: &SumSeries, t: usize) -> Option<Vec<f64>> {
    let lo = t.checked_sub(ML_LAG - 1)?;
    (lo..=t).map(|d| sums.at_day(d)).collect()
}
