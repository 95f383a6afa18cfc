//! The benchmark's acceptance gates, one test per criterion, each printing a
//! single PASS / FAIL / SKIP line (visible with `--nocapture`).
//!
//! Criteria 1-3 reproduce published table values and need the real case
//! data: point `EPIBENCH_DATA` at a canonical CSV covering both countries
//! over the benchmark span (criterion 3 additionally wants
//! `EPIBENCH_RUN_NN=1` because it trains the full network grid, which takes
//! hours). Without that data they print SKIP and the mathematical gates in
//! criteria 4-7, which run unconditionally, stand in.

use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use epibench::data::{
    build_sum_series, build_target_series, make_lag_windows, Country, NormalizedSeries,
    WindowSample, WindowSource, WindowSpec, WindowTarget,
};
use epibench::eval::{aggregate, mape, read_results_csv, Averaging, ScoreTable};
use epibench::folds::{DateRange, FoldPlan};
use epibench::models::boxcox::BoxCox;
use epibench::models::holt_winters::{hw_forecast, HoltWintersModel, HoltWintersParams};
use epibench::models::linear::fit_ols;
use epibench::nn::{
    analytic_gradient, max_relative_gap, numeric_gradient, train, DropoutMasks, Loss, LstmNetwork,
    NnArchitecture, NnKind, TrainConfig,
};
use epibench_cli::config::{ModelEntry, ModelKind, NnOverrides, RunConfig, SetLevel};
use epibench_cli::runner::run;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn verdict(criterion: usize, name: &str, pass: bool, detail: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {criterion} ({name}): {word} — {detail}");
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

fn skip(criterion: usize, name: &str, why: &str) {
    println!("acceptance {criterion} ({name}): SKIP — {why}");
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

// ---------------------------------------------------------------------------
// Criteria 1-3: reproduction against the real case data (env-gated).
// ---------------------------------------------------------------------------

fn real_data() -> Option<PathBuf> {
    std::env::var_os("EPIBENCH_DATA").map(PathBuf::from)
}

fn benchmark_grid(data: &Path, out: &Path, horizons: &[usize], seeds: &[u64], models: Vec<ModelEntry>) -> RunConfig {
    RunConfig {
        canonical: data.to_path_buf(),
        add_country_totals: true,
        out_dir: out.to_path_buf(),
        horizons: horizons.to_vec(),
        seeds: seeds.to_vec(),
        workers: std::thread::available_parallelism().map_or(4, |n| n.get()),
        models,
        plan: FoldPlan::default(),
        averaging: Averaging::FoldThenRegion,
        nn: NnOverrides::default(),
    }
}

fn score_seed(out: &Path, seed: u64) -> ScoreTable {
    let rows = read_results_csv(out.join(format!("seed-{seed}/results.csv"))).unwrap();
    aggregate(&rows, Averaging::FoldThenRegion)
}

fn per_region(kind: ModelKind) -> ModelEntry {
    ModelEntry { kind, set: SetLevel::Single }
}

#[test]
fn criterion_1_baseline_reproduction() {
    const NAME: &str = "baseline table cells";
    let Some(data) = real_data() else {
        skip(1, NAME, "set EPIBENCH_DATA to a canonical case CSV to check the published table cells");
        return;
    };
    let dir = TempDir::new().unwrap();
    let config = benchmark_grid(
        &data,
        dir.path(),
        &[14, 42],
        &[0],
        vec![per_region(ModelKind::DDaily), per_region(ModelKind::DSum), per_region(ModelKind::EsDaily)],
    );
    run(&config).unwrap();
    let table = score_seed(dir.path(), 0);

    // Published Russia cells, allowed to drift ±3 points with feed revisions.
    let expected = [
        ("d-daily", 14, 19.8),
        ("es-daily", 14, 18.5),
        ("d-sum", 14, 32.7),
        ("es-daily", 42, 47.6),
    ];
    let mut detail = Vec::new();
    let mut pass = true;
    for (model, horizon, want) in expected {
        let got = table.cell(Country::Ru, horizon, model).map(|c| c.mape);
        match got {
            Some(got) => {
                if (got - want).abs() > 3.0 {
                    pass = false;
                }
                detail.push(format!("{model} fh{horizon} {got:.1} (want {want} ±3)"));
            }
            None => {
                pass = false;
                detail.push(format!("{model} fh{horizon} missing (want {want} ±3)"));
            }
        }
    }
    verdict(1, NAME, pass, &detail.join(", "));
}

#[test]
fn criterion_2_smoothing_beats_regression_at_long_horizon() {
    const NAME: &str = "es-daily < ml-lr at fh42";
    let Some(data) = real_data() else {
        skip(2, NAME, "set EPIBENCH_DATA to a canonical case CSV to check the model ordering");
        return;
    };
    let dir = TempDir::new().unwrap();
    let config = benchmark_grid(
        &data,
        dir.path(),
        &[42],
        &[0],
        vec![per_region(ModelKind::EsDaily), per_region(ModelKind::MlLr)],
    );
    run(&config).unwrap();
    let table = score_seed(dir.path(), 0);

    let mut detail = Vec::new();
    let mut pass = true;
    for country in [Country::Us, Country::Ru] {
        let es = table.cell(country, 42, "es-daily").map(|c| c.mape);
        let lr = table.cell(country, 42, "ml-lr").map(|c| c.mape);
        match (es, lr) {
            (Some(es), Some(lr)) => {
                if es >= lr {
                    pass = false;
                }
                detail.push(format!("{}: es-daily {es:.1} vs ml-lr {lr:.1}", country.code()));
            }
            _ => {
                pass = false;
                detail.push(format!("{}: missing cells", country.code()));
            }
        }
    }
    verdict(2, NAME, pass, &detail.join(", "));
}

#[test]
fn criterion_3_nn2_band() {
    const NAME: &str = "nn2-set3 country averages";
    let Some(data) = real_data() else {
        skip(
            3,
            NAME,
            "needs EPIBENCH_DATA (and EPIBENCH_RUN_NN=1); without the real feed the network \
             grid is not reproducible at desk scale, so criteria 4-7 stand in",
        );
        return;
    };
    if std::env::var("EPIBENCH_RUN_NN").map_or(true, |v| v != "1") {
        skip(3, NAME, "set EPIBENCH_RUN_NN=1 to train the full network grid (hours on CPU)");
        return;
    }
    let dir = TempDir::new().unwrap();
    let seeds = [1u64, 2, 3];
    let config = benchmark_grid(
        &data,
        dir.path(),
        &[14, 28, 42],
        &seeds,
        vec![ModelEntry { kind: ModelKind::Nn(NnKind::Nn2), set: SetLevel::World }],
    );
    run(&config).unwrap();

    // Best of three seeds per country, within ±6 of the published averages.
    let mut best_ru = f64::INFINITY;
    let mut best_us = f64::INFINITY;
    for seed in seeds {
        let table = score_seed(dir.path(), seed);
        if let Some(avg) = table.average(Country::Ru, "nn2-set3") {
            best_ru = best_ru.min((avg - 28.1).abs());
        }
        if let Some(avg) = table.average(Country::Us, "nn2-set3") {
            best_us = best_us.min((avg - 40.5).abs());
        }
    }
    verdict(
        3,
        NAME,
        best_ru <= 6.0 && best_us <= 6.0,
        &format!("best-seed gap to 28.1 (RU): {best_ru:.1}, to 40.5 (US): {best_us:.1}, allowed 6.0"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: analytic gradients vs central finite differences.
// ---------------------------------------------------------------------------

/// Targets sit at least 0.05 away from the current outputs so the MAE kink
/// at zero residual never falls inside the difference stencil.
fn safe_target(network: &LstmNetwork, inputs: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    network
        .infer(inputs)
        .unwrap()
        .iter()
        .map(|o| {
            let magnitude = rng.gen_range(0.05..0.5);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            o + sign * magnitude
        })
        .collect()
}

#[test]
fn criterion_4_gradient_oracle() {
    const NAME: &str = "gradients match finite differences";
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x4ad + trial);
        // Rotate through both architectures and both losses, 3 hidden units
        // (horizon 3) unrolled over 5 input steps (lag 5).
        let kind = if trial % 2 == 0 { NnKind::Nn1 } else { NnKind::Nn2 };
        let loss = if (trial / 2) % 2 == 0 { Loss::Mse } else { Loss::Mae };
        let arch = NnArchitecture { kind, horizon: 3, lag: 5 };
        let network = LstmNetwork::build(arch, &mut rng);
        let inputs: Vec<f64> = (0..arch.lag).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target = safe_target(&network, &inputs, &mut rng);
        // Every fourth trial exercises the dropout path with a fixed mask.
        let masks = if trial % 4 == 3 {
            DropoutMasks::draw(0.4, network.mask_dim(), &mut rng)
        } else {
            DropoutMasks::ones(network.mask_dim())
        };
        let analytic = analytic_gradient(&network, &inputs, &target, loss, &masks);
        let numeric = numeric_gradient(&network, &inputs, &target, loss, &masks);
        let gap = max_relative_gap(&analytic, &numeric);
        worst = worst.max(gap);
    }
    verdict(
        4,
        NAME,
        worst < 1e-4,
        &format!("100 randomized 3-unit 5-step trials, worst relative gap {worst:.2e} (limit 1e-4)"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: forecast-math oracles.
// ---------------------------------------------------------------------------

fn random_series(rng: &mut ChaCha8Rng, len: usize) -> NormalizedSeries {
    NormalizedSeries {
        start_date: date(2020, 4, 1),
        values: (0..len)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    0.0
                } else {
                    rng.gen_range(0.0..50.0)
                }
            })
            .collect(),
    }
}

/// Forward and backward horizon sums by direct enumeration of the defining
/// windows, compared bit for bit.
fn check_series_builders() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e51e5);
    for case in 0..1000 {
        let fh = rng.gen_range(1..=8usize);
        let n = rng.gen_range(fh + 1..=40);
        let norm = random_series(&mut rng, n);
        let v = &norm.values;

        let target = build_target_series(&norm, fh)
            .map_err(|e| format!("case {case}: target build failed: {e}"))?;
        if target.values.len() != n - fh {
            return Err(format!("case {case}: target length {} != {}", target.values.len(), n - fh));
        }
        for t in 0..n - fh {
            let want: f64 = v[t + 1..=t + fh].iter().sum();
            if target.at_day(t) != Some(want) {
                return Err(format!("case {case}: target[{t}] {:?} != {want}", target.at_day(t)));
            }
        }
        if target.at_day(n - fh).is_some() {
            return Err(format!("case {case}: target defined past its last anchor"));
        }

        let sums = build_sum_series(&norm, fh)
            .map_err(|e| format!("case {case}: sum build failed: {e}"))?;
        if sums.values.len() != n - fh + 1 {
            return Err(format!("case {case}: sum length {} != {}", sums.values.len(), n - fh + 1));
        }
        for t in fh - 1..n {
            let want: f64 = v[t + 1 - fh..=t].iter().sum();
            if sums.at_day(t) != Some(want) {
                return Err(format!("case {case}: sum[{t}] {:?} != {want}", sums.at_day(t)));
            }
        }
        if fh >= 2 && sums.at_day(fh - 2).is_some() {
            return Err(format!("case {case}: sum defined before its first day"));
        }

        // The two views agree: the forward sum anchored at t is the backward
        // sum ending fh days later.
        for t in 0..n - fh {
            if target.at_day(t) != sums.at_day(t + fh) {
                return Err(format!("case {case}: forward/backward mismatch at {t}"));
            }
        }
    }
    Ok("1000 random series match direct window enumeration bit-for-bit".into())
}

/// An independently written damped-trend recursion and forecast, including
/// its own power-form Box-Cox instead of the library's expm1 variant.
fn check_holt_winters_oracle() -> Result<String, String> {
    fn bc(y: f64, lambda: f64) -> f64 {
        let x = y + 1.0;
        if lambda == 0.0 {
            x.ln()
        } else {
            (x.powf(lambda) - 1.0) / lambda
        }
    }
    fn bc_inv(z: f64, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return z.exp() - 1.0;
        }
        let base = lambda * z + 1.0;
        if base <= 0.0 {
            -1.0
        } else {
            base.powf(1.0 / lambda) - 1.0
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x4011);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let n = rng.gen_range(12..=80);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..200.0)).collect();
        let lambda = match case % 3 {
            0 => 0.0,
            1 => 0.5,
            _ => rng.gen_range(-0.5..1.5),
        };
        let alpha = rng.gen_range(0.05..0.95);
        let beta = rng.gen_range(0.05..0.95);
        let phi = rng.gen_range(0.8..=1.0);

        let z: Vec<f64> = values.iter().map(|&y| bc(y, lambda)).collect();
        let params = HoltWintersParams {
            alpha,
            beta,
            phi,
            boxcox: BoxCox::new(lambda, 1.0).unwrap(),
            initial_level: z[0],
            initial_trend: z[1] - z[0],
        };

        // Hand-rolled recursion over the transformed series.
        let mut level = z[0];
        let mut trend = z[1] - z[0];
        let mut sse = 0.0;
        for &obs in &z[1..] {
            let err = obs - (level + phi * trend);
            sse += err * err;
            let next = alpha * obs + (1.0 - alpha) * (level + phi * trend);
            trend = beta * (next - level) + (1.0 - beta) * phi * trend;
            level = next;
        }

        let (lib_level, lib_trend, lib_sse) = params.smooth(&z);
        worst = worst
            .max((lib_level - level).abs())
            .max((lib_trend - trend).abs())
            .max((lib_sse - sse).abs());

        let model = HoltWintersModel::from_state(params, lib_level, lib_trend).unwrap();
        let forecast = hw_forecast(&model, 14);
        let mut damp_sum = 0.0;
        for (h, &got) in forecast.iter().enumerate() {
            damp_sum += phi.powi(h as i32 + 1);
            let want = bc_inv(lib_level + damp_sum * lib_trend, lambda).max(0.0);
            worst = worst.max((got - want).abs());
        }
        if worst > 1e-8 {
            return Err(format!("case {case}: gap {worst:.2e} exceeds 1e-8"));
        }
    }
    Ok(format!("200 fixed-parameter recursions and 14-step forecasts, worst gap {worst:.2e}"))
}

/// Least squares via explicitly assembled normal equations solved by
/// Gaussian elimination with partial pivoting.
fn normal_equations(samples: &[WindowSample]) -> Vec<f64> {
    let d = samples[0].inputs.len() + 1; // intercept first
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    for s in samples {
        let mut row = Vec::with_capacity(d);
        row.push(1.0);
        row.extend_from_slice(&s.inputs);
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] += row[i] * row[j];
            }
            b[i] += row[i] * s.target[0];
        }
    }
    for col in 0..d {
        let pivot = (col..d).max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs())).unwrap();
        if pivot != col {
            for j in 0..d {
                a.swap(col * d + j, pivot * d + j);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..d {
            let factor = a[row * d + col] / a[col * d + col];
            for j in col..d {
                a[row * d + j] -= factor * a[col * d + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut beta = vec![0.0; d];
    for row in (0..d).rev() {
        let mut acc = b[row];
        for j in row + 1..d {
            acc -= a[row * d + j] * beta[j];
        }
        beta[row] = acc / a[row * d + row];
    }
    beta
}

fn check_ols_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x015);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let d = rng.gen_range(2..=8usize);
        let n = rng.gen_range(d + 12..=60);
        let true_w: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let true_b = rng.gen_range(-5.0..5.0);
        let samples: Vec<WindowSample> = (0..n)
            .map(|i| {
                let inputs: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..10.0)).collect();
                let y = true_b
                    + inputs.iter().zip(&true_w).map(|(x, w)| x * w).sum::<f64>()
                    + rng.gen_range(-0.5..0.5);
                WindowSample {
                    region_id: "r".into(),
                    anchor_date: date(2020, 4, 1) + Duration::days(i as i64),
                    inputs,
                    target: vec![y],
                }
            })
            .collect();

        let model = fit_ols(&samples).map_err(|e| format!("case {case}: fit failed: {e}"))?;
        let beta = normal_equations(&samples);
        for s in &samples {
            let want = beta[0] + s.inputs.iter().zip(&beta[1..]).map(|(x, w)| x * w).sum::<f64>();
            // The unclamped affine prediction is the least-squares function
            // the oracle solves for.
            let got = model.predict_raw(&s.inputs).unwrap();
            let gap = (got - want).abs() / want.abs().max(1.0);
            worst = worst.max(gap);
        }
        if worst > 1e-8 {
            return Err(format!("case {case}: fitted values differ by {worst:.2e}"));
        }
    }
    Ok(format!("50 random designs, fitted values within {worst:.2e} of the normal-equations solution"))
}

#[test]
fn criterion_5_forecast_math_oracles() {
    const NAME: &str = "series, smoothing and least-squares oracles";
    let mut details = Vec::new();
    let mut pass = true;
    for part in [check_series_builders(), check_holt_winters_oracle(), check_ols_oracle()] {
        match part {
            Ok(msg) => details.push(msg),
            Err(msg) => {
                pass = false;
                details.push(msg);
            }
        }
    }
    verdict(5, NAME, pass, &details.join("; "));
}

// ---------------------------------------------------------------------------
// Criterion 6: MAPE identities.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_metric_identities() {
    const NAME: &str = "mape identities";
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a9e);
    let mut pass = true;
    let mut details = Vec::new();

    // Two-point worked example: errors of 10% and 20% average to 15%.
    let two_point = mape(&[100.0, 200.0], &[90.0, 240.0]).unwrap();
    if (two_point - 15.0).abs() > 15.0 * 1e-12 {
        pass = false;
    }
    details.push(format!("two-point example {two_point}"));

    let mut worst_scale_gap: f64 = 0.0;
    for _ in 0..300 {
        let n = rng.gen_range(1..=30usize);
        let actuals: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..100.0)).collect();
        let forecasts: Vec<f64> = (0..n).map(|_| rng.gen_range(-20.0..120.0)).collect();
        let m = mape(&actuals, &forecasts).unwrap();

        // Non-negative everywhere.
        if !(m >= 0.0) {
            pass = false;
        }

        // Scale invariance: a power-of-two rescale is lossless in binary
        // floating point, so the score must be bit-identical; an arbitrary
        // rescale agrees to rounding.
        let scale8 = mape(
            &actuals.iter().map(|a| a * 8.0).collect::<Vec<_>>(),
            &forecasts.iter().map(|f| f * 8.0).collect::<Vec<_>>(),
        )
        .unwrap();
        if scale8 != m {
            pass = false;
        }
        let scale_odd = mape(
            &actuals.iter().map(|a| a * 3.7).collect::<Vec<_>>(),
            &forecasts.iter().map(|f| f * 3.7).collect::<Vec<_>>(),
        )
        .unwrap();
        worst_scale_gap = worst_scale_gap.max((scale_odd - m).abs() / m.max(1e-9));

        // Zero iff perfect.
        if mape(&actuals, &actuals).unwrap() != 0.0 {
            pass = false;
        }
        if m == 0.0 && actuals.iter().zip(&forecasts).any(|(a, f)| a != f) {
            pass = false;
        }
    }
    if worst_scale_gap > 1e-12 {
        pass = false;
    }
    details.push(format!(
        "300 random trials: non-negative, zero iff perfect, power-of-two scaling bit-exact, \
         odd scaling within {worst_scale_gap:.1e}"
    ));
    verdict(6, NAME, pass, &details.join("; "));
}

// ---------------------------------------------------------------------------
// Criterion 7: protocol invariants.
// ---------------------------------------------------------------------------

fn check_default_folds() -> Result<String, String> {
    let plan = FoldPlan::default();
    let folds = plan.split_cumulative();
    if folds.len() != 5 {
        return Err(format!("expected 5 folds, got {}", folds.len()));
    }
    let boundaries = [
        date(2020, 7, 22),
        date(2020, 12, 2),
        date(2021, 4, 14),
        date(2021, 8, 25),
        date(2022, 1, 5),
    ];
    for (i, fold) in folds.iter().enumerate() {
        if fold.fold != i + 1 {
            return Err(format!("fold numbering broken at {i}"));
        }
        if fold.train.start != date(2020, 3, 12) {
            return Err(format!("fold {} training does not start at the global start", fold.fold));
        }
        if fold.train.end != boundaries[i] || fold.test.start != boundaries[i] {
            return Err(format!("fold {} boundary is not {}", fold.fold, boundaries[i]));
        }
        let test_end = if i + 1 < 5 { boundaries[i + 1] } else { date(2022, 2, 16) };
        if fold.test.end != test_end {
            return Err(format!("fold {} test end is not {test_end}", fold.fold));
        }
        if i > 0 && fold.train.end <= folds[i - 1].train.end {
            return Err(format!("fold {} training range does not extend fold {}", fold.fold, i));
        }
    }
    Ok("5 cumulative folds at the documented boundary dates".into())
}

fn check_no_leakage() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1ea);
    let mut range_checks = 0usize;
    let mut sample_checks = 0usize;
    for case in 0..200 {
        let start = date(2020, 3, 12) + Duration::days(rng.gen_range(0..120));
        let mut boundaries = Vec::new();
        let mut cursor = start;
        for _ in 0..rng.gen_range(1..=6usize) {
            cursor += Duration::days(rng.gen_range(20..200));
            boundaries.push(cursor);
        }
        let end = cursor + Duration::days(rng.gen_range(10..100));
        let plan = FoldPlan::new(start, end, boundaries).map_err(|e| format!("case {case}: {e}"))?;

        for fold in plan.split_cumulative() {
            for fh in [14usize, 28, 42] {
                let anchors = fold.train_anchor_range(fh);
                let Some(last) = anchors.last_day() else { continue };
                // The last training target day must precede the test range.
                if last + Duration::days(fh as i64) >= fold.test.start {
                    return Err(format!(
                        "case {case} fold {} fh {fh}: training target reaches {}",
                        fold.fold,
                        last + Duration::days(fh as i64)
                    ));
                }
                range_checks += 1;

                // Materialize actual windows for a handful of plans and
                // check every produced sample, as the runner builds them.
                if case % 10 == 0 {
                    let n = (end - start).num_days() as usize + 1;
                    let norm = NormalizedSeries {
                        start_date: start,
                        values: (0..n).map(|i| (i % 17) as f64 + 1.0).collect(),
                    };
                    let targets = build_target_series(&norm, fh).map_err(|e| e.to_string())?;
                    let spec = WindowSpec::new(14)
                        .with_anchor_window(anchors.start, anchors.end - Duration::days(1));
                    let windows = make_lag_windows(
                        "probe",
                        WindowSource::Daily(&norm),
                        WindowTarget::Total(&targets),
                        &spec,
                    )
                    .map_err(|e| e.to_string())?;
                    for w in &windows {
                        if w.anchor_date + Duration::days(fh as i64) >= fold.test.start {
                            return Err(format!(
                                "case {case} fold {} fh {fh}: sample at {} leaks into the test range",
                                fold.fold, w.anchor_date
                            ));
                        }
                    }
                    sample_checks += windows.len();
                }
            }
        }
    }
    Ok(format!(
        "{range_checks} training ranges and {sample_checks} materialized samples end before their test ranges"
    ))
}

fn check_early_stopping() -> Result<String, String> {
    // A convex probe rigged so validation loss strictly worsens from epoch 1
    // on: training pulls the zero-initialized weights toward target 10 while
    // validation wants the untouched output 0.
    let train_samples = vec![WindowSample {
        region_id: "t".into(),
        anchor_date: date(2020, 4, 1),
        inputs: vec![1.0],
        target: vec![10.0],
    }];
    let val_samples = vec![WindowSample {
        region_id: "v".into(),
        anchor_date: date(2020, 4, 2),
        inputs: vec![1.0],
        target: vec![0.0],
    }];
    let mut config = TrainConfig::for_kind(NnKind::Nn1, 9);
    config.max_epochs = 1000;
    config.patience = 100;

    let outcome = train(LstmNetwork::linear_probe(1), &train_samples, &val_samples, &config)
        .map_err(|e| e.to_string())?;
    if outcome.stopped_epoch != 101 {
        return Err(format!("stopped at epoch {}, expected patience+1 = 101", outcome.stopped_epoch));
    }
    if outcome.best_epoch != 1 {
        return Err(format!("best epoch {}, expected 1", outcome.best_epoch));
    }
    if outcome.history.len() != 101 {
        return Err(format!("history has {} epochs, expected 101", outcome.history.len()));
    }
    if !outcome.history.windows(2).all(|w| w[1].val_loss > w[0].val_loss) {
        return Err("validation loss was not strictly increasing".into());
    }

    // The restored weights are exactly the epoch-1 weights: a one-epoch run
    // of the same seeded configuration reproduces them bit for bit.
    let mut one_epoch = config.clone();
    one_epoch.max_epochs = 1;
    let reference = train(LstmNetwork::linear_probe(1), &train_samples, &val_samples, &one_epoch)
        .map_err(|e| e.to_string())?;
    if outcome.network.flat_params() != reference.network.flat_params() {
        return Err("restored weights differ from the epoch-1 weights".into());
    }
    Ok("patience 100 stops at epoch 101 and restores the epoch-1 weights".into())
}

#[test]
fn criterion_7_protocol_invariants() {
    const NAME: &str = "folds, leakage and early stopping";
    let mut details = Vec::new();
    let mut pass = true;
    for part in [check_default_folds(), check_no_leakage(), check_early_stopping()] {
        match part {
            Ok(msg) => details.push(msg),
            Err(msg) => {
                pass = false;
                details.push(msg);
            }
        }
    }
    verdict(7, NAME, pass, &details.join("; "));
}

// ---------------------------------------------------------------------------
// Deterministic output bytes (stated invariant of the toolkit).
// ---------------------------------------------------------------------------

#[test]
fn end_to_end_determinism_on_synthetic_data() {
    use epibench::data::ingest::write_canonical_csv;
    use epibench::data::RegionSeries;

    let dir = TempDir::new().unwrap();
    let start = date(2020, 4, 1);
    let regions: Vec<RegionSeries> = vec![
        RegionSeries::new(
            "a",
            Country::Ru,
            90_000,
            start,
            (0..220).map(|i| 30.0 + 10.0 * (i as f64 / 9.0).sin() + (i % 5) as f64).collect(),
        )
        .unwrap(),
        RegionSeries::new(
            "b",
            Country::Us,
            40_000,
            start,
            (0..220).map(|i| 50.0 + 15.0 * (i as f64 / 7.0).cos() + (i % 3) as f64).collect(),
        )
        .unwrap(),
    ];
    let data = dir.path().join("cases.csv");
    write_canonical_csv(&regions, &data).unwrap();

    let plan = FoldPlan::new(start, date(2020, 11, 6), vec![date(2020, 8, 1)]).unwrap();
    let make = |out: &Path, workers: usize| RunConfig {
        canonical: data.clone(),
        add_country_totals: true,
        out_dir: out.to_path_buf(),
        horizons: vec![14],
        seeds: vec![11],
        workers,
        models: vec![
            per_region(ModelKind::DDaily),
            per_region(ModelKind::DSum),
            per_region(ModelKind::EsDaily),
            per_region(ModelKind::MlLr),
        ],
        plan: plan.clone(),
        averaging: Averaging::FoldThenRegion,
        nn: NnOverrides::default(),
    };

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run(&make(&out_a, 1)).unwrap();
    run(&make(&out_b, 8)).unwrap();
    for file in ["results.csv", "forecasts.csv"] {
        assert_eq!(
            std::fs::read(out_a.join("seed-11").join(file)).unwrap(),
            std::fs::read(out_b.join("seed-11").join(file)).unwrap(),
            "{file} must not depend on the worker count"
        );
    }

    // An identical rerun reproduces everything, provenance copy included.
    let before: Vec<Vec<u8>> = ["results.csv", "forecasts.csv", "config.toml"]
        .iter()
        .map(|f| std::fs::read(out_a.join("seed-11").join(f)).unwrap())
        .collect();
    run(&make(&out_a, 1)).unwrap();
    for (file, bytes) in ["results.csv", "forecasts.csv", "config.toml"].iter().zip(&before) {
        assert_eq!(
            &std::fs::read(out_a.join("seed-11").join(file)).unwrap(),
            bytes,
            "{file} changed across identical reruns"
        );
    }
    println!("determinism: PASS — identical bytes across worker counts and reruns");
}

/// The ranges the leakage check relies on behave as half-open intervals.
#[test]
fn date_range_conventions_hold() {
    let r = DateRange::new(date(2020, 4, 1), date(2020, 4, 11));
    assert_eq!(r.days(), 10);
    assert!(r.contains(date(2020, 4, 1)));
    assert!(!r.contains(date(2020, 4, 11)));
    assert_eq!(r.last_day(), Some(date(2020, 4, 10)));
}
