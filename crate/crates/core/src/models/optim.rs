//! Small deterministic optimizers used when fitting the smoothing models:
//! golden-section line search and a Nelder-Mead simplex.

/// Maximizes a unimodal function on `[a, b]` by golden-section search and
/// returns the located argmax. Runs a fixed iteration budget, so results are
/// fully deterministic.
pub fn golden_section_max(f: impl Fn(f64) -> f64, a: f64, b: f64, iterations: usize) -> f64 {
    debug_assert!(a < b);
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iterations {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Minimizes `f` with the Nelder-Mead simplex, starting from `x0` with an
/// axis-aligned initial simplex of the given step. Standard coefficients
/// (reflect 1, expand 2, contract 1/2, shrink 1/2); stops when the simplex's
/// function-value spread drops below `tol` or after `max_iter` steps.
pub fn nelder_mead_min(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    max_iter: usize,
    tol: f64,
) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x);
        simplex.push((x, fx));
    }

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() < tol {
            break;
        }

        // centroid of all but the worst point
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let worst_x = simplex[n].0.clone();
        let blend = |alpha: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst_x)
                .map(|(c, w)| c + alpha * (c - w))
                .collect()
        };

        let reflected = blend(1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = blend(2.0);
            let fe = f(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let contracted = blend(-0.5);
            let fc = f(&contracted);
            if fc < simplex[n].1 {
                simplex[n] = (contracted, fc);
            } else {
                // shrink toward the best vertex
                let best_x = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    for (v, b) in entry.0.iter_mut().zip(&best_x) {
                        *v = b + 0.5 * (*v - b);
                    }
                    entry.1 = f(&entry.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0).0
}
