//! Linear forecasters over 14-lag windows of the horizon-sum series:
//! ordinary least squares and an L1-loss linear support vector regressor.
//!
//! OLS standardizes features by centering and dividing by the centered
//! column's L2 norm, then applies the pseudo-inverse computed from the Gram
//! matrix's eigendecomposition (rank-deficient inputs get the minimum-norm
//! solution). The SVR z-scores features, centers targets, and minimizes
//! `1/2 ||w||^2 + C * sum(max(0, |y - f(x)| - epsilon))`
//! by dual coordinate descent with an augmented bias feature.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::WindowSample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearKind {
    Ols,
    Svr,
}

impl LinearKind {
    fn name(self) -> &'static str {
        match self {
            LinearKind::Ols => "ols",
            LinearKind::Svr => "svr",
        }
    }
}

/// A fitted linear model in standardized feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_centers: Vec<f64>,
    pub feature_scales: Vec<f64>,
    /// False when the SVR hit its sweep cap before meeting tolerance.
    pub converged: bool,
    /// True when OLS had fewer samples than features + 1 (or lost rank); the
    /// returned solution is the minimum-norm one.
    pub underdetermined: bool,
}

impl LinearModel {
    fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.weights.len() {
            return Err(Error::Shape(format!(
                "expected {} features, got {}",
                self.weights.len(),
                x.len()
            )));
        }
        Ok(x.iter()
            .zip(&self.feature_centers)
            .zip(&self.feature_scales)
            .map(|((v, c), s)| (v - c) / s)
            .collect())
    }

    /// Affine prediction without the non-negativity clamp.
    pub fn predict_raw(&self, x: &[f64]) -> Result<f64> {
        let z = self.standardize(x)?;
        Ok(self.bias + self.weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>())
    }

    /// Case totals cannot be negative, so predictions clamp at zero.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_raw(x)?.max(0.0))
    }

    /// Flat text serialization (one labeled line per field).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |values: &[f64]| {
            values
                .iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "kind {}", self.kind.name());
        let _ = writeln!(out, "converged {}", self.converged);
        let _ = writeln!(out, "underdetermined {}", self.underdetermined);
        let _ = writeln!(out, "bias {}", self.bias);
        let _ = writeln!(out, "weights {}", join(&self.weights));
        let _ = writeln!(out, "centers {}", join(&self.feature_centers));
        let _ = writeln!(out, "scales {}", join(&self.feature_scales));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Config(format!("bad linear model text: {msg}"));
        let mut kind = None;
        let mut converged = true;
        let mut underdetermined = false;
        let mut bias = None;
        let mut weights = None;
        let mut centers = None;
        let mut scales = None;
        let parse_vec = |rest: &str| -> Result<Vec<f64>> {
            rest.split_whitespace()
                .map(|tok| tok.parse().map_err(|_| bad(&format!("bad number {tok:?}"))))
                .collect()
        };
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "kind" => {
                    kind = Some(match rest {
                        "ols" => LinearKind::Ols,
                        "svr" => LinearKind::Svr,
                        other => return Err(bad(&format!("unknown kind {other:?}"))),
                    })
                }
                "converged" => converged = rest.parse().map_err(|_| bad("converged"))?,
                "underdetermined" => {
                    underdetermined = rest.parse().map_err(|_| bad("underdetermined"))?
                }
                "bias" => bias = Some(rest.parse().map_err(|_| bad("bias"))?),
                "weights" => weights = Some(parse_vec(rest)?),
                "centers" => centers = Some(parse_vec(rest)?),
                "scales" => scales = Some(parse_vec(rest)?),
                other => return Err(bad(&format!("unknown field {other:?}"))),
            }
        }
        let model = LinearModel {
            kind: kind.ok_or_else(|| bad("missing kind"))?,
            weights: weights.ok_or_else(|| bad("missing weights"))?,
            bias: bias.ok_or_else(|| bad("missing bias"))?,
            feature_centers: centers.ok_or_else(|| bad("missing centers"))?,
            feature_scales: scales.ok_or_else(|| bad("missing scales"))?,
            converged,
            underdetermined,
        };
        if model.weights.len() != model.feature_centers.len()
            || model.weights.len() != model.feature_scales.len()
        {
            return Err(bad("mismatched vector lengths"));
        }
        Ok(model)
    }
}

/// Validated design matrix: row-major features plus scalar targets.
struct Design {
    n: usize,
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn design(samples: &[WindowSample]) -> Result<Design> {
    let Some(first) = samples.first() else {
        return Err(Error::InsufficientHistory { needed: 1, got: 0 });
    };
    let d = first.inputs.len();
    if d == 0 {
        return Err(Error::Shape("samples have no features".into()));
    }
    let n = samples.len();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for s in samples {
        if s.inputs.len() != d {
            return Err(Error::Shape(format!(
                "inconsistent feature counts: {} vs {d}",
                s.inputs.len()
            )));
        }
        if s.target.len() != 1 {
            return Err(Error::Shape(format!(
                "linear models need scalar targets, got {}",
                s.target.len()
            )));
        }
        x.extend_from_slice(&s.inputs);
        y.push(s.target[0]);
    }
    Ok(Design { n, d, x, y })
}

fn column_means(design: &Design) -> Vec<f64> {
    let mut means = vec![0.0; design.d];
    for row in 0..design.n {
        for (j, m) in means.iter_mut().enumerate() {
            *m += design.x[row * design.d + j];
        }
    }
    for m in &mut means {
        *m /= design.n as f64;
    }
    means
}

/// Ordinary least squares on centered, L2-normalized feature columns.
pub fn fit_ols(samples: &[WindowSample]) -> Result<LinearModel> {
    let design = design(samples)?;
    let (n, d) = (design.n, design.d);
    let centers = column_means(&design);

    let mut centered = vec![0.0; n * d];
    for row in 0..n {
        for j in 0..d {
            centered[row * d + j] = design.x[row * d + j] - centers[j];
        }
    }
    let mut scales = vec![0.0; d];
    for row in 0..n {
        for (j, s) in scales.iter_mut().enumerate() {
            let v = centered[row * d + j];
            *s += v * v;
        }
    }
    for s in &mut scales {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }

    let z = DMatrix::from_fn(n, d, |r, c| centered[r * d + c] / scales[c]);
    let y_mean = design.y.iter().sum::<f64>() / n as f64;
    let yc = DVector::from_fn(n, |r, _| design.y[r] - y_mean);

    // Minimum-norm least squares through the Gram matrix's symmetric
    // eigendecomposition. The bidiagonal SVD can return an inconsistent
    // factorization when columns are exactly collinear (repeated lag
    // windows over a linear stretch do this), while the symmetric solver
    // stays dependable; the standardized columns have unit norm, so the
    // Gram matrix is a well-scaled correlation matrix.
    let rhs = z.transpose() * &yc;
    let eigen = SymmetricEigen::new(z.transpose() * &z);
    let lambda_max = eigen.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let tol = 1e-12 * lambda_max.max(1.0);
    let mut projected = eigen.eigenvectors.transpose() * rhs;
    let mut rank = 0usize;
    for (coeff, &lambda) in projected.iter_mut().zip(eigen.eigenvalues.iter()) {
        if lambda > tol {
            *coeff /= lambda;
            rank += 1;
        } else {
            *coeff = 0.0;
        }
    }
    let weights = eigen.eigenvectors * projected;

    Ok(LinearModel {
        kind: LinearKind::Ols,
        weights: weights.iter().copied().collect(),
        bias: y_mean,
        feature_centers: centers,
        feature_scales: scales,
        converged: true,
        underdetermined: n < d + 1 || rank < d,
    })
}

/// Knobs for the SVR solver; the benchmark runs the defaults.
#[derive(Debug, Clone, Copy)]
pub struct SvrOptions {
    pub c: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for SvrOptions {
    fn default() -> Self {
        SvrOptions {
            c: 1.0,
            epsilon: 0.0,
            tolerance: 1e-4,
            max_sweeps: 5000,
        }
    }
}

/// Fit result plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct SvrFit {
    pub model: LinearModel,
    /// Dual objective after every sweep; non-increasing by construction.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
}

/// L1-loss linear SVR with the benchmark defaults (C=1, epsilon=0).
pub fn fit_linear_svr(samples: &[WindowSample]) -> Result<LinearModel> {
    Ok(fit_linear_svr_with(samples, &SvrOptions::default())?.model)
}

/// Dual coordinate descent for L1-loss SVR.
///
/// Features are z-scored and augmented with a constant-1 bias column; the
/// target mean is removed before the solve and added back to the bias so a
/// uniform target shift moves predictions by exactly that shift.
pub fn fit_linear_svr_with(samples: &[WindowSample], opts: &SvrOptions) -> Result<SvrFit> {
    if !(opts.c > 0.0) || opts.epsilon < 0.0 || !(opts.tolerance > 0.0) || opts.max_sweeps == 0 {
        return Err(Error::Config(format!("bad SVR options: {opts:?}")));
    }
    let design = design(samples)?;
    let (n, d) = (design.n, design.d);
    let centers = column_means(&design);
    let mut scales = vec![0.0; d];
    for row in 0..n {
        for (j, s) in scales.iter_mut().enumerate() {
            let v = design.x[row * d + j] - centers[j];
            *s += v * v;
        }
    }
    for s in &mut scales {
        // population standard deviation; degenerate columns keep scale 1
        *s = (*s / n as f64).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }

    // augmented standardized rows: [z_1 .. z_d, 1]
    let da = d + 1;
    let mut za = vec![0.0; n * da];
    for row in 0..n {
        for j in 0..d {
            za[row * da + j] = (design.x[row * d + j] - centers[j]) / scales[j];
        }
        za[row * da + d] = 1.0;
    }
    let y_mean = design.y.iter().sum::<f64>() / n as f64;
    let t: Vec<f64> = design.y.iter().map(|y| y - y_mean).collect();
    let q_diag: Vec<f64> = (0..n)
        .map(|i| za[i * da..(i + 1) * da].iter().map(|v| v * v).sum())
        .collect();

    let mut beta = vec![0.0; n];
    let mut w = vec![0.0; da];
    let mut trace: Vec<f64> = Vec::new();
    let mut sweeps = 0;
    let mut converged = false;
    let dual_objective = |w: &[f64], beta: &[f64]| -> f64 {
        let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        let lin: f64 = beta.iter().zip(&t).map(|(b, t)| b * t).sum();
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        reg - lin + opts.epsilon * l1
    };

    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_violation = 0.0f64;
        for i in 0..n {
            let row = &za[i * da..(i + 1) * da];
            let g: f64 = w.iter().zip(row).map(|(w, z)| w * z).sum::<f64>() - t[i];
            let b = beta[i];

            // projected (sub)gradient for the stopping test
            let pg = if b == -opts.c {
                (g - opts.epsilon).min(0.0)
            } else if b == opts.c {
                (g + opts.epsilon).max(0.0)
            } else if b > 0.0 {
                g + opts.epsilon
            } else if b < 0.0 {
                g - opts.epsilon
            } else if g > opts.epsilon {
                g - opts.epsilon
            } else if g < -opts.epsilon {
                g + opts.epsilon
            } else {
                0.0
            };
            max_violation = max_violation.max(pg.abs());

            // exact minimization along coordinate i with the eps*|beta| term
            let q = q_diag[i];
            let up = b - (g + opts.epsilon) / q;
            let down = b - (g - opts.epsilon) / q;
            let new_beta = if up > 0.0 {
                up
            } else if down < 0.0 {
                down
            } else {
                0.0
            }
            .clamp(-opts.c, opts.c);

            let delta = new_beta - b;
            if delta != 0.0 {
                for (wv, zv) in w.iter_mut().zip(row) {
                    *wv += delta * zv;
                }
                beta[i] = new_beta;
            }
        }
        let objective = dual_objective(&w, &beta);
        if let Some(&previous) = trace.last() {
            debug_assert!(
                objective <= previous + 1e-9 * previous.abs().max(1.0),
                "dual objective increased: {previous} -> {objective}"
            );
        }
        trace.push(objective);
        if max_violation < opts.tolerance {
            converged = true;
            break;
        }
    }

    let bias = y_mean + w[d];
    let model = LinearModel {
        kind: LinearKind::Svr,
        weights: w[..d].to_vec(),
        bias,
        feature_centers: centers,
        feature_scales: scales,
        converged,
        underdetermined: false,
    };
    Ok(SvrFit {
        model,
        objective_trace: trace,
        sweeps,
    })
}
