//! Row-major matrix storage and the three products the network actually
//! performs: row-vector × matrix, row-vector × matrixᵀ, and a rank-one
//! outer-product accumulation for weight gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Tensor { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} tensor needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(pos) => Err(Error::NonFinite {
                context: context.to_string(),
                step: pos,
            }),
        }
    }
}

impl std::ops::Index<(usize, usize)> for Tensor {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Tensor {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// `x · m` for a row vector `x` of length `m.rows()`.
pub fn vec_mat(x: &[f64], m: &Tensor) -> Vec<f64> {
    assert_eq!(x.len(), m.rows, "vec_mat shape mismatch");
    let mut out = vec![0.0; m.cols];
    for (r, &xr) in x.iter().enumerate() {
        let row = m.row(r);
        for (o, &w) in out.iter_mut().zip(row) {
            *o += xr * w;
        }
    }
    out
}

/// `x · mᵀ` for a row vector `x` of length `m.cols()`.
pub fn vec_mat_transpose(x: &[f64], m: &Tensor) -> Vec<f64> {
    assert_eq!(x.len(), m.cols, "vec_mat_transpose shape mismatch");
    let mut out = vec![0.0; m.rows];
    for (r, o) in out.iter_mut().enumerate() {
        let row = m.row(r);
        *o = row.iter().zip(x).map(|(w, v)| w * v).sum();
    }
    out
}

/// `m += a ⊗ b`, the gradient update shape for kernels applied as `a · m`.
pub fn outer_add(m: &mut Tensor, a: &[f64], b: &[f64]) {
    assert_eq!(a.len(), m.rows, "outer_add row mismatch");
    assert_eq!(b.len(), m.cols, "outer_add col mismatch");
    for (r, &av) in a.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        let row = &mut m.data[r * m.cols..(r + 1) * m.cols];
        for (w, &bv) in row.iter_mut().zip(b) {
            *w += av * bv;
        }
    }
}
