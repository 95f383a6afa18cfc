//! LSTM layer: gate order (input, forget, cell, output), sigmoid gates with
//! tanh candidate/output nonlinearities, input-connection dropout, and
//! backpropagation through time.
//!
//! Kernels are applied as `x · K`: the input kernel is (input_dim × 4·units)
//! and the recurrent kernel (units × 4·units), with one contiguous column
//! block per gate. Dropout draws four masks per sample — one per gate — held
//! constant across timesteps and scaled by 1/(1−rate) so inference needs no
//! rescaling.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::dense::glorot_uniform;
use crate::nn::tensor::{outer_add, vec_mat, vec_mat_transpose, Tensor};

pub const GATES: usize = 4;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub units: usize,
    /// (input_dim × 4·units); column blocks ordered (i, f, g, o).
    pub input_kernel: Tensor,
    /// (units × 4·units); same block order.
    pub recurrent_kernel: Tensor,
    /// 4·units; forget segment starts at 1.0.
    pub bias: Vec<f64>,
    pub input_dropout_rate: f64,
}

/// One 1/(1−rate)-scaled keep mask per gate, fixed for a whole sequence.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    pub per_gate: [Vec<f64>; 4],
}

impl DropoutMasks {
    pub fn ones(input_dim: usize) -> Self {
        DropoutMasks {
            per_gate: std::array::from_fn(|_| vec![1.0; input_dim]),
        }
    }

    pub fn draw(rate: f64, input_dim: usize, rng: &mut impl Rng) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate {rate} outside [0,1)");
        if rate == 0.0 {
            return DropoutMasks::ones(input_dim);
        }
        let scale = 1.0 / (1.0 - rate);
        DropoutMasks {
            per_gate: std::array::from_fn(|_| {
                (0..input_dim)
                    .map(|_| if rng.gen_bool(rate) { 0.0 } else { scale })
                    .collect()
            }),
        }
    }
}

/// Per-timestep activations kept for the backward pass.
#[derive(Debug, Clone)]
struct StepCache {
    masked: [Vec<f64>; 4],
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<StepCache>,
    masks: DropoutMasks,
    pub final_h: Vec<f64>,
    pub final_c: Vec<f64>,
    input_dim: usize,
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub input_kernel: Tensor,
    pub recurrent_kernel: Tensor,
    pub bias: Vec<f64>,
}

/// `out[j] += Σ_i x[i] · kernel[(i, gate·units + j)]` over one gate block.
fn gate_forward(x: &[f64], kernel: &Tensor, gate: usize, units: usize, out: &mut [f64]) {
    let offset = gate * units;
    for (r, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let row = &kernel.row(r)[offset..offset + units];
        for (o, &k) in out.iter_mut().zip(row) {
            *o += xv * k;
        }
    }
}

/// `kernel[(i, gate·units + j)] += x[i] · d_pre[j]` over one gate block.
fn gate_outer_add(kernel: &mut Tensor, gate: usize, units: usize, x: &[f64], d_pre: &[f64]) {
    let offset = gate * units;
    let cols = kernel.cols();
    let data = kernel.as_mut_slice();
    for (r, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let row = &mut data[r * cols + offset..r * cols + offset + units];
        for (k, &d) in row.iter_mut().zip(d_pre) {
            *k += xv * d;
        }
    }
}

/// `out[i] += Σ_j d_pre[j] · kernel[(i, gate·units + j)]` over one gate block.
fn gate_input_grad(d_pre: &[f64], kernel: &Tensor, gate: usize, units: usize, out: &mut [f64]) {
    let offset = gate * units;
    for (r, o) in out.iter_mut().enumerate() {
        let row = &kernel.row(r)[offset..offset + units];
        *o += row.iter().zip(d_pre).map(|(k, d)| k * d).sum::<f64>();
    }
}

/// Random orthogonal matrix: QR of a standard-normal draw with the signs of
/// R's diagonal folded into Q so the factorization is unique.
fn random_orthogonal(units: usize, rng: &mut impl Rng) -> nalgebra::DMatrix<f64> {
    let a = nalgebra::DMatrix::<f64>::from_fn(units, units, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..units {
        if r[(j, j)] < 0.0 {
            for i in 0..units {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

impl LstmLayer {
    /// Fan-based uniform input kernel, per-gate orthogonal recurrent blocks,
    /// zero biases except the forget segment at 1.0.
    pub fn new(input_dim: usize, units: usize, input_dropout_rate: f64, rng: &mut impl Rng) -> Self {
        assert!(input_dim > 0 && units > 0, "empty LSTM layer");
        assert!(
            (0.0..1.0).contains(&input_dropout_rate),
            "dropout rate {input_dropout_rate} outside [0,1)"
        );
        let input_kernel = Tensor::from_fn(input_dim, GATES * units, |_, _| {
            glorot_uniform(rng, input_dim, GATES * units)
        });
        let mut recurrent_kernel = Tensor::zeros(units, GATES * units);
        for gate in 0..GATES {
            let q = random_orthogonal(units, rng);
            for r in 0..units {
                for c in 0..units {
                    recurrent_kernel[(r, gate * units + c)] = q[(r, c)];
                }
            }
        }
        let mut bias = vec![0.0; GATES * units];
        bias[units..2 * units].fill(1.0);
        LstmLayer {
            units,
            input_kernel,
            recurrent_kernel,
            bias,
            input_dropout_rate,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_kernel.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let u = self.units;
        if self.input_kernel.cols() != GATES * u
            || self.recurrent_kernel.rows() != u
            || self.recurrent_kernel.cols() != GATES * u
            || self.bias.len() != GATES * u
        {
            return Err(Error::Shape(format!(
                "LSTM shapes inconsistent for {u} units: input {}x{}, recurrent {}x{}, bias {}",
                self.input_kernel.rows(),
                self.input_kernel.cols(),
                self.recurrent_kernel.rows(),
                self.recurrent_kernel.cols(),
                self.bias.len()
            )));
        }
        if !(0.0..1.0).contains(&self.input_dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0,1)",
                self.input_dropout_rate
            )));
        }
        self.input_kernel.check_finite("LSTM input kernel")?;
        self.recurrent_kernel.check_finite("LSTM recurrent kernel")?;
        if let Some(pos) = self.bias.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "LSTM bias".into(),
                step: pos,
            });
        }
        Ok(())
    }

    /// Runs the recursion from zero states over `sequence` (lag × input_dim).
    pub fn forward(&self, sequence: &Tensor, masks: &DropoutMasks) -> LstmCache {
        let zeros = vec![0.0; self.units];
        self.forward_from(sequence, masks, &zeros, &zeros)
    }

    pub fn forward_from(
        &self,
        sequence: &Tensor,
        masks: &DropoutMasks,
        h0: &[f64],
        c0: &[f64],
    ) -> LstmCache {
        let u = self.units;
        assert_eq!(sequence.cols(), self.input_dim(), "LSTM input width mismatch");
        assert_eq!(h0.len(), u, "h0 length mismatch");
        assert_eq!(c0.len(), u, "c0 length mismatch");

        let mut h = h0.to_vec();
        let mut c = c0.to_vec();
        let mut steps = Vec::with_capacity(sequence.rows());
        for t in 0..sequence.rows() {
            let x = sequence.row(t);
            let masked: [Vec<f64>; 4] = std::array::from_fn(|gate| {
                x.iter()
                    .zip(&masks.per_gate[gate])
                    .map(|(v, m)| v * m)
                    .collect()
            });

            let recurrent = vec_mat(&h, &self.recurrent_kernel);
            let mut pre: [Vec<f64>; 4] = std::array::from_fn(|gate| {
                let mut p: Vec<f64> = self.bias[gate * u..(gate + 1) * u].to_vec();
                for (pv, rv) in p.iter_mut().zip(&recurrent[gate * u..(gate + 1) * u]) {
                    *pv += rv;
                }
                p
            });
            for gate in 0..GATES {
                gate_forward(&masked[gate], &self.input_kernel, gate, u, &mut pre[gate]);
            }

            let i: Vec<f64> = pre[0].iter().map(|&v| sigmoid(v)).collect();
            let f: Vec<f64> = pre[1].iter().map(|&v| sigmoid(v)).collect();
            let g: Vec<f64> = pre[2].iter().map(|&v| v.tanh()).collect();
            let o: Vec<f64> = pre[3].iter().map(|&v| sigmoid(v)).collect();

            let c_prev = c.clone();
            for j in 0..u {
                c[j] = f[j] * c_prev[j] + i[j] * g[j];
            }
            let tanh_c: Vec<f64> = c.iter().map(|&v| v.tanh()).collect();
            let h_prev = h.clone();
            for j in 0..u {
                h[j] = o[j] * tanh_c[j];
            }

            steps.push(StepCache {
                masked,
                h_prev,
                c_prev,
                i,
                f,
                g,
                o,
                tanh_c,
            });
        }
        LstmCache {
            steps,
            masks: masks.clone(),
            final_h: h,
            final_c: c,
            input_dim: self.input_dim(),
        }
    }

    pub fn zero_grads(&self) -> LstmGrads {
        LstmGrads {
            input_kernel: Tensor::zeros(self.input_kernel.rows(), self.input_kernel.cols()),
            recurrent_kernel: Tensor::zeros(self.recurrent_kernel.rows(), self.recurrent_kernel.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    /// BPTT from a gradient on the final hidden state. Parameter gradients
    /// accumulate into `grads`; the return value is the gradient with respect
    /// to the (pre-dropout) input sequence.
    pub fn backward(&self, cache: &LstmCache, d_final_h: &[f64], grads: &mut LstmGrads) -> Tensor {
        let u = self.units;
        assert_eq!(d_final_h.len(), u, "output gradient length mismatch");
        let mut d_inputs = Tensor::zeros(cache.steps.len(), cache.input_dim);
        let mut d_h = d_final_h.to_vec();
        let mut d_c = vec![0.0; u];

        for (t, step) in cache.steps.iter().enumerate().rev() {
            let mut d_o = vec![0.0; u];
            for j in 0..u {
                d_o[j] = d_h[j] * step.tanh_c[j];
                d_c[j] += d_h[j] * step.o[j] * (1.0 - step.tanh_c[j] * step.tanh_c[j]);
            }
            let mut d_pre = vec![0.0; GATES * u];
            for j in 0..u {
                let (i, f, g, o) = (step.i[j], step.f[j], step.g[j], step.o[j]);
                d_pre[j] = d_c[j] * g * i * (1.0 - i);
                d_pre[u + j] = d_c[j] * step.c_prev[j] * f * (1.0 - f);
                d_pre[2 * u + j] = d_c[j] * i * (1.0 - g * g);
                d_pre[3 * u + j] = d_o[j] * o * (1.0 - o);
            }

            for (b, d) in grads.bias.iter_mut().zip(&d_pre) {
                *b += d;
            }
            outer_add(&mut grads.recurrent_kernel, &step.h_prev, &d_pre);
            for gate in 0..GATES {
                gate_outer_add(
                    &mut grads.input_kernel,
                    gate,
                    u,
                    &step.masked[gate],
                    &d_pre[gate * u..(gate + 1) * u],
                );
            }

            // input gradient: back through each gate block, then the mask
            let mut d_x_masked = vec![0.0; cache.input_dim];
            let d_x_row = {
                let mut row = vec![0.0; cache.input_dim];
                for gate in 0..GATES {
                    d_x_masked.fill(0.0);
                    gate_input_grad(
                        &d_pre[gate * u..(gate + 1) * u],
                        &self.input_kernel,
                        gate,
                        u,
                        &mut d_x_masked,
                    );
                    for (r, (d, m)) in row
                        .iter_mut()
                        .zip(d_x_masked.iter().zip(&cache.masks.per_gate[gate]))
                    {
                        *r += d * m;
                    }
                }
                row
            };
            for (c, v) in d_x_row.iter().enumerate() {
                d_inputs[(t, c)] = *v;
            }

            d_h = vec_mat_transpose(&d_pre, &self.recurrent_kernel);
            for j in 0..u {
                d_c[j] *= step.f[j];
            }
        }
        d_inputs
    }
}
