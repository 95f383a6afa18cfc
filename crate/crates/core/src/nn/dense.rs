//! Fully connected layer with the two activations the architectures use.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::{outer_add, vec_mat, vec_mat_transpose, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Linear => v,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// (input_dim × output_dim), applied as `x · kernel + bias`.
    pub kernel: Tensor,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Per-sample activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

/// Gradients with the same shapes as the layer parameters.
#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub kernel: Tensor,
    pub bias: Vec<f64>,
}

/// Uniform bounds from fan-in/fan-out: `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> f64 {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    rng.gen_range(-limit..limit)
}

impl DenseLayer {
    pub fn glorot(input_dim: usize, output_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        DenseLayer {
            kernel: Tensor::from_fn(input_dim, output_dim, |_, _| {
                glorot_uniform(rng, input_dim, output_dim)
            }),
            bias: vec![0.0; output_dim],
            activation,
        }
    }

    pub fn zeros(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            kernel: Tensor::zeros(input_dim, output_dim),
            bias: vec![0.0; output_dim],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.kernel.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.kernel.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bias.len() != self.kernel.cols() {
            return Err(Error::Shape(format!(
                "dense bias length {} does not match {} outputs",
                self.bias.len(),
                self.kernel.cols()
            )));
        }
        self.kernel.check_finite("dense kernel")?;
        if let Some(pos) = self.bias.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dense bias".into(),
                step: pos,
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> DenseCache {
        let mut output = vec_mat(input, &self.kernel);
        for (o, b) in output.iter_mut().zip(&self.bias) {
            *o = self.activation.apply(*o + b);
        }
        DenseCache {
            input: input.to_vec(),
            output,
        }
    }

    /// Accumulates parameter gradients into `grads`, returns the input gradient.
    pub fn backward(&self, cache: &DenseCache, d_output: &[f64], grads: &mut DenseGrads) -> Vec<f64> {
        let d_pre: Vec<f64> = d_output
            .iter()
            .zip(&cache.output)
            .map(|(d, o)| d * self.activation.derivative_from_output(*o))
            .collect();
        outer_add(&mut grads.kernel, &cache.input, &d_pre);
        for (g, d) in grads.bias.iter_mut().zip(&d_pre) {
            *g += d;
        }
        vec_mat_transpose(&d_pre, &self.kernel)
    }

    pub fn zero_grads(&self) -> DenseGrads {
        DenseGrads {
            kernel: Tensor::zeros(self.kernel.rows(), self.kernel.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }
}
