//! The two sequence architectures and their prediction conventions.
//!
//! Both read a 28-day window of per-100k daily counts divided by 1000 and
//! produce scaled outputs that are multiplied back by 1000:
//!
//! * NN1 — LSTM(fh units) → dense tanh(fh) → one linear neuron; the output is
//!   the fh-day total.
//! * NN2 — a single LSTM whose fh units are read, at the last timestep, as
//!   the fh daily predictions; the total is their sum.
//!
//! Parameters are also exposed as one flat vector so the optimizer, the
//! finite-difference checks, and checkpointing all share a single layout.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::dense::{Activation, DenseCache, DenseGrads, DenseLayer};
use crate::nn::lstm::{DropoutMasks, LstmCache, LstmGrads, LstmLayer};
use crate::nn::tensor::Tensor;

/// Inputs and targets are divided by this before training; outputs multiply
/// it back.
pub const NN_SCALE: f64 = 1000.0;
/// Days of history in every input window.
pub const DEFAULT_LAG: usize = 28;
/// LSTM input-connection dropout for NN1; NN2 trains without dropout.
pub const NN1_DROPOUT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NnKind {
    Nn1,
    Nn2,
}

impl NnKind {
    pub fn name(self) -> &'static str {
        match self {
            NnKind::Nn1 => "nn1",
            NnKind::Nn2 => "nn2",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "nn1" => Some(NnKind::Nn1),
            "nn2" => Some(NnKind::Nn2),
            _ => None,
        }
    }

    pub fn dropout_rate(self) -> f64 {
        match self {
            NnKind::Nn1 => NN1_DROPOUT,
            NnKind::Nn2 => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NnArchitecture {
    pub kind: NnKind,
    pub horizon: usize,
    pub lag: usize,
}

impl NnArchitecture {
    pub fn new(kind: NnKind, horizon: usize) -> Self {
        assert!(horizon > 0, "zero horizon");
        NnArchitecture {
            kind,
            horizon,
            lag: DEFAULT_LAG,
        }
    }

    /// Length of a training target: the scaled total for NN1, the scaled
    /// daily vector for NN2.
    pub fn target_dim(&self) -> usize {
        match self.kind {
            NnKind::Nn1 => 1,
            NnKind::Nn2 => self.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNetwork {
    pub arch: NnArchitecture,
    /// Absent only in the linear probe used to test the training loop.
    pub lstm: Option<LstmLayer>,
    pub dense: Vec<DenseLayer>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    lstm: Option<LstmCache>,
    dense: Vec<DenseCache>,
}

#[derive(Debug, Clone)]
pub struct NetGrads {
    pub lstm: Option<LstmGrads>,
    pub dense: Vec<DenseGrads>,
}

impl NetGrads {
    /// Same layout as [`LstmNetwork::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        if let Some(l) = &self.lstm {
            flat.extend_from_slice(l.input_kernel.as_slice());
            flat.extend_from_slice(l.recurrent_kernel.as_slice());
            flat.extend_from_slice(&l.bias);
        }
        for d in &self.dense {
            flat.extend_from_slice(d.kernel.as_slice());
            flat.extend_from_slice(&d.bias);
        }
        flat
    }
}

impl LstmNetwork {
    /// Seeded initialization: LSTM first, dense layers in order, so one RNG
    /// yields a reproducible network.
    pub fn build(arch: NnArchitecture, rng: &mut impl Rng) -> Self {
        let fh = arch.horizon;
        let (lstm, dense) = match arch.kind {
            NnKind::Nn1 => (
                LstmLayer::new(1, fh, NN1_DROPOUT, rng),
                vec![
                    DenseLayer::glorot(fh, fh, Activation::Tanh, rng),
                    DenseLayer::glorot(fh, 1, Activation::Linear, rng),
                ],
            ),
            NnKind::Nn2 => (LstmLayer::new(1, fh, 0.0, rng), vec![]),
        };
        LstmNetwork {
            arch,
            lstm: Some(lstm),
            dense,
        }
    }

    /// A zero-initialized affine model run through the same training loop;
    /// exists so convex-probe tests can observe the loop in isolation.
    pub fn linear_probe(input_dim: usize) -> Self {
        LstmNetwork {
            arch: NnArchitecture {
                kind: NnKind::Nn1,
                horizon: 1,
                lag: input_dim,
            },
            lstm: None,
            dense: vec![DenseLayer::zeros(input_dim, 1, Activation::Linear)],
        }
    }

    /// Flat length of one input window.
    pub fn input_len(&self) -> usize {
        match &self.lstm {
            Some(l) => self.arch.lag * l.input_dim(),
            None => self.dense[0].input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.dense.last() {
            Some(d) => d.output_dim(),
            None => self.lstm.as_ref().map_or(0, |l| l.units),
        }
    }

    pub fn dropout_rate(&self) -> f64 {
        self.lstm.as_ref().map_or(0.0, |l| l.input_dropout_rate)
    }

    /// Width the dropout masks must have.
    pub fn mask_dim(&self) -> usize {
        self.lstm.as_ref().map_or(1, |l| l.input_dim())
    }

    pub fn validate(&self) -> Result<()> {
        if self.lstm.is_none() && self.dense.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        let mut width = None;
        if let Some(l) = &self.lstm {
            l.validate()?;
            width = Some(l.units);
        }
        for d in &self.dense {
            d.validate()?;
            if let Some(w) = width {
                if d.input_dim() != w {
                    return Err(Error::Shape(format!(
                        "dense layer expects {} inputs, previous layer emits {w}",
                        d.input_dim()
                    )));
                }
            }
            width = Some(d.output_dim());
        }
        if self.output_dim() != self.arch.target_dim() {
            return Err(Error::Shape(format!(
                "{} outputs {} values, targets have {}",
                self.arch.kind.name(),
                self.output_dim(),
                self.arch.target_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, inputs: &[f64], masks: &DropoutMasks) -> (Vec<f64>, ForwardCache) {
        assert_eq!(inputs.len(), self.input_len(), "input window length mismatch");
        let (mut current, lstm_cache) = match &self.lstm {
            Some(layer) => {
                let seq =
                    Tensor::from_vec(self.arch.lag, layer.input_dim(), inputs.to_vec()).unwrap();
                let cache = layer.forward(&seq, masks);
                (cache.final_h.clone(), Some(cache))
            }
            None => (inputs.to_vec(), None),
        };
        let mut dense_caches = Vec::with_capacity(self.dense.len());
        for layer in &self.dense {
            let cache = layer.forward(&current);
            current = cache.output.clone();
            dense_caches.push(cache);
        }
        (
            current,
            ForwardCache {
                lstm: lstm_cache,
                dense: dense_caches,
            },
        )
    }

    /// Inference pass: no dropout.
    pub fn infer(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        if inputs.len() != self.input_len() {
            return Err(Error::Shape(format!(
                "expected a window of {} values, got {}",
                self.input_len(),
                inputs.len()
            )));
        }
        Ok(self.forward(inputs, &DropoutMasks::ones(self.mask_dim())).0)
    }

    pub fn zero_grads(&self) -> NetGrads {
        NetGrads {
            lstm: self.lstm.as_ref().map(|l| l.zero_grads()),
            dense: self.dense.iter().map(|d| d.zero_grads()).collect(),
        }
    }

    /// Gradients of `<d_output, output>`'s generalization: backpropagates an
    /// arbitrary output gradient through dense layers and the LSTM.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64]) -> NetGrads {
        let mut grads = self.zero_grads();
        let mut d = d_output.to_vec();
        for idx in (0..self.dense.len()).rev() {
            d = self.dense[idx].backward(&cache.dense[idx], &d, &mut grads.dense[idx]);
        }
        if let (Some(layer), Some(lstm_cache), Some(lstm_grads)) =
            (&self.lstm, &cache.lstm, grads.lstm.as_mut())
        {
            layer.backward(lstm_cache, &d, lstm_grads);
        }
        grads
    }

    pub fn param_count(&self) -> usize {
        let mut count = 0;
        if let Some(l) = &self.lstm {
            count += l.input_kernel.as_slice().len()
                + l.recurrent_kernel.as_slice().len()
                + l.bias.len();
        }
        for d in &self.dense {
            count += d.kernel.as_slice().len() + d.bias.len();
        }
        count
    }

    /// Layout: LSTM input kernel, recurrent kernel, bias (all row-major),
    /// then each dense kernel and bias in layer order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        if let Some(l) = &self.lstm {
            flat.extend_from_slice(l.input_kernel.as_slice());
            flat.extend_from_slice(l.recurrent_kernel.as_slice());
            flat.extend_from_slice(&l.bias);
        }
        for d in &self.dense {
            flat.extend_from_slice(d.kernel.as_slice());
            flat.extend_from_slice(&d.bias);
        }
        flat
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[offset..offset + dst.len()]);
            offset += dst.len();
        };
        if let Some(l) = &mut self.lstm {
            take(l.input_kernel.as_mut_slice());
            take(l.recurrent_kernel.as_mut_slice());
            take(&mut l.bias);
        }
        for d in &mut self.dense {
            take(d.kernel.as_mut_slice());
            take(&mut d.bias);
        }
        Ok(())
    }

    /// JSON checkpoint: shapes and parameters round-trip exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::Config(format!("checkpoint serialization failed: {e}")))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let network: LstmNetwork = serde_json::from_str(&json)
            .map_err(|e| Error::Config(format!("bad checkpoint {}: {e}", path.display())))?;
        network.validate()?;
        Ok(network)
    }
}

/// NN1's forecast: the single output × 1000, floored at zero.
pub fn predict_nn1(network: &LstmNetwork, window: &[f64]) -> Result<f64> {
    if network.arch.kind != NnKind::Nn1 {
        return Err(Error::Config("predict_nn1 called on a non-NN1 network".into()));
    }
    let out = network.infer(window)?;
    Ok((out[0] * NN_SCALE).max(0.0))
}

/// NN2's forecast: per-unit daily values plus their total.
#[derive(Debug, Clone, PartialEq)]
pub struct Nn2Prediction {
    pub daily: Vec<f64>,
    /// Sum of `daily`, floored at zero.
    pub total: f64,
}

pub fn predict_nn2(network: &LstmNetwork, window: &[f64]) -> Result<Nn2Prediction> {
    if network.arch.kind != NnKind::Nn2 {
        return Err(Error::Config("predict_nn2 called on a non-NN2 network".into()));
    }
    let out = network.infer(window)?;
    let daily: Vec<f64> = out.iter().map(|v| v * NN_SCALE).collect();
    let total = daily.iter().sum::<f64>().max(0.0);
    Ok(Nn2Prediction { daily, total })
}

/// Forecast total for either architecture.
pub fn predict_total(network: &LstmNetwork, window: &[f64]) -> Result<f64> {
    match network.arch.kind {
        NnKind::Nn1 => predict_nn1(network, window),
        NnKind::Nn2 => Ok(predict_nn2(network, window)?.total),
    }
}
