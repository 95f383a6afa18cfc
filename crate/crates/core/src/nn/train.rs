//! Minibatch Adam training with epoch-end early stopping.
//!
//! Each epoch shuffles the training set (seeded), draws fresh input-dropout
//! masks per sample, averages gradients over the batch, and takes one Adam
//! step per batch. Validation loss is measured after every epoch with
//! dropout off; the best-validation weights are kept and restored when the
//! run stops — either at `max_epochs` or once validation has not improved
//! for `patience` consecutive epochs.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::nn::adam::Adam;
use crate::nn::loss::Loss;
use crate::nn::lstm::DropoutMasks;
use crate::nn::network::{LstmNetwork, NnArchitecture, NnKind};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub loss: Loss,
    pub seed: u64,
}

impl TrainConfig {
    /// Benchmark defaults; the loss follows the architecture (MSE for NN1,
    /// MAE for NN2).
    pub fn for_kind(kind: NnKind, seed: u64) -> Self {
        TrainConfig {
            batch_size: 200,
            learning_rate: 0.003,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            max_epochs: 1000,
            patience: 100,
            loss: match kind {
                NnKind::Nn1 => Loss::Mse,
                NnKind::Nn2 => Loss::Mae,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("batch size, epochs, patience must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Config("learning rate and epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One line of the loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Running mean of batch losses, measured with dropout active.
    pub train_loss: f64,
    /// Mean loss over the validation set, dropout off.
    pub val_loss: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// The network at its best-validation epoch.
    pub network: LstmNetwork,
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were restored (0 = never improved on the
    /// untrained network, which keeps its initial weights).
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

fn check_samples(network: &LstmNetwork, samples: &[WindowSample], what: &str) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Config(format!("empty {what} set")));
    }
    for s in samples {
        if s.inputs.len() != network.input_len() {
            return Err(Error::Shape(format!(
                "{what} window for {} has {} values, network takes {}",
                s.region_id,
                s.inputs.len(),
                network.input_len()
            )));
        }
        if s.target.len() != network.output_dim() {
            return Err(Error::Shape(format!(
                "{what} target for {} has {} values, network emits {}",
                s.region_id,
                s.target.len(),
                network.output_dim()
            )));
        }
    }
    Ok(())
}

/// Builds a fresh seeded network for `arch` and trains it.
pub fn train_network(
    arch: NnArchitecture,
    train_samples: &[WindowSample],
    val_samples: &[WindowSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let network = LstmNetwork::build(arch, &mut rng);
    train_with(network, train_samples, val_samples, config, &mut rng)
}

/// Trains an existing network (used by probe tests and resumed runs).
pub fn train(
    network: LstmNetwork,
    train_samples: &[WindowSample],
    val_samples: &[WindowSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    train_with(network, train_samples, val_samples, config, &mut rng)
}

fn train_with(
    mut network: LstmNetwork,
    train_samples: &[WindowSample],
    val_samples: &[WindowSample],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    config.validate()?;
    network.validate()?;
    check_samples(&network, train_samples, "training")?;
    check_samples(&network, val_samples, "validation")?;

    let dropout = network.dropout_rate();
    let mask_dim = network.mask_dim();
    let n = train_samples.len();
    let mut flat = network.flat_params();
    let mut adam = Adam::new(
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
        flat.len(),
    );

    let mut history: Vec<EpochRecord> = Vec::new();
    let mut best_flat = flat.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut wait = 0;
    let mut stopped_epoch = config.max_epochs;
    let mut indices: Vec<usize> = (0..n).collect();

    for epoch in 1..=config.max_epochs {
        indices.shuffle(rng);
        let mut loss_sum = 0.0;
        for batch in indices.chunks(config.batch_size) {
            let mut grad_sum = vec![0.0; flat.len()];
            for &idx in batch {
                let sample = &train_samples[idx];
                let masks = if dropout > 0.0 {
                    DropoutMasks::draw(dropout, mask_dim, rng)
                } else {
                    DropoutMasks::ones(mask_dim)
                };
                let (out, cache) = network.forward(&sample.inputs, &masks);
                loss_sum += config.loss.value(&out, &sample.target);
                let d_out = config.loss.gradient(&out, &sample.target);
                let grads = network.backward(&cache, &d_out).flatten();
                for (g, s) in grad_sum.iter_mut().zip(&grads) {
                    *g += s;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grad_sum {
                *g *= scale;
            }
            adam.step(&mut flat, &grad_sum);
            network.set_flat_params(&flat)?;
        }
        let train_loss = loss_sum / n as f64;

        let masks = DropoutMasks::ones(mask_dim);
        let val_loss = val_samples
            .iter()
            .map(|s| config.loss.value(&network.forward(&s.inputs, &masks).0, &s.target))
            .sum::<f64>()
            / val_samples.len() as f64;

        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, history });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });

        if val_loss < best_val {
            best_val = val_loss;
            best_flat.copy_from_slice(&flat);
            best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait == config.patience {
                stopped_epoch = epoch;
                break;
            }
        }
    }

    network.set_flat_params(&best_flat)?;
    Ok(TrainOutcome {
        network,
        history,
        best_epoch,
        stopped_epoch,
    })
}

/// Loss history as `epoch,train_loss,val_loss`.
pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(Error::from)?;
    writer.write_record(["epoch", "train_loss", "val_loss"])?;
    for r in history {
        writer.write_record([
            r.epoch.to_string(),
            format!("{}", r.train_loss),
            format!("{}", r.val_loss),
        ])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
