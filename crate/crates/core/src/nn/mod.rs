//! A small neural forecasting engine: tensors, an LSTM layer with
//! input-connection dropout, dense layers, MSE/MAE losses, Adam, BPTT
//! training with early stopping, and the NN1/NN2 architectures built from
//! those pieces. Everything is f64, CPU-only, and deterministic under a
//! fixed seed.

pub mod adam;
pub mod check;
pub mod dense;
pub mod loss;
pub mod lstm;
pub mod network;
pub mod tensor;
pub mod train;

pub use adam::Adam;
pub use check::{analytic_gradient, max_relative_gap, numeric_gradient};
pub use dense::{Activation, DenseLayer};
pub use loss::Loss;
pub use lstm::{DropoutMasks, LstmLayer};
pub use network::{
    predict_nn1, predict_nn2, predict_total, LstmNetwork, Nn2Prediction, NnArchitecture, NnKind,
    DEFAULT_LAG, NN1_DROPOUT, NN_SCALE,
};
pub use tensor::Tensor;
pub use train::{train, train_network, write_history_csv, EpochRecord, TrainConfig, TrainOutcome};
