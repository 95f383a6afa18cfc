//! Core library for a Covid-19 case-forecasting benchmark.
//!
//! The benchmark compares forecasters that all answer the same question:
//! given a region's daily confirmed cases per 100 000 inhabitants up to an
//! anchor day, how many new cases will the next `fh` days bring in total
//! (`fh` ∈ {14, 28, 42})? Models are scored by MAPE under cumulative
//! time-series cross-validation with five expanding folds.
//!
//! Modules:
//!
//! * [`data`] — region series, per-100k normalization, target/sum series,
//!   lag windows, CSV ingest.
//! * [`folds`] — date ranges, the cumulative fold plan, validation tails.
//! * [`models`] — persistence baselines, damped exponential smoothing with
//!   Box-Cox, OLS, and linear SVR.
//! * [`nn`] — LSTM engine and the NN1/NN2 architectures.
//! * [`eval`] — MAPE scoring, aggregation, and the CSV result formats.
//!
//! Everything is deterministic under fixed seeds; all randomness flows
//! through explicitly seeded ChaCha generators.

pub mod data;
pub mod error;
pub mod eval;
pub mod folds;
pub mod models;
pub mod nn;

pub use error::{Error, Result};
