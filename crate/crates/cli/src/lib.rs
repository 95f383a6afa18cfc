//! Batch driver around the `epibench` forecasting benchmark: configuration
//! parsing, grid execution over a worker pool, and report generation. The
//! `epibench` binary is a thin argument parser over this library so the
//! whole pipeline stays testable in-process.

pub mod config;
pub mod ingest;
pub mod report;
pub mod runner;
