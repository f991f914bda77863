//! Quantum GAN anomaly detection for two-feature network time series.
//!
//! - [`qsim`]: statevector and density-matrix circuit simulation.
//! - [`vqc`]: generator/discriminator circuits and parameter-shift gradients.
//! - [`qgan`]: adversarial training, plus a parameter-matched classical GAN.
//! - [`detect`]: anomaly scores, percentile thresholds and metrics.
//! - [`data`]: flow ingestion, aggregation, scaling, windows, Granger tests, synthetic data.
//! - [`pipeline`]: split → scale → window → calibrate → evaluate.
//! - [`model`]: model file persistence.

pub mod data;
pub mod detect;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod qgan;
pub mod qsim;
pub mod vqc;

pub use error::{Error, Result};
