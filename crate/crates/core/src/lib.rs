//! Dual-encoder residual filtering for industrial alarm systems.
//!
//! A measurement vector is split into a deterministic component (a smooth
//! encoder trained to ignore noise) and a stochastic component (a Gaussian
//! encoder trained toward standard normal noise). Alarm decisions run on the
//! deterministic output alone, which suppresses false and missed alarms of
//! plain limit checking. The crate covers the whole pipeline: synthetic data
//! generation and CSV ingestion, training with Adam over contiguous windows,
//! checkpointing, threshold design, FAR/MAR evaluation, and inference-latency
//! measurement.

pub mod alarm;
pub mod data;
pub mod loss;
pub mod model;
pub mod numerics;
pub mod parallel;
pub mod training;

pub use alarm::{AlarmDirection, AlarmReport, LatencyStats, ThresholdRule};
pub use data::{CsvOptions, FaultPreset, GaussianSpec, Scaler, TimeSeriesDataset};
pub use loss::{LossBreakdown, LossWeights};
pub use model::{EncodedBatch, ModelConfig, ModelParams};
pub use numerics::Matrix;
pub use training::{GridSpec, LearningCurve, TrainConfig};
