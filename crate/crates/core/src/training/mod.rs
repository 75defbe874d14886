//! Seeded minibatch training over contiguous time windows, with validation
//! tracking, early stopping, checkpoint persistence, and grid search.

mod checkpoint;
mod grid;

pub use checkpoint::{load_checkpoint, save_checkpoint, checkpoint_to_string, CheckpointError, CHECKPOINT_FORMAT_VERSION};
pub use grid::{grid_search, Architecture, CandidateOutcome, GridCandidate, GridSpec};

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TimeSeriesDataset;
use crate::loss::{total_loss, total_loss_gradients, LossBreakdown, LossError, LossWeights};
use crate::model::{ModelConfig, ModelError, ModelGrads, ModelParams};
use crate::numerics::{AdamBlock, AdamConfig, AdamState, Matrix};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("window length {window} exceeds the {len} training samples")]
    WindowTooLong { window: usize, len: usize },
    #[error("non-finite loss at epoch {epoch}: {source}")]
    NonFiniteLoss {
        epoch: usize,
        #[source]
        source: LossError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error("grid spec is empty")]
    EmptyGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Contiguous samples per minibatch; the smoothness term needs at least
    /// one transition, so this must be >= 2.
    pub window_length: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    /// Fraction of the series held out as a contiguous validation tail.
    pub validation_fraction: f64,
    pub seed: u64,
    /// Reparameterization draws averaged per gradient step.
    pub mc_samples: usize,
    /// Stop when validation total fails to improve by `early_stop_min_delta`
    /// for this many consecutive epochs. Zero disables early stopping.
    pub early_stop_patience: usize,
    pub early_stop_min_delta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            window_length: 64,
            learning_rate: 0.001,
            weights: LossWeights::default(),
            validation_fraction: 0.2,
            seed: 0,
            mc_samples: 1,
            early_stop_patience: 20,
            early_stop_min_delta: 1e-5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.window_length < 2 {
            return Err(TrainError::InvalidConfig(
                "window_length must be >= 2 (smoothness needs one transition)".into(),
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.mc_samples == 0 {
            return Err(TrainError::InvalidConfig("mc_samples must be >= 1".into()));
        }
        self.weights.validate().map_err(TrainError::InvalidConfig)?;
        Ok(())
    }
}

/// Per-epoch training and validation losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub train: LossBreakdown,
    pub validation: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LearningCurve {
    pub epochs: Vec<EpochStats>,
}

impl LearningCurve {
    pub fn final_validation_total(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.validation.total)
    }
}

/// Non-overlapping contiguous windows covering the training prefix. A short
/// tail that cannot fill a window is dropped.
pub fn plan_windows(train_len: usize, window_length: usize) -> Vec<Range<usize>> {
    (0..train_len / window_length)
        .map(|i| i * window_length..(i + 1) * window_length)
        .collect()
}

// Distinct seed streams derived from the master seed. Splitmix keeps the
// streams decorrelated even for adjacent tags.
fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

const TAG_SHUFFLE: u64 = 1;
const TAG_STEP_NOISE: u64 = 2;
const TAG_TRAIN_EVAL: u64 = 3;
const TAG_VAL_EVAL: u64 = 4;

fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let z: f64 = StandardNormal.sample(&mut rng);
        data.push(z);
    }
    Matrix::from_vec(rows, cols, data).expect("noise shape")
}

fn adam_step_on(
    params: &mut ModelParams,
    grads: &ModelGrads,
    state: &mut AdamState,
) -> Result<(), TrainError> {
    let grad_blocks = grads.blocks();
    let mut param_blocks = params.blocks_mut();
    let mut blocks: Vec<AdamBlock<'_>> = param_blocks
        .iter_mut()
        .zip(grad_blocks)
        .map(|((name, params), grads)| AdamBlock {
            name: name.as_str(),
            params,
            grads,
        })
        .collect();
    state.step(&mut blocks)?;
    Ok(())
}

/// Trains the dual encoder on normal-condition data. Windows are shuffled
/// per epoch, the sample order inside each window is preserved, and the
/// validation tail never enters a gradient step. Fully reproducible given
/// the seed.
pub fn train(
    model_config: &ModelConfig,
    config: &TrainConfig,
    dataset: &TimeSeriesDataset,
) -> Result<(ModelParams, LearningCurve), TrainError> {
    config.validate()?;
    model_config.validate()?;
    if dataset.dim() != model_config.input_dim {
        return Err(ModelError::DimensionMismatch {
            expected: model_config.input_dim,
            got: dataset.dim(),
        }
        .into());
    }

    let total = dataset.len();
    let val_len = ((total as f64) * config.validation_fraction).floor() as usize;
    let train_len = total - val_len;
    if train_len == 0 || val_len == 0 {
        return Err(TrainError::InvalidConfig(format!(
            "validation split {} leaves train={train_len}, validation={val_len}",
            config.validation_fraction
        )));
    }
    if config.window_length > train_len {
        return Err(TrainError::WindowTooLong {
            window: config.window_length,
            len: train_len,
        });
    }

    let train_rows = dataset.values().slice_rows(0, train_len);
    let val_rows = dataset.values().slice_rows(train_len, total);

    let mut params = ModelParams::init(model_config)?;
    let mut curve = LearningCurve::default();
    if config.epochs == 0 {
        return Ok((params, curve));
    }

    let block_sizes: Vec<usize> = params.blocks().iter().map(|(_, b)| b.len()).collect();
    let mut adam = AdamState::new(
        AdamConfig::with_learning_rate(config.learning_rate),
        &block_sizes,
    );

    let dim = model_config.input_dim;
    let train_eval_noise = gaussian_matrix(train_len, dim, derive_seed(config.seed, TAG_TRAIN_EVAL));
    let val_eval_noise = gaussian_matrix(val_len, dim, derive_seed(config.seed, TAG_VAL_EVAL));

    let windows = plan_windows(train_len, config.window_length);
    let mut best_val = f64::INFINITY;
    let mut stale_epochs = 0usize;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..windows.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, TAG_SHUFFLE ^ (epoch as u64) << 8));
        order.shuffle(&mut shuffle_rng);

        for &w in &order {
            let range = windows[w].clone();
            let window_rows = train_rows.slice_rows(range.start, range.end);
            let mut accumulated: Option<ModelGrads> = None;
            for mc in 0..config.mc_samples {
                let noise_seed = derive_seed(
                    config.seed,
                    TAG_STEP_NOISE
                        ^ ((epoch as u64) << 40)
                        ^ ((w as u64) << 16)
                        ^ ((mc as u64) << 4),
                );
                let noise = gaussian_matrix(window_rows.rows(), dim, noise_seed);
                let (grads, _) = total_loss_gradients(&params, &window_rows, &noise, &config.weights)
                    .map_err(|source| TrainError::NonFiniteLoss { epoch, source })?;
                match &mut accumulated {
                    Some(acc) => acc.add_assign(&grads),
                    None => accumulated = Some(grads),
                }
            }
            let mut grads = accumulated.expect("mc_samples >= 1");
            if config.mc_samples > 1 {
                grads.scale(1.0 / config.mc_samples as f64);
            }
            adam_step_on(&mut params, &grads, &mut adam)?;
        }

        // Fixed evaluation noise keeps epoch losses comparable.
        let train_breakdown = evaluate_loss(&params, &train_rows, &train_eval_noise, &config.weights)
            .map_err(|source| TrainError::NonFiniteLoss { epoch, source })?;
        let val_breakdown = evaluate_loss(&params, &val_rows, &val_eval_noise, &config.weights)
            .map_err(|source| TrainError::NonFiniteLoss { epoch, source })?;
        if !val_breakdown.total.is_finite() || !train_breakdown.total.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                source: LossError::NonFiniteGradient { term: "total" },
            });
        }
        curve.epochs.push(EpochStats {
            train: train_breakdown,
            validation: val_breakdown,
        });

        if config.early_stop_patience > 0 {
            if val_breakdown.total < best_val - config.early_stop_min_delta {
                best_val = val_breakdown.total;
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= config.early_stop_patience {
                    break;
                }
            }
        }
    }

    Ok((params, curve))
}

fn evaluate_loss(
    params: &ModelParams,
    rows: &Matrix,
    noise: &Matrix,
    weights: &LossWeights,
) -> Result<LossBreakdown, LossError> {
    let encoded = params.forward_batch(rows, noise)?;
    total_loss(&encoded, rows, weights)
}
