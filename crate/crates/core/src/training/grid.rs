//! Hyperparameter grid search: every candidate trains with the same seed and
//! a reduced epoch budget, candidates run independently (in parallel when the
//! `parallel` feature is on), and results merge deterministically.

use serde::{Deserialize, Serialize};

use super::{train, TrainConfig, TrainError};
use crate::data::TimeSeriesDataset;
use crate::model::ModelConfig;
use crate::parallel;

/// Width lists for one architecture candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub shared: Vec<usize>,
    pub deterministic: Vec<usize>,
    pub stochastic: Vec<usize>,
}

/// Candidate lists; the Cartesian product is enumerated in declaration order
/// (architectures outermost, window lengths innermost).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub architectures: Vec<Architecture>,
    pub smoothness_weights: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub window_lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCandidate {
    pub index: usize,
    pub architecture: Architecture,
    pub smoothness_weight: f64,
    pub learning_rate: f64,
    pub window_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub candidate: GridCandidate,
    pub param_count: usize,
    /// Final validation total; `None` when the candidate failed.
    pub final_validation_total: Option<f64>,
    pub error: Option<String>,
}

fn enumerate(grid: &GridSpec) -> Vec<GridCandidate> {
    let mut out = Vec::new();
    for arch in &grid.architectures {
        for &sw in &grid.smoothness_weights {
            for &lr in &grid.learning_rates {
                for &wl in &grid.window_lengths {
                    out.push(GridCandidate {
                        index: out.len(),
                        architecture: arch.clone(),
                        smoothness_weight: sw,
                        learning_rate: lr,
                        window_length: wl,
                    });
                }
            }
        }
    }
    out
}

/// Trains every candidate with the shared seed and `budget_epochs`, then
/// ranks by final validation total. Ties break toward the smaller parameter
/// count, then enumeration order; failed candidates rank last with their
/// error recorded.
pub fn grid_search(
    grid: &GridSpec,
    base_model: &ModelConfig,
    base_train: &TrainConfig,
    budget_epochs: usize,
    dataset: &TimeSeriesDataset,
) -> Result<Vec<CandidateOutcome>, TrainError> {
    let candidates = enumerate(grid);
    if candidates.is_empty() {
        return Err(TrainError::EmptyGrid);
    }

    let outcomes: Vec<CandidateOutcome> = parallel::map_indexed(candidates.len(), |i| {
        let candidate = candidates[i].clone();
        let model_config = ModelConfig {
            input_dim: base_model.input_dim,
            shared_widths: candidate.architecture.shared.clone(),
            deterministic_widths: candidate.architecture.deterministic.clone(),
            stochastic_widths: candidate.architecture.stochastic.clone(),
            seed: base_model.seed,
        };
        let mut train_config = base_train.clone();
        train_config.epochs = budget_epochs;
        train_config.learning_rate = candidate.learning_rate;
        train_config.window_length = candidate.window_length;
        train_config.weights.smoothness = candidate.smoothness_weight;

        let param_count = match model_config.validate() {
            Ok(()) => model_config.param_count(),
            Err(_) => usize::MAX,
        };
        match train(&model_config, &train_config, dataset) {
            Ok((_, curve)) => CandidateOutcome {
                candidate,
                param_count,
                final_validation_total: curve.final_validation_total(),
                error: None,
            },
            Err(e) => CandidateOutcome {
                candidate,
                param_count,
                final_validation_total: None,
                error: Some(e.to_string()),
            },
        }
    });

    let mut ranked = outcomes;
    ranked.sort_by(|a, b| {
        let score = |o: &CandidateOutcome| o.final_validation_total.unwrap_or(f64::INFINITY);
        score(a)
            .total_cmp(&score(b))
            .then(a.param_count.cmp(&b.param_count))
            .then(a.candidate.index.cmp(&b.candidate.index))
    });
    Ok(ranked)
}
