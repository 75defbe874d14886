//! Dense linear algebra, a fixed-topology feed-forward network with exact
//! reverse-mode gradients, and the Adam optimizer.

mod adam;
mod finite_diff;
mod matrix;
mod network;

pub use adam::{AdamBlock, AdamConfig, AdamState};
pub use finite_diff::finite_difference_gradient;
pub use matrix::Matrix;
pub use network::{net_backward, net_forward, Activation, ForwardTrace, LayerGrads, LayerParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix data length {len} does not match {rows}x{cols}")]
    BadShape { rows: usize, cols: usize, len: usize },
    #[error("layer {layer}: expected input of width {expected}, got {got}")]
    LayerInputMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },
    #[error("bias length {bias} does not match weight rows {rows}")]
    BiasMismatch { bias: usize, rows: usize },
    #[error("trace does not match network: {0}")]
    StaleTrace(String),
    #[error("non-finite value produced at layer {layer}")]
    NonFiniteOutput { layer: usize },
    #[error("non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },
    #[error("parameter block `{block}` has {got} values, optimizer state expects {expected}")]
    BlockSizeMismatch {
        block: String,
        expected: usize,
        got: usize,
    },
    #[error("optimizer state tracks {expected} blocks, {got} were supplied")]
    BlockCountMismatch { expected: usize, got: usize },
}
