//! Adam with bias correction, operating on named parameter blocks.

use serde::{Deserialize, Serialize};

use super::NumericsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// First/second-moment accumulators for a fixed block layout plus the step
/// counter. One state instance tracks exactly one parameter set.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    moments: Vec<Moments>,
}

/// A parameter block paired with its gradient for one update.
pub struct AdamBlock<'a> {
    pub name: &'a str,
    pub params: &'a mut [f64],
    pub grads: &'a [f64],
}

impl AdamState {
    pub fn new(config: AdamConfig, block_sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            moments: block_sizes
                .iter()
                .map(|&n| Moments {
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                })
                .collect(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over all blocks. Rejects non-finite gradients before
    /// touching any parameter, so a failed step leaves params unchanged.
    pub fn step(&mut self, blocks: &mut [AdamBlock<'_>]) -> Result<(), NumericsError> {
        if blocks.len() != self.moments.len() {
            return Err(NumericsError::BlockCountMismatch {
                expected: self.moments.len(),
                got: blocks.len(),
            });
        }
        for (block, moments) in blocks.iter().zip(&self.moments) {
            if block.params.len() != moments.m.len() || block.grads.len() != moments.m.len() {
                return Err(NumericsError::BlockSizeMismatch {
                    block: block.name.to_string(),
                    expected: moments.m.len(),
                    got: block.grads.len(),
                });
            }
            if !block.grads.iter().all(|g| g.is_finite()) {
                return Err(NumericsError::NonFiniteGradient {
                    block: block.name.to_string(),
                });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let c = &self.config;
        let m_corr = 1.0 - c.beta1.powi(t);
        let v_corr = 1.0 - c.beta2.powi(t);

        for (block, moments) in blocks.iter_mut().zip(&mut self.moments) {
            for ((p, &g), (m, v)) in block
                .params
                .iter_mut()
                .zip(block.grads)
                .zip(moments.m.iter_mut().zip(moments.v.iter_mut()))
            {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / m_corr;
                let v_hat = *v / v_corr;
                *p -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            }
        }
        Ok(())
    }
}
