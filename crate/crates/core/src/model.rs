//! The dual-encoder architecture: a shared nonlinear mapping feeds a
//! deterministic head and a stochastic head (mean + log-std projections with
//! reparameterized sampling). Both representations live in measurement space
//! and sum to the reconstruction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    net_backward, net_forward, Activation, ForwardTrace, LayerGrads, LayerParams, Matrix,
    NumericsError,
};
use crate::parallel;

/// Log standard deviations are clamped to this range before exponentiation,
/// bounding sigma to roughly [0.0025, 7.4].
pub const LOG_STD_MIN: f64 = -6.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Width lists for the three sub-networks. The stochastic list is read as a
/// trunk over all but the last width, with two parallel projections (mean and
/// log-std) from the trunk output to the final width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub shared_widths: Vec<usize>,
    pub deterministic_widths: Vec<usize>,
    pub stochastic_widths: Vec<usize>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 16,
            shared_widths: vec![16, 100, 50],
            deterministic_widths: vec![50, 85, 16],
            stochastic_widths: vec![50, 65, 16],
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Default width layout for an arbitrary input dimension, scaled from the
    /// 16-dimensional reference shapes.
    pub fn for_input_dim(input_dim: usize, seed: u64) -> Self {
        let hidden = (input_dim * 6).max(8);
        let latent = (input_dim * 3).max(4);
        Self {
            input_dim,
            shared_widths: vec![input_dim, hidden, latent],
            deterministic_widths: vec![latent, (input_dim * 5).max(6), input_dim],
            stochastic_widths: vec![latent, (input_dim * 4).max(5), input_dim],
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.input_dim == 0 {
            return fail("input_dim must be positive".into());
        }
        for (name, widths) in [
            ("shared_widths", &self.shared_widths),
            ("deterministic_widths", &self.deterministic_widths),
            ("stochastic_widths", &self.stochastic_widths),
        ] {
            if widths.len() < 2 {
                return fail(format!("{name} needs at least two entries"));
            }
            if widths.iter().any(|&w| w == 0) {
                return fail(format!("{name} contains a zero width"));
            }
        }
        if self.shared_widths[0] != self.input_dim {
            return fail(format!(
                "shared_widths must start at input_dim {}, got {}",
                self.input_dim, self.shared_widths[0]
            ));
        }
        let latent = *self.shared_widths.last().expect("checked non-empty");
        if self.deterministic_widths[0] != latent {
            return fail(format!(
                "deterministic_widths must start at the shared output {latent}"
            ));
        }
        if self.stochastic_widths[0] != latent {
            return fail(format!(
                "stochastic_widths must start at the shared output {latent}"
            ));
        }
        if *self.deterministic_widths.last().unwrap() != self.input_dim {
            return fail(format!(
                "deterministic head must end at input_dim {} so representations live in measurement space",
                self.input_dim
            ));
        }
        if *self.stochastic_widths.last().unwrap() != self.input_dim {
            return fail(format!(
                "stochastic head must end at input_dim {} so representations live in measurement space",
                self.input_dim
            ));
        }
        Ok(())
    }

    /// Total trainable parameter count for this layout.
    pub fn param_count(&self) -> usize {
        let stack = |w: &[usize]| -> usize {
            w.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
        };
        let trunk_out = self.stochastic_widths[self.stochastic_widths.len() - 2];
        let head = trunk_out * self.input_dim + self.input_dim;
        stack(&self.shared_widths)
            + stack(&self.deterministic_widths)
            + stack(&self.stochastic_widths[..self.stochastic_widths.len() - 1])
            + 2 * head
    }
}

/// All trainable parameters: shared trunk, deterministic head, stochastic
/// trunk, and the two stochastic projections.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    pub shared: Vec<LayerParams>,
    pub det_head: Vec<LayerParams>,
    pub stoch_trunk: Vec<LayerParams>,
    pub mean_head: LayerParams,
    pub log_std_head: LayerParams,
}

fn build_stack<F>(widths: &[usize], last_identity: bool, mut make: F) -> Vec<LayerParams>
where
    F: FnMut(usize, usize, Activation) -> LayerParams,
{
    widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if last_identity && i + 2 == widths.len() {
                Activation::Identity
            } else {
                Activation::Tanh
            };
            make(w[0], w[1], act)
        })
        .collect()
}

impl ModelParams {
    /// Seeded initialization: uniform weights in the fan-balanced range,
    /// zero biases. Hidden layers use tanh; output projections are identity.
    pub fn init(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut make = |i: usize, o: usize, a: Activation| LayerParams::init(i, o, a, &mut rng);

        let shared = build_stack(&config.shared_widths, false, &mut make);
        let det_head = build_stack(&config.deterministic_widths, true, &mut make);
        let trunk_widths = &config.stochastic_widths[..config.stochastic_widths.len() - 1];
        let stoch_trunk = build_stack(trunk_widths, false, &mut make);
        let trunk_out = *trunk_widths.last().expect("validated length >= 2");
        let mean_head = make(trunk_out, config.input_dim, Activation::Identity);
        let log_std_head = make(trunk_out, config.input_dim, Activation::Identity);

        Ok(Self {
            config: config.clone(),
            shared,
            det_head,
            stoch_trunk,
            mean_head,
            log_std_head,
        })
    }

    /// All-zero parameters with the same layout; used by tests.
    pub fn zeros(config: &ModelConfig) -> Result<Self, ModelError> {
        let mut params = Self::init(config)?;
        for (_, block) in params.blocks_mut() {
            block.fill(0.0);
        }
        Ok(params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    fn stacks(&self) -> [(&'static str, &[LayerParams]); 3] {
        [
            ("shared", self.shared.as_slice()),
            ("det", self.det_head.as_slice()),
            ("stoch_trunk", self.stoch_trunk.as_slice()),
        ]
    }

    /// Named parameter blocks in canonical order (layer stacks, then the two
    /// projection heads; weights before bias). Checkpointing and the
    /// optimizer both rely on this order being stable.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (stack_name, stack) in self.stacks() {
            for (i, layer) in stack.iter().enumerate() {
                out.push((format!("{stack_name}.{i}.weights"), layer.weights.data()));
                out.push((format!("{stack_name}.{i}.bias"), layer.bias.as_slice()));
            }
        }
        out.push(("mean_head.weights".into(), self.mean_head.weights.data()));
        out.push(("mean_head.bias".into(), self.mean_head.bias.as_slice()));
        out.push(("log_std_head.weights".into(), self.log_std_head.weights.data()));
        out.push(("log_std_head.bias".into(), self.log_std_head.bias.as_slice()));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        let stacks = [
            ("shared", &mut self.shared),
            ("det", &mut self.det_head),
            ("stoch_trunk", &mut self.stoch_trunk),
        ];
        for (stack_name, stack) in stacks {
            for (i, layer) in stack.iter_mut().enumerate() {
                out.push((format!("{stack_name}.{i}.weights"), layer.weights.data_mut()));
                out.push((format!("{stack_name}.{i}.bias"), layer.bias.as_mut_slice()));
            }
        }
        out.push(("mean_head.weights".into(), self.mean_head.weights.data_mut()));
        out.push(("mean_head.bias".into(), self.mean_head.bias.as_mut_slice()));
        out.push((
            "log_std_head.weights".into(),
            self.log_std_head.weights.data_mut(),
        ));
        out.push(("log_std_head.bias".into(), self.log_std_head.bias.as_mut_slice()));
        out
    }

    /// Flattens all parameters in canonical block order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|(_, b)| b.iter().copied()).collect()
    }

    /// Writes a flat vector (as produced by [`Self::to_flat`]) back in.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for (_, block) in self.blocks_mut() {
            block.copy_from_slice(&flat[offset..offset + block.len()]);
            offset += block.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    fn check_input(&self, y: &[f64]) -> Result<(), ModelError> {
        if y.len() != self.config.input_dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.config.input_dim,
                got: y.len(),
            });
        }
        Ok(())
    }

    /// Deterministic representation of one measurement. This is the
    /// inference path the alarm layer runs on.
    pub fn encode_deterministic(&self, y: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_input(y)?;
        let (latent, _) = net_forward(&self.shared, y)?;
        let (phi_d, _) = net_forward(&self.det_head, &latent)?;
        Ok(phi_d)
    }

    /// Stochastic representation `phi_s = mu + noise .* sigma` with
    /// caller-supplied standard-normal noise.
    pub fn encode_stochastic(
        &self,
        y: &[f64],
        noise: &[f64],
    ) -> Result<StochasticEncoding, ModelError> {
        self.check_input(y)?;
        self.check_input(noise)?;
        let (latent, _) = net_forward(&self.shared, y)?;
        let (trunk, _) = net_forward(&self.stoch_trunk, &latent)?;
        let (mu, _) = net_forward(&[self.mean_head.clone()], &trunk)?;
        let (raw, _) = net_forward(&[self.log_std_head.clone()], &trunk)?;
        let sigma: Vec<f64> = raw
            .iter()
            .map(|r| r.clamp(LOG_STD_MIN, LOG_STD_MAX).exp())
            .collect();
        let phi_s: Vec<f64> = mu
            .iter()
            .zip(&sigma)
            .zip(noise)
            .map(|((m, s), e)| m + e * s)
            .collect();
        Ok(StochasticEncoding { mu, sigma, phi_s })
    }

    /// Full forward pass over a batch of consecutive measurements. Row order
    /// is preserved in every output field.
    pub fn forward_batch(&self, batch: &Matrix, noise: &Matrix) -> Result<EncodedBatch, ModelError> {
        let (encoded, _) = self.forward_batch_traced(batch, noise)?;
        Ok(encoded)
    }

    /// Forward pass that also retains per-sample traces for backprop.
    pub fn forward_batch_traced(
        &self,
        batch: &Matrix,
        noise: &Matrix,
    ) -> Result<(EncodedBatch, BatchTrace), ModelError> {
        let dim = self.config.input_dim;
        if batch.cols() != dim {
            return Err(ModelError::DimensionMismatch {
                expected: dim,
                got: batch.cols(),
            });
        }
        if noise.rows() != batch.rows() || noise.cols() != dim {
            return Err(ModelError::DimensionMismatch {
                expected: batch.rows() * dim,
                got: noise.rows() * noise.cols(),
            });
        }

        let rows = batch.rows();
        let per_sample: Vec<Result<(SampleTrace, SampleOut), ModelError>> =
            parallel::map_indexed(rows, |r| self.forward_sample(batch.row(r), noise.row(r)));

        let mut traces = Vec::with_capacity(rows);
        let mut phi_d = Matrix::zeros(rows, dim);
        let mut mu_s = Matrix::zeros(rows, dim);
        let mut sigma_s = Matrix::zeros(rows, dim);
        let mut phi_s = Matrix::zeros(rows, dim);
        let mut y_hat = Matrix::zeros(rows, dim);
        for (r, item) in per_sample.into_iter().enumerate() {
            let (trace, out) = item?;
            phi_d.row_mut(r).copy_from_slice(&out.phi_d);
            mu_s.row_mut(r).copy_from_slice(&out.mu);
            sigma_s.row_mut(r).copy_from_slice(&out.sigma);
            phi_s.row_mut(r).copy_from_slice(&out.phi_s);
            y_hat.row_mut(r).copy_from_slice(&out.y_hat);
            traces.push(trace);
        }

        Ok((
            EncodedBatch {
                phi_d,
                mu_s,
                sigma_s,
                noise: noise.clone(),
                phi_s,
                y_hat,
            },
            BatchTrace { samples: traces },
        ))
    }

    fn forward_sample(
        &self,
        y: &[f64],
        noise: &[f64],
    ) -> Result<(SampleTrace, SampleOut), ModelError> {
        let (latent, shared) = net_forward(&self.shared, y)?;
        let (phi_d, det) = net_forward(&self.det_head, &latent)?;
        let (trunk_out, trunk) = net_forward(&self.stoch_trunk, &latent)?;
        let (mu, mean) = net_forward(std::slice::from_ref(&self.mean_head), &trunk_out)?;
        let (raw, log_std) = net_forward(std::slice::from_ref(&self.log_std_head), &trunk_out)?;

        let sigma: Vec<f64> = raw
            .iter()
            .map(|r| r.clamp(LOG_STD_MIN, LOG_STD_MAX).exp())
            .collect();
        let phi_s: Vec<f64> = mu
            .iter()
            .zip(&sigma)
            .zip(noise)
            .map(|((m, s), e)| m + e * s)
            .collect();
        let y_hat: Vec<f64> = phi_d.iter().zip(&phi_s).map(|(d, s)| d + s).collect();

        Ok((
            SampleTrace {
                shared,
                det,
                trunk,
                mean,
                log_std,
            },
            SampleOut {
                phi_d,
                mu,
                sigma,
                phi_s,
                y_hat,
            },
        ))
    }

    /// Exact gradients of a scalar loss with respect to every parameter,
    /// given the loss gradients with respect to the encoder outputs. The
    /// reparameterized noise is treated as a constant.
    pub fn backward_batch(
        &self,
        encoded: &EncodedBatch,
        trace: &BatchTrace,
        upstream: &OutputGradients,
    ) -> Result<ModelGrads, ModelError> {
        let rows = encoded.phi_d.rows();
        if trace.samples.len() != rows {
            return Err(NumericsError::StaleTrace(format!(
                "trace holds {} samples for a batch of {rows}",
                trace.samples.len()
            ))
            .into());
        }

        let partials: Vec<Result<ModelGrads, ModelError>> =
            parallel::map_chunks(rows, parallel::GRAD_CHUNK, |range| {
                let mut acc = ModelGrads::zeros_like(self);
                for r in range {
                    self.backward_sample(encoded, &trace.samples[r], upstream, r, &mut acc)?;
                }
                Ok(acc)
            });

        let mut total = ModelGrads::zeros_like(self);
        for partial in partials {
            total.add_assign(&partial?);
        }
        Ok(total)
    }

    fn backward_sample(
        &self,
        encoded: &EncodedBatch,
        trace: &SampleTrace,
        upstream: &OutputGradients,
        r: usize,
        acc: &mut ModelGrads,
    ) -> Result<(), ModelError> {
        let dim = self.config.input_dim;
        let sigma = encoded.sigma_s.row(r);
        let noise = encoded.noise.row(r);
        let raw_log_std = trace.log_std.output();

        // phi_s = mu + e .* sigma folds into the mu and sigma paths.
        let mut g_mu = vec![0.0; dim];
        let mut g_sigma = vec![0.0; dim];
        for j in 0..dim {
            let gs = upstream.d_phi_s.get(r, j);
            g_mu[j] = upstream.d_mu.get(r, j) + gs;
            g_sigma[j] = upstream.d_sigma.get(r, j) + gs * noise[j];
        }
        // sigma = exp(clamp(raw)); the clamp gates the gradient.
        let g_raw: Vec<f64> = (0..dim)
            .map(|j| {
                let in_range = raw_log_std[j] > LOG_STD_MIN && raw_log_std[j] < LOG_STD_MAX;
                if in_range {
                    g_sigma[j] * sigma[j]
                } else {
                    0.0
                }
            })
            .collect();

        let (mean_grads, g_trunk_a) =
            net_backward(std::slice::from_ref(&self.mean_head), &trace.mean, &g_mu)?;
        let (log_std_grads, g_trunk_b) = net_backward(
            std::slice::from_ref(&self.log_std_head),
            &trace.log_std,
            &g_raw,
        )?;
        let g_trunk: Vec<f64> = g_trunk_a.iter().zip(&g_trunk_b).map(|(a, b)| a + b).collect();
        let (trunk_grads, g_latent_stoch) =
            net_backward(&self.stoch_trunk, &trace.trunk, &g_trunk)?;

        let g_phi_d: Vec<f64> = (0..dim).map(|j| upstream.d_phi_d.get(r, j)).collect();
        let (det_grads, g_latent_det) = net_backward(&self.det_head, &trace.det, &g_phi_d)?;

        let g_latent: Vec<f64> = g_latent_det
            .iter()
            .zip(&g_latent_stoch)
            .map(|(a, b)| a + b)
            .collect();
        let (shared_grads, _) = net_backward(&self.shared, &trace.shared, &g_latent)?;

        for (a, g) in acc.shared.iter_mut().zip(&shared_grads) {
            a.add_assign(g);
        }
        for (a, g) in acc.det_head.iter_mut().zip(&det_grads) {
            a.add_assign(g);
        }
        for (a, g) in acc.stoch_trunk.iter_mut().zip(&trunk_grads) {
            a.add_assign(g);
        }
        acc.mean_head.add_assign(&mean_grads[0]);
        acc.log_std_head.add_assign(&log_std_grads[0]);
        Ok(())
    }
}

/// Result of encoding one measurement with the stochastic head.
#[derive(Debug, Clone)]
pub struct StochasticEncoding {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub phi_s: Vec<f64>,
}

/// Batch-level encoder outputs, all `batch x dim` with input row order.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub phi_d: Matrix,
    pub mu_s: Matrix,
    pub sigma_s: Matrix,
    pub noise: Matrix,
    pub phi_s: Matrix,
    pub y_hat: Matrix,
}

#[derive(Debug, Clone)]
struct SampleOut {
    phi_d: Vec<f64>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    phi_s: Vec<f64>,
    y_hat: Vec<f64>,
}

/// Per-sample forward traces for every sub-network.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    samples: Vec<SampleTrace>,
}

#[derive(Debug, Clone)]
struct SampleTrace {
    shared: ForwardTrace,
    det: ForwardTrace,
    trunk: ForwardTrace,
    mean: ForwardTrace,
    log_std: ForwardTrace,
}

/// Loss gradients with respect to the encoder outputs, `batch x dim` each.
#[derive(Debug, Clone)]
pub struct OutputGradients {
    pub d_phi_d: Matrix,
    pub d_mu: Matrix,
    pub d_sigma: Matrix,
    pub d_phi_s: Matrix,
}

impl OutputGradients {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            d_phi_d: Matrix::zeros(rows, cols),
            d_mu: Matrix::zeros(rows, cols),
            d_sigma: Matrix::zeros(rows, cols),
            d_phi_s: Matrix::zeros(rows, cols),
        }
    }
}

/// Gradient holder shaped exactly like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub shared: Vec<LayerGrads>,
    pub det_head: Vec<LayerGrads>,
    pub stoch_trunk: Vec<LayerGrads>,
    pub mean_head: LayerGrads,
    pub log_std_head: LayerGrads,
}

impl ModelGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            shared: params.shared.iter().map(LayerGrads::zeros_like).collect(),
            det_head: params.det_head.iter().map(LayerGrads::zeros_like).collect(),
            stoch_trunk: params.stoch_trunk.iter().map(LayerGrads::zeros_like).collect(),
            mean_head: LayerGrads::zeros_like(&params.mean_head),
            log_std_head: LayerGrads::zeros_like(&params.log_std_head),
        }
    }

    pub fn add_assign(&mut self, other: &ModelGrads) {
        for (a, b) in self.shared.iter_mut().zip(&other.shared) {
            a.add_assign(b);
        }
        for (a, b) in self.det_head.iter_mut().zip(&other.det_head) {
            a.add_assign(b);
        }
        for (a, b) in self.stoch_trunk.iter_mut().zip(&other.stoch_trunk) {
            a.add_assign(b);
        }
        self.mean_head.add_assign(&other.mean_head);
        self.log_std_head.add_assign(&other.log_std_head);
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self
            .shared
            .iter_mut()
            .chain(&mut self.det_head)
            .chain(&mut self.stoch_trunk)
        {
            g.scale(factor);
        }
        self.mean_head.scale(factor);
        self.log_std_head.scale(factor);
    }

    /// Flat gradient blocks in the same canonical order as
    /// [`ModelParams::blocks`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for stack in [&self.shared, &self.det_head, &self.stoch_trunk] {
            for g in stack {
                out.push(g.weights.data());
                out.push(g.bias.as_slice());
            }
        }
        out.push(self.mean_head.weights.data());
        out.push(self.mean_head.bias.as_slice());
        out.push(self.log_std_head.weights.data());
        out.push(self.log_std_head.bias.as_slice());
        out
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|b| b.iter().copied()).collect()
    }
}
