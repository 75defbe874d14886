//! The training objective: orthogonality, Gaussian negative log-likelihood,
//! smoothness over consecutive samples, and KL to a standard normal — plus
//! exact gradients with respect to all encoder parameters.
//!
//! All terms are per-sample (or per-transition) means, so magnitudes do not
//! depend on batch size.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EncodedBatch, ModelError, ModelGrads, ModelParams, OutputGradients};
use crate::numerics::Matrix;

const LN_2PI: f64 = 1.8378770664093453;
/// Guards zero norms in the cosine form of the orthogonality term.
const ORTH_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("sigma must be strictly positive (found {value} at row {row}, dim {dim})")]
    NonPositiveSigma { row: usize, dim: usize, value: f64 },
    #[error("shape mismatch between {left} ({left_rows}x{left_cols}) and {right} ({right_rows}x{right_cols})")]
    ShapeMismatch {
        left: &'static str,
        left_rows: usize,
        left_cols: usize,
        right: &'static str,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("non-finite gradient produced by the {term} term")]
    NonFiniteGradient { term: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the orthogonality penalty is formed. The squared-cosine form is
/// bounded in [0, 1] and scale-invariant; the raw dot product is kept for
/// ablation but is unbounded below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthogonalityForm {
    #[default]
    CosineSquared,
    RawDot,
}

/// Which stochastic vector enters the orthogonality term: the sampled
/// representation (noise included) or just its mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthogonalityInput {
    #[default]
    Sampled,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub orthogonality: f64,
    pub nll: f64,
    pub smoothness: f64,
    pub kl: f64,
    pub orthogonality_form: OrthogonalityForm,
    pub orthogonality_input: OrthogonalityInput,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            orthogonality: 1.0,
            nll: 1.0,
            smoothness: 1.0,
            kl: 1.0,
            orthogonality_form: OrthogonalityForm::default(),
            orthogonality_input: OrthogonalityInput::default(),
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        for (name, w) in [
            ("orthogonality", self.orthogonality),
            ("nll", self.nll),
            ("smoothness", self.smoothness),
            ("kl", self.kl),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(format!("loss weight {name} must be finite and >= 0, got {w}"));
            }
        }
        Ok(())
    }
}

/// The four term values and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub orthogonality: f64,
    pub nll: f64,
    pub smoothness: f64,
    pub kl: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn assemble(orthogonality: f64, nll: f64, smoothness: f64, kl: f64, w: &LossWeights) -> Self {
        Self {
            orthogonality,
            nll,
            smoothness,
            kl,
            total: w.orthogonality * orthogonality + w.nll * nll + w.smoothness * smoothness + w.kl * kl,
        }
    }
}

fn check_shapes(
    left: &'static str,
    a: &Matrix,
    right: &'static str,
    b: &Matrix,
) -> Result<(), LossError> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(LossError::ShapeMismatch {
            left,
            left_rows: a.rows(),
            left_cols: a.cols(),
            right,
            right_rows: b.rows(),
            right_cols: b.cols(),
        });
    }
    Ok(())
}

fn check_sigma(sigma: &Matrix) -> Result<(), LossError> {
    for r in 0..sigma.rows() {
        for j in 0..sigma.cols() {
            let v = sigma.get(r, j);
            if !(v > 0.0) {
                return Err(LossError::NonPositiveSigma { row: r, dim: j, value: v });
            }
        }
    }
    Ok(())
}

/// Gaussian negative log-likelihood of `y` under mean `phi_d + mu_s` and
/// per-dimension scale `sigma_s`; mean over the batch of the per-sample sum
/// over dimensions.
pub fn nll_term(
    y: &Matrix,
    phi_d: &Matrix,
    mu_s: &Matrix,
    sigma_s: &Matrix,
) -> Result<f64, LossError> {
    check_shapes("y", y, "phi_d", phi_d)?;
    check_shapes("y", y, "mu_s", mu_s)?;
    check_shapes("y", y, "sigma_s", sigma_s)?;
    check_sigma(sigma_s)?;
    let rows = y.rows();
    let mut total = 0.0;
    for r in 0..rows {
        for j in 0..y.cols() {
            let residual = y.get(r, j) - phi_d.get(r, j) - mu_s.get(r, j);
            let sigma = sigma_s.get(r, j);
            total += residual * residual / (2.0 * sigma * sigma) + sigma.ln() + 0.5 * LN_2PI;
        }
    }
    Ok(total / rows.max(1) as f64)
}

/// Mean squared difference of consecutive rows: `(1/(T-1)) sum ||row_k -
/// row_{k-1}||^2`. The first row has no predecessor and contributes nothing;
/// a single row yields 0.
pub fn smoothness_term(phi_d: &Matrix) -> f64 {
    let rows = phi_d.rows();
    if rows < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for r in 1..rows {
        let prev = phi_d.row(r - 1);
        let cur = phi_d.row(r);
        for (a, b) in cur.iter().zip(prev) {
            let d = a - b;
            total += d * d;
        }
    }
    total / (rows - 1) as f64
}

/// Closed-form KL divergence of diagonal Gaussians to the standard normal,
/// mean over the batch: `0.5 * sum (mu^2 + sigma^2 - 1 - 2 ln sigma)`.
pub fn kl_term(mu_s: &Matrix, sigma_s: &Matrix) -> Result<f64, LossError> {
    check_shapes("mu_s", mu_s, "sigma_s", sigma_s)?;
    check_sigma(sigma_s)?;
    let rows = mu_s.rows();
    let mut total = 0.0;
    for r in 0..rows {
        for j in 0..mu_s.cols() {
            let mu = mu_s.get(r, j);
            let sigma = sigma_s.get(r, j);
            total += 0.5 * (mu * mu + sigma * sigma - 1.0 - 2.0 * sigma.ln());
        }
    }
    Ok(total / rows.max(1) as f64)
}

/// Squared cosine similarity between the two representations, mean over the
/// batch. Zero exactly at orthogonality, 1 for parallel vectors; small
/// epsilons guard zero norms.
pub fn orthogonality_term(phi_d: &Matrix, phi_s: &Matrix) -> Result<f64, LossError> {
    orthogonality_with_form(phi_d, phi_s, OrthogonalityForm::CosineSquared)
}

pub fn orthogonality_with_form(
    phi_d: &Matrix,
    phi_s: &Matrix,
    form: OrthogonalityForm,
) -> Result<f64, LossError> {
    check_shapes("phi_d", phi_d, "phi_s", phi_s)?;
    let rows = phi_d.rows();
    let mut total = 0.0;
    for r in 0..rows {
        let d = phi_d.row(r);
        let s = phi_s.row(r);
        let dot: f64 = d.iter().zip(s).map(|(a, b)| a * b).sum();
        total += match form {
            OrthogonalityForm::RawDot => dot,
            OrthogonalityForm::CosineSquared => {
                let nd: f64 = d.iter().map(|v| v * v).sum::<f64>() + ORTH_EPS;
                let ns: f64 = s.iter().map(|v| v * v).sum::<f64>() + ORTH_EPS;
                dot * dot / (nd * ns)
            }
        };
    }
    Ok(total / rows.max(1) as f64)
}

/// All four terms of the objective plus their weighted total.
pub fn total_loss(
    encoded: &EncodedBatch,
    y: &Matrix,
    weights: &LossWeights,
) -> Result<LossBreakdown, LossError> {
    let orth_input = match weights.orthogonality_input {
        OrthogonalityInput::Sampled => &encoded.phi_s,
        OrthogonalityInput::Mean => &encoded.mu_s,
    };
    Ok(LossBreakdown::assemble(
        orthogonality_with_form(&encoded.phi_d, orth_input, weights.orthogonality_form)?,
        nll_term(y, &encoded.phi_d, &encoded.mu_s, &encoded.sigma_s)?,
        smoothness_term(&encoded.phi_d),
        kl_term(&encoded.mu_s, &encoded.sigma_s)?,
        weights,
    ))
}

/// Forward pass plus exact gradients of the weighted total with respect to
/// every model parameter, with the reparameterized noise held fixed.
pub fn total_loss_gradients(
    params: &ModelParams,
    y: &Matrix,
    noise: &Matrix,
    weights: &LossWeights,
) -> Result<(ModelGrads, LossBreakdown), LossError> {
    let (encoded, trace) = params.forward_batch_traced(y, noise)?;
    let rows = y.rows();
    let cols = y.cols();
    let inv_rows = 1.0 / rows.max(1) as f64;
    let mut upstream = OutputGradients::zeros(rows, cols);

    // NLL: residual r = y - phi_d - mu; d/dphi_d = d/dmu = -r/sigma^2,
    // d/dsigma = -r^2/sigma^3 + 1/sigma, all scaled by the batch mean.
    check_sigma(&encoded.sigma_s)?;
    let nll = nll_term(y, &encoded.phi_d, &encoded.mu_s, &encoded.sigma_s)?;
    if weights.nll != 0.0 {
        let w = weights.nll * inv_rows;
        for r in 0..rows {
            for j in 0..cols {
                let sigma = encoded.sigma_s.get(r, j);
                let residual = y.get(r, j) - encoded.phi_d.get(r, j) - encoded.mu_s.get(r, j);
                let d_mean = -residual / (sigma * sigma);
                upstream.d_phi_d.set(r, j, upstream.d_phi_d.get(r, j) + w * d_mean);
                upstream.d_mu.set(r, j, upstream.d_mu.get(r, j) + w * d_mean);
                let d_sigma = -residual * residual / (sigma * sigma * sigma) + 1.0 / sigma;
                upstream.d_sigma.set(r, j, upstream.d_sigma.get(r, j) + w * d_sigma);
            }
        }
        ensure_finite(&upstream, "nll")?;
    }

    // Smoothness: each row couples to its neighbours.
    let smoothness = smoothness_term(&encoded.phi_d);
    if weights.smoothness != 0.0 && rows >= 2 {
        let w = weights.smoothness * 2.0 / (rows - 1) as f64;
        for r in 0..rows {
            for j in 0..cols {
                let mut g = 0.0;
                if r >= 1 {
                    g += encoded.phi_d.get(r, j) - encoded.phi_d.get(r - 1, j);
                }
                if r + 1 < rows {
                    g -= encoded.phi_d.get(r + 1, j) - encoded.phi_d.get(r, j);
                }
                upstream.d_phi_d.set(r, j, upstream.d_phi_d.get(r, j) + w * g);
            }
        }
        ensure_finite(&upstream, "smoothness")?;
    }

    // KL: d/dmu = mu, d/dsigma = sigma - 1/sigma.
    let kl = kl_term(&encoded.mu_s, &encoded.sigma_s)?;
    if weights.kl != 0.0 {
        let w = weights.kl * inv_rows;
        for r in 0..rows {
            for j in 0..cols {
                let mu = encoded.mu_s.get(r, j);
                let sigma = encoded.sigma_s.get(r, j);
                upstream.d_mu.set(r, j, upstream.d_mu.get(r, j) + w * mu);
                upstream
                    .d_sigma
                    .set(r, j, upstream.d_sigma.get(r, j) + w * (sigma - 1.0 / sigma));
            }
        }
        ensure_finite(&upstream, "kl")?;
    }

    // Orthogonality on the configured stochastic vector.
    let orth_input = match weights.orthogonality_input {
        OrthogonalityInput::Sampled => &encoded.phi_s,
        OrthogonalityInput::Mean => &encoded.mu_s,
    };
    let orthogonality =
        orthogonality_with_form(&encoded.phi_d, orth_input, weights.orthogonality_form)?;
    if weights.orthogonality != 0.0 {
        let w = weights.orthogonality * inv_rows;
        for r in 0..rows {
            let d = encoded.phi_d.row(r);
            let s = orth_input.row(r);
            let dot: f64 = d.iter().zip(s).map(|(a, b)| a * b).sum();
            for j in 0..cols {
                let (gd, gs) = match weights.orthogonality_form {
                    OrthogonalityForm::RawDot => (s[j], d[j]),
                    OrthogonalityForm::CosineSquared => {
                        let nd: f64 = d.iter().map(|v| v * v).sum::<f64>() + ORTH_EPS;
                        let ns: f64 = s.iter().map(|v| v * v).sum::<f64>() + ORTH_EPS;
                        let gd = 2.0 * dot * s[j] / (nd * ns) - 2.0 * dot * dot * d[j] / (nd * nd * ns);
                        let gs = 2.0 * dot * d[j] / (nd * ns) - 2.0 * dot * dot * s[j] / (nd * ns * ns);
                        (gd, gs)
                    }
                };
                upstream.d_phi_d.set(r, j, upstream.d_phi_d.get(r, j) + w * gd);
                match weights.orthogonality_input {
                    OrthogonalityInput::Sampled => {
                        upstream.d_phi_s.set(r, j, upstream.d_phi_s.get(r, j) + w * gs)
                    }
                    OrthogonalityInput::Mean => {
                        upstream.d_mu.set(r, j, upstream.d_mu.get(r, j) + w * gs)
                    }
                }
            }
        }
        ensure_finite(&upstream, "orthogonality")?;
    }

    let grads = params.backward_batch(&encoded, &trace, &upstream)?;
    let breakdown = LossBreakdown::assemble(orthogonality, nll, smoothness, kl, weights);
    Ok((grads, breakdown))
}

fn ensure_finite(upstream: &OutputGradients, term: &'static str) -> Result<(), LossError> {
    let ok = upstream.d_phi_d.is_finite()
        && upstream.d_mu.is_finite()
        && upstream.d_sigma.is_finite()
        && upstream.d_phi_s.is_finite();
    if ok {
        Ok(())
    } else {
        Err(LossError::NonFiniteGradient { term })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::numerics::finite_difference_gradient;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn positive_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.random_range(0.2..2.5))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    use rand::Rng;

    #[test]
    fn nll_of_zero_residual_unit_sigma_is_half_log_2pi_per_dim() {
        let d = 16;
        let y = gaussian_matrix(5, d, 1);
        let phi_d = y.clone();
        let mu = Matrix::zeros(5, d);
        let sigma = Matrix::from_vec(5, d, vec![1.0; 5 * d]).unwrap();
        let nll = nll_term(&y, &phi_d, &mu, &sigma).unwrap();
        let expected = d as f64 * 0.5 * LN_2PI;
        assert!((nll - expected).abs() < 1e-12);
        assert!((expected - 14.703016531274763).abs() < 1e-12);
    }

    #[test]
    fn unit_residual_in_one_dim_adds_one_half() {
        let d = 16;
        let y = Matrix::zeros(1, d);
        let mut phi_d = Matrix::zeros(1, d);
        phi_d.set(0, 0, -1.0); // residual y - phi_d - mu = 1 in dim 0
        let mu = Matrix::zeros(1, d);
        let sigma = Matrix::from_vec(1, d, vec![1.0; d]).unwrap();
        let nll = nll_term(&y, &phi_d, &mu, &sigma).unwrap();
        let baseline = d as f64 * 0.5 * LN_2PI;
        assert!((nll - baseline - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nll_matches_direct_density_evaluation() {
        use statrs::distribution::{Continuous, Normal};
        let y = gaussian_matrix(7, 3, 2);
        let phi_d = gaussian_matrix(7, 3, 3);
        let mu = gaussian_matrix(7, 3, 4);
        let sigma = positive_matrix(7, 3, 5);
        let nll = nll_term(&y, &phi_d, &mu, &sigma).unwrap();

        let mut oracle = 0.0;
        for r in 0..7 {
            for j in 0..3 {
                let dist = Normal::new(phi_d.get(r, j) + mu.get(r, j), sigma.get(r, j)).unwrap();
                oracle -= dist.ln_pdf(y.get(r, j));
            }
        }
        oracle /= 7.0;
        assert!((nll - oracle).abs() < 1e-10, "{nll} vs {oracle}");
    }

    #[test]
    fn nll_rejects_non_positive_sigma() {
        let y = Matrix::zeros(1, 2);
        let mut sigma = Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        assert!(nll_term(&y, &y, &y, &sigma).is_err());
        sigma.set(0, 1, -1.0);
        assert!(kl_term(&y, &sigma).is_err());
    }

    #[test]
    fn smoothness_of_constant_sequence_is_zero() {
        let phi_d = Matrix::from_vec(4, 3, vec![0.7; 12]).unwrap();
        assert_eq!(smoothness_term(&phi_d), 0.0);
    }

    #[test]
    fn smoothness_of_unit_step_is_one() {
        let phi_d = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(smoothness_term(&phi_d), 1.0);
    }

    #[test]
    fn smoothness_hand_example() {
        // Sequence [0, 1, 3] in one dimension: (1 + 4) / 2 = 2.5.
        let phi_d = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(smoothness_term(&phi_d), 2.5);
        // Single row has no transitions.
        assert_eq!(smoothness_term(&Matrix::from_rows(&[vec![5.0]]).unwrap()), 0.0);
    }

    #[test]
    fn kl_is_zero_iff_standard_normal() {
        let mu = Matrix::zeros(3, 4);
        let sigma = Matrix::from_vec(3, 4, vec![1.0; 12]).unwrap();
        assert!(kl_term(&mu, &sigma).unwrap().abs() < 1e-12);

        let mut mu2 = mu.clone();
        mu2.set(0, 0, 1e-3);
        assert!(kl_term(&mu2, &sigma).unwrap() > 1e-12 / 12.0);
    }

    #[test]
    fn kl_unit_mean_hand_value() {
        let mu = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let sigma = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        assert!((kl_term(&mu, &sigma).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_matches_monte_carlo_estimate() {
        // MC estimate of E_q[ln q - ln p] with q = N(mu, sigma), p = N(0, 1).
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..4 {
            let mu_v = rng.random_range(-1.5..1.5);
            let sigma_v = rng.random_range(0.3..2.0);
            let mu = Matrix::from_vec(1, 1, vec![mu_v]).unwrap();
            let sigma = Matrix::from_vec(1, 1, vec![sigma_v]).unwrap();
            let exact = kl_term(&mu, &sigma).unwrap();

            let n = 200_000;
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..n {
                let e: f64 = StandardNormal.sample(&mut rng);
                let x = mu_v + sigma_v * e;
                let term = -(sigma_v.ln()) - 0.5 * e * e + 0.5 * x * x;
                sum += term;
                sumsq += term * term;
            }
            let mean = sum / n as f64;
            let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
            assert!(
                (exact - mean).abs() < 3.0 * se.max(1e-4),
                "case {case}: exact {exact}, mc {mean}, se {se}"
            );
        }
    }

    #[test]
    fn orthogonality_of_perpendicular_vectors_is_zero() {
        let d = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let s = Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(orthogonality_term(&d, &s).unwrap().abs() < 1e-9);
    }

    #[test]
    fn orthogonality_of_parallel_vectors_is_one() {
        let d = Matrix::from_rows(&[vec![0.3, -0.4]]).unwrap();
        let s = Matrix::from_rows(&[vec![0.6, -0.8]]).unwrap();
        assert!((orthogonality_term(&d, &s).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonality_hand_example_cos2_45_degrees() {
        let d = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let s = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert!((orthogonality_term(&d, &s).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn orthogonality_is_bounded_and_zero_vectors_are_safe() {
        let d = Matrix::zeros(2, 3);
        let s = gaussian_matrix(2, 3, 8);
        let v = orthogonality_term(&d, &s).unwrap();
        assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn raw_dot_form_is_plain_dot_product() {
        let d = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let s = Matrix::from_rows(&[vec![-3.0, 0.5]]).unwrap();
        let v = orthogonality_with_form(&d, &s, OrthogonalityForm::RawDot).unwrap();
        assert_eq!(v, -2.0);
    }

    fn toy_config(seed: u64) -> ModelConfig {
        ModelConfig {
            input_dim: 2,
            shared_widths: vec![2, 2],
            deterministic_widths: vec![2, 2],
            stochastic_widths: vec![2, 2, 2],
            seed,
        }
    }

    #[test]
    fn zero_weights_give_zero_total() {
        let params = ModelParams::init(&toy_config(1)).unwrap();
        let y = gaussian_matrix(6, 2, 10);
        let noise = gaussian_matrix(6, 2, 11);
        let weights = LossWeights {
            orthogonality: 0.0,
            nll: 0.0,
            smoothness: 0.0,
            kl: 0.0,
            ..LossWeights::default()
        };
        let encoded = params.forward_batch(&y, &noise).unwrap();
        let breakdown = total_loss(&encoded, &y, &weights).unwrap();
        assert_eq!(breakdown.total, 0.0);
        let (grads, _) = total_loss_gradients(&params, &y, &noise, &weights).unwrap();
        assert!(grads.to_flat().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn total_is_exactly_the_weighted_sum() {
        let params = ModelParams::init(&toy_config(2)).unwrap();
        let y = gaussian_matrix(5, 2, 12);
        let noise = gaussian_matrix(5, 2, 13);
        let weights = LossWeights {
            orthogonality: 0.25,
            nll: 1.5,
            smoothness: 2.0,
            kl: 0.75,
            ..LossWeights::default()
        };
        let encoded = params.forward_batch(&y, &noise).unwrap();
        let b = total_loss(&encoded, &y, &weights).unwrap();
        let recomputed = 0.25 * b.orthogonality + 1.5 * b.nll + 2.0 * b.smoothness + 0.75 * b.kl;
        assert_eq!(b.total, recomputed);
    }

    #[test]
    fn permutation_invariance_except_smoothness() {
        let params = ModelParams::init(&toy_config(3)).unwrap();
        let y = gaussian_matrix(8, 2, 14);
        let noise = gaussian_matrix(8, 2, 15);
        let encoded = params.forward_batch(&y, &noise).unwrap();
        let b = total_loss(&encoded, &y, &LossWeights::default()).unwrap();

        // Reverse the rows.
        let perm: Vec<usize> = (0..8).rev().collect();
        let permute = |m: &Matrix| {
            Matrix::from_rows(&perm.iter().map(|&r| m.row(r).to_vec()).collect::<Vec<_>>()).unwrap()
        };
        let y_p = permute(&y);
        let noise_p = permute(&noise);
        let encoded_p = params.forward_batch(&y_p, &noise_p).unwrap();
        let b_p = total_loss(&encoded_p, &y_p, &LossWeights::default()).unwrap();

        assert!((b.nll - b_p.nll).abs() < 1e-12);
        assert!((b.kl - b_p.kl).abs() < 1e-12);
        assert!((b.orthogonality - b_p.orthogonality).abs() < 1e-12);

        // Smoothness is order-sensitive: a genuinely reordered sequence
        // changes the transition sum.
        let seq = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let swapped = Matrix::from_rows(&[vec![0.0], vec![3.0], vec![1.0]]).unwrap();
        assert_eq!(smoothness_term(&seq), 2.5);
        assert_eq!(smoothness_term(&swapped), 6.5);
    }

    #[test]
    fn smoothness_only_gradient_is_zero_on_constant_input() {
        let params = ModelParams::init(&toy_config(4)).unwrap();
        let y = Matrix::from_vec(5, 2, vec![0.4; 10]).unwrap();
        let noise = Matrix::zeros(5, 2);
        let weights = LossWeights {
            orthogonality: 0.0,
            nll: 0.0,
            smoothness: 1.0,
            kl: 0.0,
            ..LossWeights::default()
        };
        let (grads, breakdown) = total_loss_gradients(&params, &y, &noise, &weights).unwrap();
        assert_eq!(breakdown.smoothness, 0.0);
        assert!(grads.to_flat().iter().all(|g| g.abs() < 1e-14));
    }

    /// Finite-difference check for each term in isolation and the weighted
    /// total, over several random toy models with frozen noise.
    #[test]
    fn gradients_match_finite_differences() {
        let term_weights = [
            ("orthogonality", LossWeights { orthogonality: 1.0, nll: 0.0, smoothness: 0.0, kl: 0.0, ..LossWeights::default() }),
            ("nll", LossWeights { orthogonality: 0.0, nll: 1.0, smoothness: 0.0, kl: 0.0, ..LossWeights::default() }),
            ("smoothness", LossWeights { orthogonality: 0.0, nll: 0.0, smoothness: 1.0, kl: 0.0, ..LossWeights::default() }),
            ("kl", LossWeights { orthogonality: 0.0, nll: 0.0, smoothness: 0.0, kl: 1.0, ..LossWeights::default() }),
            ("total", LossWeights { orthogonality: 0.7, nll: 1.0, smoothness: 1.3, kl: 0.9, ..LossWeights::default() }),
        ];

        for seed in 0..5u64 {
            let config = toy_config(seed + 20);
            let params = ModelParams::init(&config).unwrap();
            let y = gaussian_matrix(6, config.input_dim, seed + 100);
            let noise = gaussian_matrix(6, config.input_dim, seed + 200);

            for (name, weights) in &term_weights {
                let (grads, _) = total_loss_gradients(&params, &y, &noise, weights).unwrap();
                let analytic = grads.to_flat();

                let mut flat = params.to_flat();
                let mut probe = params.clone();
                let numeric = finite_difference_gradient(
                    |p: &[f64]| {
                        probe.assign_flat(p);
                        let encoded = probe.forward_batch(&y, &noise)?;
                        Ok::<f64, LossError>(total_loss(&encoded, &y, weights)?.total)
                    },
                    &mut flat,
                    1e-5,
                )
                .unwrap();

                for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
                    let err = (a - n).abs();
                    let scale = a.abs().max(n.abs()).max(1e-6);
                    assert!(
                        err / scale < 1e-4,
                        "seed {seed} term {name} param {i}: analytic {a}, numeric {n}"
                    );
                }
            }
        }
    }

    #[test]
    fn mean_orthogonality_input_routes_gradient_through_mu() {
        let config = toy_config(42);
        let params = ModelParams::init(&config).unwrap();
        let y = gaussian_matrix(4, 2, 300);
        let noise = gaussian_matrix(4, 2, 301);
        let weights = LossWeights {
            orthogonality: 1.0,
            nll: 0.0,
            smoothness: 0.0,
            kl: 0.0,
            orthogonality_input: OrthogonalityInput::Mean,
            ..LossWeights::default()
        };
        let (grads, _) = total_loss_gradients(&params, &y, &noise, &weights).unwrap();
        let analytic = grads.to_flat();

        let mut flat = params.to_flat();
        let mut probe = params.clone();
        let numeric = finite_difference_gradient(
            |p: &[f64]| {
                probe.assign_flat(p);
                let encoded = probe.forward_batch(&y, &noise)?;
                Ok::<f64, LossError>(total_loss(&encoded, &y, &weights)?.total)
            },
            &mut flat,
            1e-5,
        )
        .unwrap();
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() / a.abs().max(n.abs()).max(1e-6) < 1e-4);
        }
    }
}
