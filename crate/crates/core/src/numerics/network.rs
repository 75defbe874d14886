//! Feed-forward layer stacks: affine + elementwise activation, forward with
//! retained traces, and exact reverse-mode gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, NumericsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a = f(z)`.
    #[inline]
    pub fn grad_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `a = f(W x + b)`, weights stored `out x in` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl LayerParams {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self, NumericsError> {
        if bias.len() != weights.rows() {
            return Err(NumericsError::BiasMismatch {
                bias: bias.len(),
                rows: weights.rows(),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Seeded uniform init in `[-sqrt(6/(fan_in+fan_out)), +...]`, zero bias.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data: Vec<f64> = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            weights: Matrix::from_vec(out_dim, in_dim, data).expect("init shape is consistent"),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.data().len() + self.bias.len()
    }
}

/// Per-layer pre-activations and activations retained for backprop.
/// `activations[0]` is the network input, so the trace holds one more
/// activation entry than the network has layers.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds the input")
    }
}

/// Gradients for one layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LayerGrads {
    pub fn zeros_like(layer: &LayerParams) -> Self {
        Self {
            weights: Matrix::zeros(layer.out_dim(), layer.in_dim()),
            bias: vec![0.0; layer.out_dim()],
        }
    }

    pub fn add_assign(&mut self, other: &LayerGrads) {
        for (a, b) in self.weights.data_mut().iter_mut().zip(other.weights.data()) {
            *a += *b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.weights.data_mut() {
            *v *= factor;
        }
        for v in &mut self.bias {
            *v *= factor;
        }
    }
}

/// Runs the layer stack on `input`, retaining activations for backprop.
pub fn net_forward(
    layers: &[LayerParams],
    input: &[f64],
) -> Result<(Vec<f64>, ForwardTrace), NumericsError> {
    let mut pre_activations = Vec::with_capacity(layers.len());
    let mut activations = Vec::with_capacity(layers.len() + 1);
    activations.push(input.to_vec());

    for (idx, layer) in layers.iter().enumerate() {
        let x = activations.last().expect("input pushed above");
        if x.len() != layer.in_dim() {
            return Err(NumericsError::LayerInputMismatch {
                layer: idx,
                expected: layer.in_dim(),
                got: x.len(),
            });
        }
        let mut z = vec![0.0; layer.out_dim()];
        layer.weights.matvec(x, &mut z);
        for (zv, b) in z.iter_mut().zip(&layer.bias) {
            *zv += *b;
        }
        let a: Vec<f64> = z.iter().map(|&zv| layer.activation.apply(zv)).collect();
        if !a.iter().all(|v| v.is_finite()) {
            return Err(NumericsError::NonFiniteOutput { layer: idx });
        }
        pre_activations.push(z);
        activations.push(a);
    }

    let output = activations.last().expect("at least the input").clone();
    Ok((
        output,
        ForwardTrace {
            pre_activations,
            activations,
        },
    ))
}

/// Exact chain-rule gradients of the forward map. Returns per-layer parameter
/// gradients plus the gradient with respect to the network input.
pub fn net_backward(
    layers: &[LayerParams],
    trace: &ForwardTrace,
    output_gradient: &[f64],
) -> Result<(Vec<LayerGrads>, Vec<f64>), NumericsError> {
    if trace.activations.len() != layers.len() + 1 {
        return Err(NumericsError::StaleTrace(format!(
            "trace has {} activations for {} layers",
            trace.activations.len(),
            layers.len()
        )));
    }
    let out_dim = layers.last().map_or(trace.activations[0].len(), LayerParams::out_dim);
    if output_gradient.len() != out_dim {
        return Err(NumericsError::StaleTrace(format!(
            "output gradient width {} does not match network output {}",
            output_gradient.len(),
            out_dim
        )));
    }

    let mut grads: Vec<LayerGrads> = layers.iter().map(LayerGrads::zeros_like).collect();
    let mut upstream = output_gradient.to_vec();

    for (idx, layer) in layers.iter().enumerate().rev() {
        let inputs = &trace.activations[idx];
        let outputs = &trace.activations[idx + 1];
        if inputs.len() != layer.in_dim() || outputs.len() != layer.out_dim() {
            return Err(NumericsError::StaleTrace(format!(
                "layer {idx} shapes do not match trace"
            )));
        }
        let grad = &mut grads[idx];
        let mut downstream = vec![0.0; layer.in_dim()];
        for o in 0..layer.out_dim() {
            let dz = upstream[o] * layer.activation.grad_from_output(outputs[o]);
            grad.bias[o] += dz;
            let wrow = grad.weights.row_mut(o);
            for (w, x) in wrow.iter_mut().zip(inputs) {
                *w += dz * x;
            }
            let lrow = layer.weights.row(o);
            for (d, w) in downstream.iter_mut().zip(lrow) {
                *d += w * dz;
            }
        }
        upstream = downstream;
    }

    Ok((grads, upstream))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(widths: &[usize], seed: u64) -> Vec<LayerParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 == widths.len() {
                    Activation::Identity
                } else {
                    Activation::Tanh
                };
                LayerParams::init(w[0], w[1], act, &mut rng)
            })
            .collect()
    }

    #[test]
    fn zero_weight_layer_outputs_activated_bias() {
        let layer = LayerParams::new(
            Matrix::zeros(2, 3),
            vec![0.5, -0.5],
            Activation::Tanh,
        )
        .unwrap();
        let (out, _) = net_forward(&[layer], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(out, vec![0.5f64.tanh(), (-0.5f64).tanh()]);
    }

    #[test]
    fn identity_layer_with_identity_weights_passes_input_through() {
        let eye = Matrix::from_vec(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let layer = LayerParams::new(eye, vec![0.0; 3], Activation::Identity).unwrap();
        let x = [0.3, -1.7, 2.0];
        let (out, _) = net_forward(&[layer], &x).unwrap();
        assert_eq!(out, x.to_vec());
    }

    #[test]
    fn three_layer_net_produces_spec_shapes() {
        let net = random_net(&[16, 100, 50], 7);
        let input = vec![0.1; 16];
        let (out, trace) = net_forward(&net, &input).unwrap();
        assert_eq!(out.len(), 50);
        assert_eq!(trace.activations.len(), net.len() + 1);
    }

    #[test]
    fn forward_rejects_width_mismatch_naming_layer() {
        let net = random_net(&[4, 3, 2], 1);
        let err = net_forward(&net, &[0.0; 5]).unwrap_err();
        match err {
            NumericsError::LayerInputMismatch { layer, expected, got } => {
                assert_eq!((layer, expected, got), (0, 4, 5));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn constant_net_has_zero_input_gradient() {
        let layer = LayerParams::new(Matrix::zeros(2, 2), vec![0.0; 2], Activation::Identity).unwrap();
        let (_, trace) = net_forward(&[layer.clone()], &[1.0, -1.0]).unwrap();
        let (_, input_grad) = net_backward(&[layer], &trace, &[1.0, 1.0]).unwrap();
        assert_eq!(input_grad, vec![0.0, 0.0]);
    }

    #[test]
    fn linear_layer_gradients_are_outer_product_and_upstream() {
        let w = Matrix::from_vec(2, 3, vec![0.1, 0.2, 0.3, -0.1, 0.0, 0.4]).unwrap();
        let layer = LayerParams::new(w, vec![0.0; 2], Activation::Identity).unwrap();
        let x = [1.0, -2.0, 0.5];
        let g = [2.0, -1.0];
        let (_, trace) = net_forward(&[layer.clone()], &x).unwrap();
        let (grads, _) = net_backward(&[layer], &trace, &g).unwrap();
        for o in 0..2 {
            assert_eq!(grads[0].bias[o], g[o]);
            for i in 0..3 {
                assert_eq!(grads[0].weights.get(o, i), g[o] * x[i]);
            }
        }
    }

    #[test]
    fn backward_rejects_stale_trace() {
        let net_a = random_net(&[3, 4, 2], 1);
        let net_b = random_net(&[3, 5, 2], 2);
        let (_, trace) = net_forward(&net_a, &[0.1, 0.2, 0.3]).unwrap();
        assert!(net_backward(&net_b, &trace, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        // Scalar loss: sum of outputs squared.
        let widths = [[3usize, 5, 2], [4, 4, 4], [2, 6, 3]];
        for (case, w) in widths.iter().enumerate() {
            let mut net = random_net(w, case as u64 + 10);
            let input: Vec<f64> = (0..w[0]).map(|i| 0.3 * (i as f64) - 0.4).collect();

            let (out, trace) = net_forward(&net, &input).unwrap();
            let gout: Vec<f64> = out.iter().map(|o| 2.0 * o).collect();
            let (grads, _) = net_backward(&net, &trace, &gout).unwrap();

            let h = 1e-5;
            for l in 0..net.len() {
                for p in 0..net[l].weights.data().len() + net[l].bias.len() {
                    let read = |net: &[LayerParams]| -> f64 {
                        let (o, _) = net_forward(net, &input).unwrap();
                        o.iter().map(|v| v * v).sum()
                    };
                    let with = |net: &mut Vec<LayerParams>, delta: f64| {
                        let nw = net[l].weights.data().len();
                        if p < nw {
                            net[l].weights.data_mut()[p] += delta;
                        } else {
                            net[l].bias[p - nw] += delta;
                        }
                    };
                    with(&mut net, h);
                    let plus = read(&net);
                    with(&mut net, -2.0 * h);
                    let minus = read(&net);
                    with(&mut net, h);

                    let numeric = (plus - minus) / (2.0 * h);
                    let nw = net[l].weights.data().len();
                    let analytic = if p < nw {
                        grads[l].weights.data()[p]
                    } else {
                        grads[l].bias[p - nw]
                    };
                    let err = (analytic - numeric).abs();
                    let scale = analytic.abs().max(numeric.abs()).max(1e-8);
                    assert!(
                        err / scale < 1e-4,
                        "case {case} layer {l} param {p}: analytic {analytic} numeric {numeric}"
                    );
                }
            }
        }
    }
}
