//! A small feed-forward classifier with exact per-example gradients.
//!
//! Dense layers with relu hidden activations and identity logits, softmax
//! cross-entropy loss, and hand-rolled backpropagation. The trainer needs the
//! gradient of every single example before aggregation, so the backward pass
//! is built around one example at a time with reusable buffers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::Rng;

use crate::rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

/// Shape and activation of one dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

/// Weight matrix (row-major, output x input) and bias vector of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Feed-forward classifier; immutable during inference, updated only through
/// [`MlpModel::apply_step`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
}

impl MlpModel {
    /// Build a model with the given layer widths (`dims[0]` inputs through
    /// `dims.last()` classes), relu hidden layers, identity logits, and
    /// uniform fan-in initialization from the seed.
    pub fn new_seeded(dims: &[usize], seed: u64) -> Result<Self, ModelError> {
        let specs = specs_from_dims(dims)?;
        let mut rng = rng::stream_rng(seed, rng::stream::INIT);
        let layers = specs
            .iter()
            .map(|spec| {
                let scale = 1.0 / (spec.input_dim as f64).sqrt();
                Layer {
                    weights: (0..spec.input_dim * spec.output_dim)
                        .map(|_| rng.random_range(-scale..scale))
                        .collect(),
                    bias: vec![0.0; spec.output_dim],
                }
            })
            .collect();
        Ok(Self { specs, layers })
    }

    /// All-zero parameters; predicts class 0 everywhere via the tie-break.
    pub fn zeros(dims: &[usize]) -> Result<Self, ModelError> {
        let specs = specs_from_dims(dims)?;
        let layers = specs
            .iter()
            .map(|spec| Layer {
                weights: vec![0.0; spec.input_dim * spec.output_dim],
                bias: vec![0.0; spec.output_dim],
            })
            .collect();
        Ok(Self { specs, layers })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].input_dim
    }

    pub fn class_count(&self) -> usize {
        self.specs.last().expect("at least one layer").output_dim
    }

    pub fn param_count(&self) -> usize {
        self.specs
            .iter()
            .map(|s| s.input_dim * s.output_dim + s.output_dim)
            .sum()
    }

    /// Flat parameter access in (layer, weights, bias) order; the finite
    /// difference tests perturb one coordinate at a time through this.
    pub fn get_param(&self, idx: usize) -> f64 {
        let (layer, in_weights, off) = self.locate(idx);
        if in_weights {
            self.layers[layer].weights[off]
        } else {
            self.layers[layer].bias[off]
        }
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        let (layer, in_weights, off) = self.locate(idx);
        if in_weights {
            self.layers[layer].weights[off] = value;
        } else {
            self.layers[layer].bias[off] = value;
        }
    }

    fn locate(&self, mut idx: usize) -> (usize, bool, usize) {
        for (k, spec) in self.specs.iter().enumerate() {
            let w = spec.input_dim * spec.output_dim;
            if idx < w {
                return (k, true, idx);
            }
            idx -= w;
            if idx < spec.output_dim {
                return (k, false, idx);
            }
            idx -= spec.output_dim;
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Logits for one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut ws = self.workspace();
        self.forward_trace(x, &mut ws)?;
        Ok(ws.activations.last().expect("layers exist").clone())
    }

    /// Class prediction: argmax of the logits, ties broken by the lowest
    /// class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize, ModelError> {
        let logits = self.forward(x)?;
        Ok(argmax(&logits))
    }

    /// Row-by-row prediction over a feature matrix.
    pub fn predict_rows(&self, features: &crate::data::Matrix) -> Result<Vec<usize>, ModelError> {
        let mut ws = self.workspace();
        let mut out = Vec::with_capacity(features.rows());
        for i in 0..features.rows() {
            self.forward_trace(features.row(i), &mut ws)?;
            out.push(argmax(ws.activations.last().expect("layers exist")));
        }
        Ok(out)
    }

    /// Reusable buffers for forward/backward passes.
    pub fn workspace(&self) -> Workspace {
        Workspace {
            pre_activations: self.specs.iter().map(|s| vec![0.0; s.output_dim]).collect(),
            activations: self.specs.iter().map(|s| vec![0.0; s.output_dim]).collect(),
            deltas: self.specs.iter().map(|s| vec![0.0; s.output_dim]).collect(),
        }
    }

    fn forward_trace(&self, x: &[f64], ws: &mut Workspace) -> Result<(), ModelError> {
        if x.len() != self.input_dim() {
            return Err(ModelError::ShapeMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        for (k, (spec, layer)) in self.specs.iter().zip(&self.layers).enumerate() {
            // Split the workspace so the previous activation can be read
            // while this layer's buffers are written.
            let (done, rest) = ws.activations.split_at_mut(k);
            let input: &[f64] = if k == 0 { x } else { &done[k - 1] };
            let z = &mut ws.pre_activations[k];
            for ((zo, row), bias) in z
                .iter_mut()
                .zip(layer.weights.chunks_exact(spec.input_dim))
                .zip(&layer.bias)
            {
                let mut acc = *bias;
                for (w, v) in row.iter().zip(input) {
                    acc += w * v;
                }
                *zo = acc;
            }
            let a = &mut rest[0];
            match spec.activation {
                Activation::Relu => {
                    for (av, zv) in a.iter_mut().zip(z.iter()) {
                        *av = zv.max(0.0);
                    }
                }
                Activation::Identity => a.copy_from_slice(z),
            }
        }
        Ok(())
    }

    /// Exact gradient of `loss(forward(x), y)` for this single example.
    pub fn per_example_gradient(&self, x: &[f64], y: usize) -> Result<GradientBuffer, ModelError> {
        let mut grad = GradientBuffer::zeros_like(self);
        let mut ws = self.workspace();
        self.backprop_into(x, y, &mut ws, &mut grad)?;
        Ok(grad)
    }

    /// Backpropagate one example into `grad` (overwriting it) and return the
    /// example's loss. The trainer calls this in a tight loop with reused
    /// buffers.
    pub fn backprop_into(
        &self,
        x: &[f64],
        y: usize,
        ws: &mut Workspace,
        grad: &mut GradientBuffer,
    ) -> Result<f64, ModelError> {
        self.forward_trace(x, ws)?;
        let logits = ws.activations.last().expect("layers exist");
        let loss_value = loss(logits, y)?;
        let last = self.specs.len() - 1;
        softmax_into(logits, &mut ws.deltas[last]);
        ws.deltas[last][y] -= 1.0;
        for k in (0..self.specs.len()).rev() {
            let spec = &self.specs[k];
            let (lower, upper) = ws.deltas.split_at_mut(k);
            let delta = &upper[0];
            let input: &[f64] = if k == 0 { x } else { &ws.activations[k - 1] };
            let g = &mut grad.layers[k];
            for ((&d, row), gb) in delta
                .iter()
                .zip(g.weights.chunks_exact_mut(spec.input_dim))
                .zip(&mut g.bias)
            {
                for (gw, v) in row.iter_mut().zip(input) {
                    *gw = d * v;
                }
                *gb = d;
            }
            if k > 0 {
                let prev = &mut lower[k - 1];
                let weights = &self.layers[k].weights;
                for (i, p) in prev.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for o in 0..spec.output_dim {
                        acc += weights[o * spec.input_dim + i] * delta[o];
                    }
                    // relu' on the previous pre-activation
                    *p = if ws.pre_activations[k - 1][i] > 0.0 {
                        acc
                    } else {
                        0.0
                    };
                }
            }
        }
        Ok(loss_value)
    }

    /// Gradient descent step: parameters minus `lr` times the gradient.
    pub fn apply_step(&mut self, grad: &GradientBuffer, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grad.layers) {
            for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= lr * gw;
            }
            for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
    }
}

fn specs_from_dims(dims: &[usize]) -> Result<Vec<LayerSpec>, ModelError> {
    if dims.len() < 2 {
        return Err(ModelError::InvalidSpec(
            "a model needs an input and an output dimension".into(),
        ));
    }
    if dims.contains(&0) {
        return Err(ModelError::InvalidSpec("zero-width layer".into()));
    }
    if *dims.last().expect("non-empty") < 2 {
        return Err(ModelError::InvalidSpec(
            "classifier needs at least 2 classes".into(),
        ));
    }
    Ok(dims
        .windows(2)
        .enumerate()
        .map(|(k, w)| LayerSpec {
            input_dim: w[0],
            output_dim: w[1],
            activation: if k + 2 == dims.len() {
                Activation::Identity
            } else {
                Activation::Relu
            },
        })
        .collect())
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy in log-sum-exp form: `logsumexp(logits) - logits[y]`.
pub fn loss(logits: &[f64], y: usize) -> Result<f64, ModelError> {
    if y >= logits.len() {
        return Err(ModelError::LabelOutOfRange {
            label: y,
            classes: logits.len(),
        });
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&v| (v - m).exp()).sum();
    Ok(m + sum.ln() - logits[y])
}

/// Softmax probabilities (max-shifted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(logits) {
        let e = (v - m).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Per-example gradient, shape-congruent with the model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBuffer {
    layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerGrad {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl GradientBuffer {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model
                .specs
                .iter()
                .map(|s| LayerGrad {
                    weights: vec![0.0; s.input_dim * s.output_dim],
                    bias: vec![0.0; s.output_dim],
                })
                .collect(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for w in &mut l.weights {
                *w *= s;
            }
            for b in &mut l.bias {
                *b *= s;
            }
        }
    }

    /// Fixed-order accumulation; the trainer's deterministic reduction.
    pub fn add_assign(&mut self, other: &GradientBuffer) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn get(&self, mut idx: usize) -> f64 {
        for l in &self.layers {
            if idx < l.weights.len() {
                return l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("gradient index out of range");
    }

    /// Add `scale * noise_source()` to every component; the trainer's single
    /// Gaussian draw on the summed clipped gradients.
    pub fn perturb_with<F: FnMut() -> f64>(&mut self, scale: f64, mut noise_source: F) {
        for l in &mut self.layers {
            for w in &mut l.weights {
                *w += scale * noise_source();
            }
            for b in &mut l.bias {
                *b += scale * noise_source();
            }
        }
    }
}

/// Forward/backward scratch buffers sized for one model.
#[derive(Debug, Clone)]
pub struct Workspace {
    pre_activations: Vec<Vec<f64>>,
    activations: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss_of(model: &MlpModel, x: &[f64], y: usize) -> f64 {
        loss(&model.forward(x).unwrap(), y).unwrap()
    }

    /// Central finite differences over every parameter.
    fn fd_gradient(model: &MlpModel, x: &[f64], y: usize, h: f64) -> Vec<f64> {
        let mut m = model.clone();
        (0..m.param_count())
            .map(|i| {
                let v = m.get_param(i);
                m.set_param(i, v + h);
                let up = loss_of(&m, x, y);
                m.set_param(i, v - h);
                let down = loss_of(&m, x, y);
                m.set_param(i, v);
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn zero_model_outputs_zero_logits() {
        let m = MlpModel::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer_passes_input_through() {
        let mut m = MlpModel::zeros(&[2, 2]).unwrap();
        m.set_param(0, 1.0); // W[0][0]
        m.set_param(3, 1.0); // W[1][1]
        assert_eq!(m.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn forward_matches_hand_rolled_matrix_multiply() {
        // independent forward oracle
        let m = MlpModel::new_seeded(&[3, 4, 2], 77).unwrap();
        let x = [0.3, -1.2, 0.8];
        let read_layer = |m: &MlpModel, layer: usize, rows: usize, cols: usize, base: usize| {
            let w: Vec<f64> = (0..rows * cols).map(|i| m.get_param(base + i)).collect();
            let b: Vec<f64> = (0..rows)
                .map(|i| m.get_param(base + rows * cols + i))
                .collect();
            let _ = layer;
            (w, b)
        };
        let (w1, b1) = read_layer(&m, 0, 4, 3, 0);
        let (w2, b2) = read_layer(&m, 1, 2, 4, 4 * 3 + 4);
        let mut h = [0.0; 4];
        for o in 0..4 {
            let mut acc = b1[o];
            for i in 0..3 {
                acc += w1[o * 3 + i] * x[i];
            }
            h[o] = acc.max(0.0);
        }
        let mut expected = [0.0; 2];
        for o in 0..2 {
            let mut acc = b2[o];
            for i in 0..4 {
                acc += w2[o * 4 + i] * h[i];
            }
            expected[o] = acc;
        }
        let got = m.forward(&x).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let m = MlpModel::zeros(&[3, 2]).unwrap();
        assert!(matches!(
            m.forward(&[1.0]),
            Err(ModelError::ShapeMismatch {
                expected: 3,
                got: 1
            })
        ));
    }

    #[test]
    fn uniform_logits_give_log_class_count() {
        assert!((loss(&[0.0, 0.0], 0).unwrap() - 2.0f64.ln()).abs() < 1e-12);
        assert!((loss(&[3.0, 3.0, 3.0, 3.0], 2).unwrap() - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_vanishes_with_growing_margin() {
        let mut prev = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0, 50.0] {
            let l = loss(&[margin, 0.0], 0).unwrap();
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn loss_matches_scalar_formula() {
        // direct formula evaluation: ln(e^1 + e^-1) - 1
        let expected = (1.0f64.exp() + (-1.0f64).exp()).ln() - 1.0;
        assert!((loss(&[1.0, -1.0], 0).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn loss_rejects_out_of_range_label() {
        assert!(matches!(
            loss(&[0.0, 0.0], 2),
            Err(ModelError::LabelOutOfRange {
                label: 2,
                classes: 2
            })
        ));
    }

    #[test]
    fn gradient_vanishes_at_a_confident_minimum() {
        let mut m = MlpModel::zeros(&[2, 2]).unwrap();
        // bias pushes class 0 with an overwhelming margin
        m.set_param(4, 30.0); // bias[0]
        m.set_param(5, -30.0); // bias[1]
        let g = m.per_example_gradient(&[0.4, 0.6], 0).unwrap();
        for i in 0..g.param_count() {
            assert!(g.get(i).abs() < 1e-8, "component {i} = {}", g.get(i));
        }
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        for seed in [1u64, 2, 3, 4, 5] {
            let m = MlpModel::new_seeded(&[4, 6, 3], seed).unwrap();
            let mut rng = rng::seeded(seed ^ 0xABCD);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = rng.random_range(0..3usize);
            let analytic = m.per_example_gradient(&x, y).unwrap();
            let fd = fd_gradient(&m, &x, y, 1e-5);
            for (i, fd_i) in fd.iter().enumerate() {
                let a = analytic.get(i);
                let denom = a.abs().max(fd_i.abs()).max(1e-6);
                assert!(
                    (a - fd_i).abs() / denom < 1e-4,
                    "seed {seed} param {i}: analytic {a}, fd {fd_i}"
                );
            }
        }
    }

    #[test]
    fn per_example_gradients_are_additive() {
        let m = MlpModel::new_seeded(&[3, 5, 2], 9).unwrap();
        let examples = [
            (vec![0.1, 0.5, -0.3], 0usize),
            (vec![-0.7, 0.2, 0.9], 1),
            (vec![0.4, -0.4, 0.4], 0),
        ];
        let mut forward_sum = GradientBuffer::zeros_like(&m);
        for (x, y) in &examples {
            forward_sum.add_assign(&m.per_example_gradient(x, *y).unwrap());
        }
        let mut reverse_sum = GradientBuffer::zeros_like(&m);
        for (x, y) in examples.iter().rev() {
            reverse_sum.add_assign(&m.per_example_gradient(x, *y).unwrap());
        }
        for i in 0..forward_sum.param_count() {
            assert!((forward_sum.get(i) - reverse_sum.get(i)).abs() < 1e-10);
        }
        // a batch of k identical examples sums to exactly k times one gradient
        let single = m
            .per_example_gradient(&examples[0].0, examples[0].1)
            .unwrap();
        let mut tripled = GradientBuffer::zeros_like(&m);
        for _ in 0..3 {
            tripled.add_assign(&single);
        }
        let mut scaled = single.clone();
        scaled.scale(3.0);
        for i in 0..tripled.param_count() {
            assert!((tripled.get(i) - scaled.get(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_takes_the_argmax() {
        let mut m = MlpModel::zeros(&[1, 2]).unwrap();
        m.set_param(2, 0.2); // bias[0]
        m.set_param(3, 0.9); // bias[1]
        assert_eq!(m.predict(&[0.0]).unwrap(), 1);
    }

    #[test]
    fn predict_breaks_ties_toward_the_lowest_index() {
        let m = MlpModel::zeros(&[2, 2]).unwrap();
        assert_eq!(m.predict(&[1.0, 1.0]).unwrap(), 0);
    }

    #[test]
    fn batch_predict_equals_row_by_row() {
        // loop-vs-batch equivalence oracle
        let m = MlpModel::new_seeded(&[5, 8, 3], 21).unwrap();
        let mut rng = rng::seeded(99);
        let mut mat = crate::data::Matrix::zeros(100, 5);
        for i in 0..100 {
            for v in mat.row_mut(i) {
                *v = rng.random_range(-2.0..2.0);
            }
        }
        let batch = m.predict_rows(&mat).unwrap();
        for (i, &predicted) in batch.iter().enumerate() {
            assert_eq!(predicted, m.predict(mat.row(i)).unwrap());
        }
    }

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[1.0, -2.0, 0.3, 4.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn predict_is_shift_invariant() {
        let m = MlpModel::new_seeded(&[3, 4, 3], 5).unwrap();
        let x = [0.2, -0.1, 0.7];
        let logits = m.forward(&x).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|v| v + 123.45).collect();
        assert_eq!(argmax(&logits), argmax(&shifted));
    }

    #[test]
    fn invalid_dims_are_rejected() {
        assert!(MlpModel::zeros(&[3]).is_err());
        assert!(MlpModel::zeros(&[3, 0, 2]).is_err());
        assert!(MlpModel::zeros(&[3, 1]).is_err());
    }
}
