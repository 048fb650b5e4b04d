use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureVector, FEATURE_COUNT};

use super::{BinaryClassifier, Dataset, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_layers: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Seeds weight initialisation and minibatch order.
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_layers: vec![32],
            epochs: 500,
            learning_rate: 0.01,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.hidden_layers.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// `weights[j][i]` connects input `i` to unit `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        DenseLayer {
            weights: vec![vec![0.0; n_in]; n_out],
            biases: vec![0.0; n_out],
        }
    }

    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .iter()
                .zip(&self.biases)
                .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b),
        );
    }
}

/// Min-max scaling of one feature: `(x - offset) / divisor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub offset: f64,
    pub divisor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// Input width first, 1 last.
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<DenseLayer>,
    pub hidden_activation: String,
    pub output_activation: String,
    pub feature_scaling: Vec<FeatureScaling>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-log sigmoid(z)` for y = 1, `-log(1 - sigmoid(z))` for y = 0.
fn cross_entropy(z: f64, y: bool) -> f64 {
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    softplus - if y { z } else { 0.0 }
}

impl MlpModel {
    /// Network with all weights and biases zero and identity scaling.
    pub fn zeros(hidden_layers: &[usize]) -> Self {
        let mut layer_sizes = vec![FEATURE_COUNT];
        layer_sizes.extend_from_slice(hidden_layers);
        layer_sizes.push(1);
        let layers = layer_sizes
            .windows(2)
            .map(|w| DenseLayer::zeros(w[0], w[1]))
            .collect();
        MlpModel {
            layer_sizes,
            layers,
            hidden_activation: "relu".into(),
            output_activation: "logistic".into(),
            feature_scaling: vec![
                FeatureScaling {
                    offset: 0.0,
                    divisor: 1.0
                };
                FEATURE_COUNT
            ],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.layer_sizes.len() < 2
            || self.layer_sizes[0] != FEATURE_COUNT
            || self.layer_sizes.last() != Some(&1)
        {
            return Err(format!("layer_sizes {:?} must run from 37 to 1", self.layer_sizes));
        }
        if self.layers.len() != self.layer_sizes.len() - 1 {
            return Err("layer count does not match layer_sizes".into());
        }
        for (l, (layer, w)) in self.layers.iter().zip(self.layer_sizes.windows(2)).enumerate() {
            if layer.weights.len() != w[1]
                || layer.biases.len() != w[1]
                || layer.weights.iter().any(|row| row.len() != w[0])
            {
                return Err(format!("layer {l} shape does not match {}x{}", w[1], w[0]));
            }
            let finite = layer.biases.iter().chain(layer.weights.iter().flatten()).all(|v| v.is_finite());
            if !finite {
                return Err(format!("layer {l} has non-finite parameters"));
            }
        }
        if self.hidden_activation != "relu" || self.output_activation != "logistic" {
            return Err("only relu hidden and logistic output activations are supported".into());
        }
        if self.feature_scaling.len() != FEATURE_COUNT
            || self
                .feature_scaling
                .iter()
                .any(|s| !(s.divisor > 0.0 && s.divisor.is_finite() && s.offset.is_finite()))
        {
            return Err("feature_scaling needs 37 entries with positive divisors".into());
        }
        Ok(())
    }

    pub fn scale(&self, x: &FeatureVector) -> Vec<f64> {
        x.as_slice()
            .iter()
            .zip(&self.feature_scaling)
            .map(|(v, s)| (v - s.offset) / s.divisor)
            .collect()
    }

    /// Pre-activations and activations of every layer for a scaled input.
    fn forward_trace(&self, input: &[f64]) -> (Vec<Vec<f64>>, f64) {
        let mut activations = vec![input.to_vec()];
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward(&activations[l], &mut z);
            if l == last {
                return (activations, z[0]);
            }
            activations.push(z.iter().map(|v| v.max(0.0)).collect());
        }
        unreachable!("network has an output layer")
    }

    /// Output logit for a raw feature vector.
    pub fn logit(&self, x: &FeatureVector) -> f64 {
        self.forward_trace(&self.scale(x)).1
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn n_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.biases.len() * (l.weights.first().map_or(0, Vec::len) + 1))
            .sum()
    }

    /// Parameters flattened layer by layer: weights row-major, then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_parameters());
        for layer in &self.layers {
            for row in &layer.weights {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    /// Inverse of [`parameters`](Self::parameters).
    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_parameters(), "parameter count");
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for row in &mut layer.weights {
                for w in row.iter_mut() {
                    *w = it.next().unwrap_or_default();
                }
            }
            for b in &mut layer.biases {
                *b = it.next().unwrap_or_default();
            }
        }
    }

    /// Mean cross-entropy over `rows` and its gradient with respect to
    /// [`parameters`](Self::parameters). Inputs go through the model's scaling.
    pub fn loss_and_gradient(&self, rows: &[(FeatureVector, bool)]) -> (f64, Vec<f64>) {
        let scaled: Vec<(Vec<f64>, bool)> = rows.iter().map(|(x, y)| (self.scale(x), *y)).collect();
        self.scaled_loss_and_gradient(&scaled)
    }

    fn scaled_loss_and_gradient(&self, rows: &[(Vec<f64>, bool)]) -> (f64, Vec<f64>) {
        let mut grads: Vec<DenseLayer> = self
            .layer_sizes
            .windows(2)
            .map(|w| DenseLayer::zeros(w[0], w[1]))
            .collect();
        let n = rows.len().max(1) as f64;
        let mut loss = 0.0;
        for (x, y) in rows {
            let (acts, z_out) = self.forward_trace(x);
            loss += cross_entropy(z_out, *y);
            let mut delta = vec![(sigmoid(z_out) - if *y { 1.0 } else { 0.0 }) / n];
            for l in (0..self.layers.len()).rev() {
                let input = &acts[l];
                let g = &mut grads[l];
                for (j, d) in delta.iter().enumerate() {
                    g.biases[j] += d;
                    for (gw, a) in g.weights[j].iter_mut().zip(input) {
                        *gw += d * a;
                    }
                }
                if l == 0 {
                    break;
                }
                // ReLU derivative: activations are positive exactly where the
                // pre-activation was.
                let layer = &self.layers[l];
                delta = (0..input.len())
                    .map(|i| {
                        if input[i] > 0.0 {
                            delta.iter().enumerate().map(|(j, d)| d * layer.weights[j][i]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        let mut flat = Vec::with_capacity(self.n_parameters());
        for g in &grads {
            for row in &g.weights {
                flat.extend_from_slice(row);
            }
            flat.extend_from_slice(&g.biases);
        }
        (loss / n, flat)
    }
}

impl BinaryClassifier for MlpModel {
    fn predict_proba(&self, x: &FeatureVector) -> f64 {
        MlpModel::predict_proba(self, x)
    }

    fn decide(&self, p: f64) -> bool {
        p >= 0.5
    }
}

pub fn predict_proba_mlp(model: &MlpModel, x: &FeatureVector) -> f64 {
    model.predict_proba(x)
}

fn fit_scaling(data: &Dataset) -> Vec<FeatureScaling> {
    (0..FEATURE_COUNT)
        .map(|f| {
            let (lo, hi) = data.rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| {
                (lo.min(x[f]), hi.max(x[f]))
            });
            FeatureScaling {
                offset: lo,
                divisor: (hi - lo).max(1e-12),
            }
        })
        .collect()
}

/// Minibatch Adam on mean cross-entropy. Glorot-uniform initialisation;
/// deterministic in `config.seed`.
pub fn train_mlp(data: &Dataset, config: &MlpConfig) -> Result<MlpModel, ModelError> {
    config.validate()?;
    data.check_two_classes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::zeros(&config.hidden_layers);
    model.feature_scaling = fit_scaling(data);
    for layer in &mut model.layers {
        let n_in = layer.weights[0].len();
        let n_out = layer.biases.len();
        let a = (6.0 / (n_in + n_out) as f64).sqrt();
        for row in &mut layer.weights {
            for w in row.iter_mut() {
                *w = rng.gen_range(-a..a);
            }
        }
    }

    let scaled: Vec<(Vec<f64>, bool)> = data.rows.iter().map(|(x, y)| (model.scale(x), *y)).collect();
    let mut params = model.parameters();
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..scaled.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| scaled[i].clone()));
            let (_, grad) = model.scaled_loss_and_gradient(&batch);
            step += 1;
            let c1 = 1.0 - beta1.powi(step);
            let c2 = 1.0 - beta2.powi(step);
            for k in 0..params.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
                params[k] -= config.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
            model.set_parameters(&params);
        }
    }
    Ok(model)
}
