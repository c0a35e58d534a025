//! Fully-connected ReLU network with a softmax output, trained by plain
//! mini-batch SGD on mean cross-entropy.
//!
//! Everything is `f64`. Training is deterministic: the order of epoch `e` is a
//! Fisher–Yates shuffle driven by `ChaCha8Rng` seeded with
//! `derive_seed(cfg.seed, [EPOCH, e])`, where `e` counts epochs globally. A run
//! split into several calls (see [`train_from_epoch`]) therefore sees exactly
//! the same batches as one long run.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, tags};

/// Layer widths from input to output. Hidden layers use ReLU, the output
/// layer softmax.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub widths: Vec<usize>,
}

impl Architecture {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let arch = Architecture { widths };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Config(
                "architecture needs input and output widths".into(),
            ));
        }
        if let Some(i) = self.widths.iter().position(|&w| w == 0) {
            return Err(Error::Config(format!("layer {i} has zero width")));
        }
        Ok(())
    }

    pub fn input(&self) -> usize {
        self.widths[0]
    }

    pub fn output(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

/// Dense layer. `weights[o][i]` connects input `i` to output `o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            weights: vec![vec![0.0; inputs]; outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Model parameters. JSON layout:
/// `{"architecture": {"widths": [...]}, "layers": [{"weights": [[row]...], "biases": [...]}, ...]}`
/// with one row-major weight array per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub architecture: Architecture,
    pub layers: Vec<Layer>,
}

impl ModelParams {
    /// All-zero parameters of the given shape.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let layers = arch
            .widths
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(ModelParams {
            architecture: arch.clone(),
            layers,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.architecture.output()
    }

    pub fn input_dim(&self) -> usize {
        self.architecture.input()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.biases.len() * (l.weights.first().map_or(0, Vec::len) + 1))
            .sum()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().flatten().chain(l.biases.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().flatten().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.architecture == other.architecture
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.biases.len() == b.biases.len()
                    && a.weights.len() == b.weights.len()
                    && a.weights
                        .iter()
                        .zip(&b.weights)
                        .all(|(x, y)| x.len() == y.len())
            })
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Layer activations: `[x, h1, ..., logits]`.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(acts.last().unwrap());
            if l != last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: ModelParams = serde_json::from_str(text)?;
        let expected = ModelParams::zeros(&params.architecture)?;
        if !params.same_shape(&expected) {
            return Err(Error::Data(
                "model JSON shapes do not match its architecture".into(),
            ));
        }
        if !params.is_finite() {
            return Err(Error::Data("model JSON holds non-finite values".into()));
        }
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Coefficient of the ½·l2·‖W‖² penalty on weights (not biases).
    #[serde(default)]
    pub l2: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be ≥ 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 must be ≥ 0, got {}", self.l2)));
        }
        Ok(())
    }
}

/// He-uniform initialization: weights ~ U(−√(6/fan_in), √(6/fan_in)), biases 0.
pub fn init_model(arch: &Architecture, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(arch)?;
    let mut rng = rng_from_seed(seed);
    for layer in &mut params.layers {
        let fan_in = layer.weights[0].len();
        let bound = init_bound(fan_in);
        for w in layer.weights.iter_mut().flatten() {
            *w = rng.random_range(-bound..bound);
        }
    }
    Ok(params)
}

pub fn init_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax_at(logits: &[f64], y: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits[y] - lse
}

/// Class probabilities for one input.
pub fn predict(params: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
    params.check_input(x)?;
    let acts = params.activations(x);
    Ok(softmax(acts.last().unwrap()))
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy of one labeled point.
pub fn point_loss(params: &ModelParams, x: &[f64], y: usize) -> Result<f64> {
    params.check_input(x)?;
    check_label(params, y)?;
    Ok(-log_softmax_at(params.activations(x).last().unwrap(), y))
}

/// Frobenius norm of ∂loss/∂W for the output layer's weights at one point.
///
/// The gradient is the outer product (p − e_y) hᵀ with h the last hidden
/// activation, so its norm is ‖p − e_y‖·‖h‖.
pub fn last_layer_grad_norm(params: &ModelParams, x: &[f64], y: usize) -> Result<f64> {
    params.check_input(x)?;
    check_label(params, y)?;
    let acts = params.activations(x);
    let p = softmax(acts.last().unwrap());
    let h = &acts[acts.len() - 2];
    let err: f64 = p
        .iter()
        .enumerate()
        .map(|(k, pk)| {
            let e = pk - if k == y { 1.0 } else { 0.0 };
            e * e
        })
        .sum();
    let hn: f64 = h.iter().map(|v| v * v).sum();
    Ok((err * hn).sqrt())
}

fn check_label(params: &ModelParams, y: usize) -> Result<()> {
    if y >= params.num_classes() {
        return Err(Error::Data(format!(
            "label {y} outside [0, {})",
            params.num_classes()
        )));
    }
    Ok(())
}

/// Mean cross-entropy over `batch` (plus ½·l2·‖W‖²) and its exact gradient,
/// shaped like `params`.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &[(&[f64], usize)],
    l2: f64,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let mut grad = ModelParams::zeros(&params.architecture)?;
    let mut loss = 0.0;
    for &(x, y) in batch {
        params.check_input(x)?;
        check_label(params, y)?;
        loss += accumulate_point(params, x, y, &mut grad);
    }
    let scale = 1.0 / batch.len() as f64;
    grad.values_mut().for_each(|g| *g *= scale);
    loss *= scale;

    if l2 > 0.0 {
        let mut penalty = 0.0;
        for (layer, g) in params.layers.iter().zip(grad.layers.iter_mut()) {
            for (row, grow) in layer.weights.iter().zip(g.weights.iter_mut()) {
                for (w, gw) in row.iter().zip(grow.iter_mut()) {
                    penalty += w * w;
                    *gw += l2 * w;
                }
            }
        }
        loss += 0.5 * l2 * penalty;
    }
    Ok((loss, grad))
}

/// Backpropagates one point into `grad` (summed, unscaled); returns its loss.
fn accumulate_point(params: &ModelParams, x: &[f64], y: usize, grad: &mut ModelParams) -> f64 {
    let acts = params.activations(x);
    let logits = acts.last().unwrap();
    let loss = -log_softmax_at(logits, y);
    let mut delta = softmax(logits);
    delta[y] -= 1.0;

    for l in (0..params.layers.len()).rev() {
        let input = &acts[l];
        let g = &mut grad.layers[l];
        for (o, d) in delta.iter().enumerate() {
            g.biases[o] += d;
            if *d != 0.0 {
                for (gw, a) in g.weights[o].iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
        }
        if l > 0 {
            let layer = &params.layers[l];
            let mut next = vec![0.0; input.len()];
            for (o, d) in delta.iter().enumerate() {
                for (n, w) in next.iter_mut().zip(&layer.weights[o]) {
                    *n += w * d;
                }
            }
            // ReLU derivative, taken as 0 at the kink
            for (n, a) in next.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *n = 0.0;
                }
            }
            delta = next;
        }
    }
    loss
}

/// Mini-batch SGD over `rows` of `ds` for `cfg.epochs` epochs.
/// Returns the trained parameters and the mean loss of each epoch.
pub fn train(
    params: ModelParams,
    ds: &TabularDataset,
    rows: &[usize],
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<f64>)> {
    train_from_epoch(params, ds, rows, cfg, 0)
}

/// Like [`train`], numbering epochs from `first_epoch` for shuffle seeding.
pub fn train_from_epoch(
    mut params: ModelParams,
    ds: &TabularDataset,
    rows: &[usize],
    cfg: &TrainConfig,
    first_epoch: usize,
) -> Result<(ModelParams, Vec<f64>)> {
    cfg.validate()?;
    if rows.is_empty() {
        return Err(Error::Data("no training rows".into()));
    }
    if ds.dim() != params.input_dim() {
        return Err(Error::Dimension {
            expected: params.input_dim(),
            actual: ds.dim(),
        });
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in first_epoch..first_epoch + cfg.epochs {
        let mut rng = rng_from_seed(derive_seed(cfg.seed, &[tags::EPOCH, epoch as u64]));
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], usize)> = chunk
                .iter()
                .map(|&p| (ds.row(rows[p]), ds.label(rows[p])))
                .collect();
            let (loss, grad) = loss_and_grad(&params, &batch, cfg.l2)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch} (learning rate {})",
                    cfg.learning_rate
                )));
            }
            epoch_loss += loss * chunk.len() as f64;
            for (p, g) in params.values_mut().zip(grad.values()) {
                *p -= cfg.learning_rate * g;
            }
        }
        history.push(epoch_loss / rows.len() as f64);
    }
    if !params.is_finite() {
        return Err(Error::Training("parameters became non-finite".into()));
    }
    Ok((params, history))
}

/// Fraction of `rows` whose argmax prediction equals the label.
pub fn accuracy(params: &ModelParams, ds: &TabularDataset, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for &i in rows {
        if argmax(&predict(params, ds.row(i))?) == ds.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / rows.len() as f64)
}
