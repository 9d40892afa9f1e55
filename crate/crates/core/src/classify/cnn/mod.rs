//! Small convolutional network trained with Adam.
//!
//! Layer stack: conv 3×3 (ReLU) → max-pool 2×2 → conv 3×3 (ReLU) → max-pool
//! 2×2 → flatten → dense (ReLU) → dense → softmax, or normalized per-class
//! sigmoids when [`FinalActivation::Sigmoid`] is selected. Convolutions use
//! valid padding and stride 1.
//!
//! Backpropagation is written out by hand. Convolution gradients are computed
//! per sample (in parallel) and summed in sample order, so a training run is
//! reproducible regardless of thread count.

pub mod layers;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, ModelError};
use crate::{par, seed};
use layers::*;

pub const KERNEL: usize = 3;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalActivation {
    #[default]
    Softmax,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnArchitecture {
    pub input_size: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub dense_units: usize,
    pub n_classes: usize,
    pub final_activation: FinalActivation,
}

impl Default for CnnArchitecture {
    fn default() -> Self {
        Self {
            input_size: 64,
            conv1_filters: 32,
            conv2_filters: 64,
            dense_units: 128,
            n_classes: 2,
            final_activation: FinalActivation::Softmax,
        }
    }
}

/// Spatial sizes through the stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub input: usize,
    pub conv1: usize,
    pub pool1: usize,
    pub conv2: usize,
    pub pool2: usize,
    pub flat: usize,
}

impl CnnArchitecture {
    pub fn with_classes(n_classes: usize) -> Self {
        Self {
            n_classes,
            ..Self::default()
        }
    }

    pub fn dims(&self) -> Result<Dims, ModelError> {
        let s = self.input_size;
        let conv1 = s.checked_sub(KERNEL - 1).filter(|&v| v >= 2);
        let pool1 = conv1.map(|v| v / 2);
        let conv2 = pool1.and_then(|v| v.checked_sub(KERNEL - 1)).filter(|&v| v >= 2);
        match (conv1, pool1, conv2) {
            (Some(conv1), Some(pool1), Some(conv2)) if self.n_classes >= 1 => {
                let pool2 = conv2 / 2;
                Ok(Dims {
                    input: s,
                    conv1,
                    pool1,
                    conv2,
                    pool2,
                    flat: self.conv2_filters * pool2 * pool2,
                })
            }
            _ => Err(ModelError::ShapeMismatch(format!(
                "input {s}×{s} cannot pass through two conv+pool stages"
            ))),
        }
    }

    /// Lengths of the eight parameter tensors, in storage order:
    /// conv1 weight/bias, conv2 weight/bias, dense weight/bias, output weight/bias.
    pub fn tensor_lengths(&self) -> Result<[usize; 8], ModelError> {
        let d = self.dims()?;
        let (c1, c2, h, n) = (self.conv1_filters, self.conv2_filters, self.dense_units, self.n_classes);
        Ok([
            c1 * KERNEL * KERNEL,
            c1,
            c2 * c1 * KERNEL * KERNEL,
            c2,
            h * d.flat,
            h,
            n * h,
            n,
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub arch: CnnArchitecture,
    /// See [`CnnArchitecture::tensor_lengths`] for the order.
    pub params: Vec<Vec<f64>>,
    pub adam: AdamState,
}

struct SampleCache {
    a1: Vec<f64>,
    i1: Vec<u32>,
    p1: Vec<f64>,
    a2: Vec<f64>,
    i2: Vec<u32>,
    feat: Vec<f64>,
}

struct BatchPass {
    caches: Vec<SampleCache>,
    feats: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl CnnModel {
    /// He-uniform initialisation for the ReLU layers, Glorot-uniform for the
    /// output layer, zero biases.
    pub fn new(arch: CnnArchitecture, seed: u64) -> Result<Self, ModelError> {
        let lens = arch.tensor_lengths()?;
        let d = arch.dims()?;
        let mut rng = seed::derived_rng(seed, &["model", "init"]);
        let fans = [
            (KERNEL * KERNEL, None),
            (arch.conv1_filters * KERNEL * KERNEL, None),
            (d.flat, None),
            (arch.dense_units, Some(arch.n_classes)),
        ];
        let mut params = Vec::with_capacity(8);
        for (layer, &(fan_in, fan_out)) in fans.iter().enumerate() {
            let limit = match fan_out {
                None => (6.0 / fan_in as f64).sqrt(),
                Some(fo) => (6.0 / (fan_in + fo) as f64).sqrt(),
            };
            params.push((0..lens[2 * layer]).map(|_| rng.random_range(-limit..limit)).collect());
            params.push(vec![0.0; lens[2 * layer + 1]]);
        }
        Ok(Self::from_params(arch, params))
    }

    pub fn from_params(arch: CnnArchitecture, params: Vec<Vec<f64>>) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            arch,
            adam: AdamState {
                m: zeros.clone(),
                v: zeros,
                step: 0,
            },
            params,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    fn conv_stack(&self, x: &[f64]) -> SampleCache {
        let d = self.arch.dims().expect("validated at construction");
        let (c1, c2) = (self.arch.conv1_filters, self.arch.conv2_filters);
        let p = &self.params;
        let mut a1 = conv2d_forward(x, 1, d.input, d.input, &p[0], &p[1], c1, KERNEL);
        relu(&mut a1);
        let (p1, i1) = maxpool2_forward(&a1, c1, d.conv1, d.conv1);
        let mut a2 = conv2d_forward(&p1, c1, d.pool1, d.pool1, &p[2], &p[3], c2, KERNEL);
        relu(&mut a2);
        let (feat, i2) = maxpool2_forward(&a2, c2, d.conv2, d.conv2);
        SampleCache { a1, i1, p1, a2, i2, feat }
    }

    fn check_batch(&self, batch: &[&[f64]]) -> Result<(), ModelError> {
        let want = self.arch.input_size * self.arch.input_size;
        match batch.iter().find(|x| x.len() != want) {
            Some(x) => Err(ModelError::ShapeMismatch(format!("image has {} pixels, expected {want}", x.len()))),
            None => Ok(()),
        }
    }

    fn forward_pass(&self, batch: &[&[f64]]) -> BatchPass {
        let d = self.arch.dims().expect("validated at construction");
        let (h, n) = (self.arch.dense_units, self.arch.n_classes);
        let caches = par::map(batch, |x| self.conv_stack(x));
        let feats: Vec<f64> = caches.iter().flat_map(|c| c.feat.iter().copied()).collect();
        let mut hidden = dense_forward(&feats, batch.len(), d.flat, &self.params[4], &self.params[5], h);
        relu(&mut hidden);
        let logits = dense_forward(&hidden, batch.len(), h, &self.params[6], &self.params[7], n);
        BatchPass {
            caches,
            feats,
            hidden,
            logits,
        }
    }

    fn probabilities(&self, logits: &[f64]) -> Vec<Vec<f64>> {
        logits
            .chunks(self.arch.n_classes)
            .map(|row| match self.arch.final_activation {
                FinalActivation::Softmax => softmax(row),
                FinalActivation::Sigmoid => {
                    let s: Vec<f64> = row.iter().map(|&z| sigmoid(z)).collect();
                    let t: f64 = s.iter().sum();
                    s.into_iter().map(|v| v / t).collect()
                }
            })
            .collect()
    }

    /// Class-probability rows for a batch of images (each `input_size²`
    /// pixels, row-major).
    pub fn predict_proba(&self, images: &[&[f64]]) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_batch(images)?;
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(32) {
            let pass = self.forward_pass(chunk);
            out.extend(self.probabilities(&pass.logits));
        }
        Ok(out)
    }

    fn loss_of(&self, logits: &[f64], labels: &[usize]) -> (f64, Vec<f64>) {
        match self.arch.final_activation {
            FinalActivation::Softmax => softmax_cross_entropy(logits, labels, self.arch.n_classes),
            FinalActivation::Sigmoid => sigmoid_bce(logits, labels, self.arch.n_classes),
        }
    }

    /// Mean loss over the batch and its gradient for every parameter tensor.
    pub fn loss_and_gradients(&self, batch: &[&[f64]], labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>), ModelError> {
        let (loss, grads, _) = self.backprop(batch, labels)?;
        Ok((loss, grads))
    }

    /// Mean loss without gradients.
    pub fn loss(&self, batch: &[&[f64]], labels: &[usize]) -> Result<f64, ModelError> {
        self.validate_batch(batch, labels)?;
        let mut total = 0.0;
        for (chunk, lab) in batch.chunks(32).zip(labels.chunks(32)) {
            let pass = self.forward_pass(chunk);
            total += self.loss_of(&pass.logits, lab).0 * chunk.len() as f64;
        }
        Ok(total / batch.len() as f64)
    }

    fn validate_batch(&self, batch: &[&[f64]], labels: &[usize]) -> Result<(), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        if batch.len() != labels.len() {
            return Err(ModelError::ShapeMismatch(format!("{} images, {} labels", batch.len(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.arch.n_classes) {
            return Err(ModelError::ShapeMismatch(format!("label {bad} out of range")));
        }
        self.check_batch(batch)
    }

    /// Returns `(loss, gradients, number of correct argmax predictions)`.
    fn backprop(&self, batch: &[&[f64]], labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>, usize), ModelError> {
        self.validate_batch(batch, labels)?;
        let d = self.arch.dims()?;
        let (c1, c2, h, n) = (
            self.arch.conv1_filters,
            self.arch.conv2_filters,
            self.arch.dense_units,
            self.arch.n_classes,
        );
        let b = batch.len();
        let p = &self.params;
        let pass = self.forward_pass(batch);
        let correct = pass
            .logits
            .chunks(n)
            .zip(labels)
            .filter(|(row, &y)| argmax(row) == y)
            .count();
        let (loss, g_logits) = self.loss_of(&pass.logits, labels);

        let (gw4, gb4, mut g_hidden) = dense_backward(&pass.hidden, b, h, &p[6], n, &g_logits);
        relu_backward(&mut g_hidden, &pass.hidden);
        let (gw3, gb3, g_feats) = dense_backward(&pass.feats, b, d.flat, &p[4], h, &g_hidden);

        let per_sample = par::map_range(b, |s| {
            let cache = &pass.caches[s];
            let g_feat = &g_feats[s * d.flat..(s + 1) * d.flat];
            let mut g_a2 = maxpool2_backward(g_feat, &cache.i2, cache.a2.len());
            relu_backward(&mut g_a2, &cache.a2);
            let g2 = conv2d_backward(&cache.p1, c1, d.pool1, d.pool1, &p[2], c2, KERNEL, &g_a2, true);
            let mut g_a1 = maxpool2_backward(g2.input.as_ref().expect("requested"), &cache.i1, cache.a1.len());
            relu_backward(&mut g_a1, &cache.a1);
            let g1 = conv2d_backward(batch[s], 1, d.input, d.input, &p[0], c1, KERNEL, &g_a1, false);
            [g1.weight, g1.bias, g2.weight, g2.bias]
        });
        let mut conv_grads: [Vec<f64>; 4] = [
            vec![0.0; p[0].len()],
            vec![0.0; p[1].len()],
            vec![0.0; p[2].len()],
            vec![0.0; p[3].len()],
        ];
        for sample in &per_sample {
            for (acc, g) in conv_grads.iter_mut().zip(sample) {
                acc.iter_mut().zip(g).for_each(|(a, v)| *a += v);
            }
        }
        let [gw1, gb1, gw2, gb2] = conv_grads;
        Ok((loss, vec![gw1, gb1, gw2, gb2, gw3, gb3, gw4, gb4], correct))
    }

    /// Bias-corrected Adam update.
    pub fn apply_adam(&mut self, grads: &[Vec<f64>], lr: f64) {
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (((w, g), m), v) in self
            .params
            .iter_mut()
            .zip(grads)
            .zip(self.adam.m.iter_mut())
            .zip(self.adam.v.iter_mut())
        {
            for i in 0..w.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
            }
        }
    }

    /// One optimisation step; returns the loss measured before the update.
    pub fn train_step(&mut self, batch: &[&[f64]], labels: &[usize], lr: f64) -> Result<f64, ModelError> {
        self.step_counting(batch, labels, lr).map(|(loss, _)| loss)
    }

    fn step_counting(&mut self, batch: &[&[f64]], labels: &[usize], lr: f64) -> Result<(f64, usize), ModelError> {
        let (loss, grads, correct) = self.backprop(batch, labels)?;
        if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(ModelError::NonFiniteLoss);
        }
        self.apply_adam(&grads, lr);
        Ok((loss, correct))
    }

    /// One pass over the data in shuffled mini-batches. Returns the mean
    /// pre-update loss and the running training accuracy.
    pub fn train_epoch(
        &mut self,
        images: &[&[f64]],
        labels: &[usize],
        batch_size: usize,
        lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, f64), ModelError> {
        self.validate_batch(images, labels)?;
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(rng);
        let (mut total, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(batch_size.max(1)) {
            let xb: Vec<&[f64]> = chunk.iter().map(|&i| images[i]).collect();
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, ok) = self.step_counting(&xb, &yb, lr)?;
            total += loss * chunk.len() as f64;
            correct += ok;
        }
        let n = images.len() as f64;
        Ok((total / n, correct as f64 / n))
    }

    /// Accuracy of argmax predictions.
    pub fn accuracy(&self, images: &[&[f64]], labels: &[usize]) -> Result<f64, ModelError> {
        let probs = self.predict_proba(images)?;
        let ok = probs.iter().zip(labels).filter(|(p, &y)| argmax(p) == y).count();
        Ok(ok as f64 / labels.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            patience: 3,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Trains with early stopping on validation loss and returns the weights
/// from the best validation epoch. With an empty validation set every epoch
/// runs and the final weights are kept.
pub fn cnn_train(
    mut model: CnnModel,
    train: (&[&[f64]], &[usize]),
    val: (&[&[f64]], &[usize]),
    config: &TrainConfig,
    seed: u64,
) -> Result<(CnnModel, TrainHistory), ModelError> {
    let mut rng = seed::derived_rng(seed, &["model", "shuffle"]);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, CnnModel)> = None;
    let mut wait = 0;
    for epoch in 1..=config.epochs {
        let (train_loss, train_accuracy) = model.train_epoch(train.0, train.1, config.batch_size, config.learning_rate, &mut rng)?;
        let (val_loss, val_accuracy) = if val.0.is_empty() {
            (None, None)
        } else {
            (Some(model.loss(val.0, val.1)?), Some(model.accuracy(val.0, val.1)?))
        };
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
        let Some(vl) = val_loss else {
            history.best_epoch = epoch;
            continue;
        };
        if !vl.is_finite() {
            return Err(ModelError::NonFiniteLoss);
        }
        if best.as_ref().is_none_or(|(b, _)| vl < *b) {
            best = Some((vl, model.clone()));
            history.best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait >= config.patience {
                history.stopped_early = epoch < config.epochs;
                break;
            }
        }
    }
    if let Some((_, m)) = best {
        model = m;
    }
    Ok((model, history))
}
