use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{Error, Result};
use crate::seeds::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_initial: f64,
    /// Factor applied to the learning rate from `drop_epoch` on.
    pub lr_drop_factor: f64,
    pub drop_epoch: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_initial: 1e-3,
            lr_drop_factor: 0.1,
            drop_epoch: 40,
            batch_size: 256,
            epochs: 60,
            seed: 7,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.lr_initial > 0.0) {
            return bad("lr_initial must be positive");
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor < 1.0) {
            return bad("lr_drop_factor must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if epoch >= self.drop_epoch {
            self.lr_initial * self.lr_drop_factor
        } else {
            self.lr_initial
        }
    }
}

/// Adam moment estimates for every layer.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(model: &Mlp) -> Self {
        let zeros = Gradients {
            weights: model.layers.iter().map(|l| DMatrix::zeros(l.outputs(), l.inputs())).collect(),
            bias: model.layers.iter().map(|l| DVector::zeros(l.outputs())).collect(),
        };
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn update(&mut self, model: &mut Mlp, grads: &Gradients, lr: f64) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let rate = lr * c2.sqrt() / c1;
        let step = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (((p, g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= rate * *m / (v.sqrt() + eps * c2.sqrt());
            }
        };
        for (idx, layer) in model.layers.iter_mut().enumerate() {
            step(
                layer.weights.as_mut_slice(),
                grads.weights[idx].as_slice(),
                self.m.weights[idx].as_mut_slice(),
                self.v.weights[idx].as_mut_slice(),
            );
            step(
                layer.bias.as_mut_slice(),
                grads.bias[idx].as_slice(),
                self.m.bias[idx].as_mut_slice(),
                self.v.bias[idx].as_mut_slice(),
            );
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    /// Empty when no validation split was held out.
    pub validation_loss: Vec<f64>,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

/// Deterministic train/validation split of `n` samples.
pub fn split_indices(n: usize, cfg: &TrainConfig) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeds::rng(seeds::stream_seed(cfg.seed, Stream::Shuffle)));
    let n_val = ((n as f64) * cfg.validation_fraction).round() as usize;
    let n_val = n_val.min(n.saturating_sub(1));
    let mut val = idx.split_off(n - n_val);
    idx.sort_unstable();
    val.sort_unstable();
    (idx, val)
}

fn gather(rows: &[Vec<f64>], idx: &[usize]) -> DMatrix<f64> {
    let dim = rows[idx[0]].len();
    let mut m = DMatrix::zeros(dim, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        m.column_mut(c).copy_from_slice(&rows[i]);
    }
    m
}

fn mean_loss(model: &Mlp, features: &[Vec<f64>], labels: &[Vec<f64>], idx: &[usize]) -> f64 {
    let mut total = 0.0;
    for chunk in idx.chunks(1024) {
        let out = model.forward(&gather(features, chunk));
        total += (out - gather(labels, chunk)).norm_squared();
    }
    total / idx.len() as f64
}

/// Minibatch Adam on the mean squared error. Features must already be scaled.
pub fn train(model: &mut Mlp, features: &[Vec<f64>], labels: &[Vec<f64>], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Dimension(format!("{} feature rows, {} label rows", features.len(), labels.len())));
    }
    if features[0].len() != model.input_dim() || labels[0].len() != model.output_dim() {
        return Err(Error::Dimension(format!(
            "samples are {} -> {}, model is {} -> {}",
            features[0].len(),
            labels[0].len(),
            model.input_dim(),
            model.output_dim()
        )));
    }
    let (train_idx, val_idx) = split_indices(features.len(), cfg);
    let mut adam = Adam::new(model);
    let mut report = TrainReport::default();
    let mut order = train_idx.clone();
    let shuffle_seed = seeds::derive(seeds::stream_seed(cfg.seed, Stream::Shuffle), 1);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut seeds::rng(seeds::derive(shuffle_seed, epoch as u64)));
        let lr = cfg.learning_rate(epoch);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = model.loss_and_gradients(&gather(features, batch), &gather(labels, batch));
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_loss += loss * batch.len() as f64;
            adam.update(model, &grads, lr);
        }
        report.train_loss.push(epoch_loss / order.len() as f64);
        if !val_idx.is_empty() {
            let v = mean_loss(model, features, labels, &val_idx);
            if !v.is_finite() {
                return Err(Error::Diverged { epoch, loss: v });
            }
            report.validation_loss.push(v);
        }
        log::debug!("epoch {epoch}: train {:.3e}", report.train_loss[epoch]);
    }
    report.train_indices = train_idx;
    report.validation_indices = val_idx;
    Ok(report)
}
