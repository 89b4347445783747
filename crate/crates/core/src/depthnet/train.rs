use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{
    net_backward, net_forward, softmax_cross_entropy, update_running_stats, Grads, Mode, NetArch, NetParams,
};
use super::{Dataset, LabelSet};
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch: usize,
    pub base_lr: f64,
    /// The learning rate is multiplied by 0.1 every `step` iterations.
    pub step: usize,
    pub max_iters: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch: 256, base_lr: 0.01, step: 50_000, max_iters: 5_000, momentum: 0.9, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.batch >= 1 && self.step >= 1 && self.max_iters >= 1, || {
            "batch, step and max_iters must be >= 1".into()
        })?;
        ensure(self.base_lr > 0.0 && (0.0..1.0).contains(&self.momentum), || {
            format!("need base_lr > 0 and momentum in [0, 1), got {} / {}", self.base_lr, self.momentum)
        })
    }

    pub fn learning_rate(&self, iteration: usize) -> f64 {
        self.base_lr * 0.1f64.powi((iteration / self.step) as i32)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams<f32>,
    /// Mean mini-batch loss of every iteration.
    pub loss_trace: Vec<f32>,
}

fn momentum_step<D>(
    param: &mut ndarray::Array<f32, D>,
    vel: &mut ndarray::Array<f32, D>,
    grad: &ndarray::Array<f32, D>,
    mo: f32,
    lr: f32,
) where
    D: ndarray::Dimension,
{
    ndarray::Zip::from(param).and(vel).and(grad).for_each(|p, v, &g| {
        *v = mo * *v - lr * g;
        *p += *v;
    });
}

/// Mini-batch SGD with momentum on softmax cross-entropy. Batches walk
/// through seeded per-epoch permutations, so runs are reproducible.
pub fn net_train(dataset: &Dataset, arch: NetArch, tc: &TrainConfig) -> Result<TrainOutcome> {
    tc.validate()?;
    ensure(!dataset.is_empty(), || "dataset is empty".into())?;
    ensure(
        arch.patch == dataset.patch && arch.in_channels == dataset.channels && arch.n_labels == dataset.n_labels,
        || {
            format!(
                "architecture expects {}x{}x{} patches and {} labels; dataset has {}x{}x{} and {}",
                arch.patch,
                arch.patch,
                arch.in_channels,
                arch.n_labels,
                dataset.patch,
                dataset.patch,
                dataset.channels,
                dataset.n_labels
            )
        },
    )?;
    ensure(dataset.data.iter().all(|v| v.is_finite()), || "dataset holds non-finite values".into())?;
    let mut params = NetParams::<f32>::init(arch, tc.seed)?;
    let mut vel = Grads {
        conv_weight: params.convs.iter().map(|c| Array2::zeros(c.weight.dim())).collect(),
        gamma: params.convs.iter().map(|c| ndarray::Array1::zeros(c.gamma.len())).collect(),
        beta: params.convs.iter().map(|c| ndarray::Array1::zeros(c.beta.len())).collect(),
        fc1: super::net::Dense {
            weight: Array2::zeros(params.fc1.weight.dim()),
            bias: ndarray::Array1::zeros(params.fc1.bias.len()),
        },
        fc2: super::net::Dense {
            weight: Array2::zeros(params.fc2.weight.dim()),
            bias: ndarray::Array1::zeros(params.fc2.bias.len()),
        },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let batch = tc.batch.min(dataset.len());
    let mo = tc.momentum as f32;
    let mut loss_trace = Vec::with_capacity(tc.max_iters);

    for it in 0..tc.max_iters {
        let mut idx = Vec::with_capacity(batch);
        while idx.len() < batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let (x, y) = dataset.batch(&idx);
        let (logits, cache) = net_forward(&params, &x, Mode::Train)?;
        let cache = cache.unwrap();
        let (loss, dlogits) = softmax_cross_entropy(&logits, &y);
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { iteration: it, loss: loss as f64 });
        }
        loss_trace.push(loss);
        let g = net_backward(&params, &cache, &dlogits);
        let lr = tc.learning_rate(it) as f32;
        for l in 0..params.convs.len() {
            let c = &mut params.convs[l];
            momentum_step(&mut c.weight, &mut vel.conv_weight[l], &g.conv_weight[l], mo, lr);
            momentum_step(&mut c.gamma, &mut vel.gamma[l], &g.gamma[l], mo, lr);
            momentum_step(&mut c.beta, &mut vel.beta[l], &g.beta[l], mo, lr);
        }
        momentum_step(&mut params.fc1.weight, &mut vel.fc1.weight, &g.fc1.weight, mo, lr);
        momentum_step(&mut params.fc1.bias, &mut vel.fc1.bias, &g.fc1.bias, mo, lr);
        momentum_step(&mut params.fc2.weight, &mut vel.fc2.weight, &g.fc2.weight, mo, lr);
        momentum_step(&mut params.fc2.bias, &mut vel.fc2.bias, &g.fc2.bias, mo, lr);
        update_running_stats(&mut params, &cache.batch_stats);
        if !params.is_finite() {
            return Err(Error::TrainingDiverged { iteration: it, loss: f64::NAN });
        }
        if (it + 1) % 100 == 0 {
            log::info!("iteration {}: loss {loss:.4}, lr {lr:.1e}", it + 1);
        }
    }
    Ok(TrainOutcome { params, loss_trace })
}

/// Held-out scores of a trained network.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[[truth, predicted]]`
    pub confusion: Array2<usize>,
}

impl Evaluation {
    /// Fraction of misclassified samples whose prediction is adjacent in depth to the truth.
    pub fn adjacent_error_fraction(&self, labels: &LabelSet) -> f64 {
        let (mut adj, mut total) = (0usize, 0usize);
        for ((t, p), &n) in self.confusion.indexed_iter() {
            if t != p {
                total += n;
                if labels.adjacent(t, p) {
                    adj += n;
                }
            }
        }
        if total == 0 {
            1.0
        } else {
            adj as f64 / total as f64
        }
    }
}

pub fn evaluate(params: &NetParams<f32>, dataset: &Dataset) -> Result<Evaluation> {
    ensure(!dataset.is_empty(), || "dataset is empty".into())?;
    let l = params.arch.n_labels;
    let mut confusion = Array2::zeros((l, l));
    let idx: Vec<usize> = (0..dataset.len()).collect();
    for chunk in idx.chunks(256) {
        let (x, y) = dataset.batch(chunk);
        let (logits, _) = net_forward(params, &x, Mode::Eval)?;
        for (row, &t) in logits.rows().into_iter().zip(&y) {
            let p = row.iter().enumerate().fold(0, |b, (k, &v)| if v > row[b] { k } else { b });
            confusion[[t, p]] += 1;
        }
    }
    let correct: usize = (0..l).map(|k| confusion[[k, k]]).sum();
    Ok(Evaluation { accuracy: correct as f64 / dataset.len() as f64, confusion })
}
