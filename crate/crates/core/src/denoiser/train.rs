//! Training loop for the learned proximal operator.
//!
//! Objective per sample: `||r(x_noisy) - x||^2 + w * ||dr(x)/dx||_F^2`
//! with `w = penalty_weight` (sigma squared by default) and the Jacobian
//! term estimated by finite-difference Hutchinson probes. Gradients of the
//! penalty flow through both proximator evaluations.
//!
//! Batch items are evaluated in parallel but reduced in index order, so the
//! result is a pure function of `(dataset, configs, seed)` regardless of
//! worker count. Worker threads keep their tapes and scratch buffers in a
//! thread-local pool; after warmup the hot loop does not allocate.

use std::cell::RefCell;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::phantom::Dataset;
use crate::rng::{purpose, Rng};

use super::net::{
    image_to_planes, prox_backward_planes, prox_forward_planes, ProxTape, Workspace,
};
use super::{DenoiserWeights, NetConfig, TrainConfig, TrainMeta};

/// Final weights plus the per-epoch mean training loss.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: DenoiserWeights,
    pub loss_trace: Vec<f64>,
}

#[derive(Default)]
struct Scratch {
    ws: Workspace,
    tape_main: ProxTape,
    tape_base: ProxTape,
    tape_probe: ProxTape,
    noisy: Vec<f64>,
    restored: Vec<f64>,
    upstream: Vec<f64>,
    base: Vec<f64>,
    base_upstream: Vec<f64>,
    perturbed: Vec<f64>,
    delta: Vec<f64>,
    d_v: Vec<f64>,
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

struct ItemResult {
    grads: Vec<f64>,
    loss: f64,
}

/// One sample's loss and parameter gradients.
fn process_item(
    weights: &DenoiserWeights,
    clean: &[f64],
    h: usize,
    w: usize,
    cfg: &TrainConfig,
    stream_index: u64,
    with_grads: bool,
) -> ItemResult {
    SCRATCH.with(|cell| {
        let s = &mut *cell.borrow_mut();
        let mut grads = vec![0.0; if with_grads { weights.params.len() } else { 0 }];
        // Scratch buffers only grow; a worker may have processed larger
        // images before, so every read below is bounded to this item's
        // component count.
        let n = clean.len();

        // Fresh noise per (epoch, image), independent per real component.
        let mut noise_rng = Rng::from_stream(cfg.seed, purpose::TRAIN_NOISE, stream_index);
        s.noisy.clear();
        s.noisy
            .extend(clean.iter().map(|&v| v + cfg.noise_sigma * noise_rng.normal()));

        // Reconstruction term.
        prox_forward_planes(weights, &s.noisy, h, w, &mut s.ws, Some(&mut s.tape_main), &mut s.restored);
        let mut loss: f64 = s.restored[..n]
            .iter()
            .zip(clean.iter())
            .map(|(r, x)| (r - x) * (r - x))
            .sum();
        if with_grads {
            s.upstream.clear();
            s.upstream
                .extend(s.restored[..n].iter().zip(clean.iter()).map(|(r, x)| 2.0 * (r - x)));
            prox_backward_planes(weights, &s.tape_main, &s.upstream, h, w, &mut s.ws, &mut grads, &mut s.d_v);
        }

        // Penalty term, evaluated at the clean image. The base evaluation
        // r(x) is shared across probes; its backward runs once with the
        // summed upstream (backward is linear in the upstream gradient).
        if cfg.penalty_weight > 0.0 {
            let mut probe_rng = Rng::from_stream(cfg.seed, purpose::TRAIN_PROBE, stream_index);
            if with_grads {
                prox_forward_planes(weights, clean, h, w, &mut s.ws, Some(&mut s.tape_base), &mut s.base);
            } else {
                prox_forward_planes(weights, clean, h, w, &mut s.ws, None, &mut s.base);
            }

            let eps = cfg.probe_eps;
            let scale = 2.0 * cfg.penalty_weight / (cfg.probes as f64 * eps * eps);
            let mut penalty = 0.0;
            s.base_upstream.clear();
            s.base_upstream.resize(n, 0.0);
            for _ in 0..cfg.probes {
                s.perturbed.clear();
                s.perturbed
                    .extend(clean.iter().map(|&x| x + eps * probe_rng.normal()));
                if with_grads {
                    prox_forward_planes(
                        weights,
                        &s.perturbed,
                        h,
                        w,
                        &mut s.ws,
                        Some(&mut s.tape_probe),
                        &mut s.delta,
                    );
                } else {
                    prox_forward_planes(weights, &s.perturbed, h, w, &mut s.ws, None, &mut s.delta);
                }
                for (d, &b) in s.delta[..n].iter_mut().zip(s.base[..n].iter()) {
                    *d -= b;
                }
                penalty += s.delta[..n].iter().map(|d| d * d).sum::<f64>() / (eps * eps);
                if with_grads {
                    s.upstream.clear();
                    s.upstream.extend(s.delta[..n].iter().map(|d| scale * d));
                    prox_backward_planes(
                        weights,
                        &s.tape_probe,
                        &s.upstream,
                        h,
                        w,
                        &mut s.ws,
                        &mut grads,
                        &mut s.d_v,
                    );
                    for (bu, &d) in s.base_upstream.iter_mut().zip(s.delta[..n].iter()) {
                        *bu -= scale * d;
                    }
                }
            }
            if with_grads {
                prox_backward_planes(
                    weights,
                    &s.tape_base,
                    &s.base_upstream,
                    h,
                    w,
                    &mut s.ws,
                    &mut grads,
                    &mut s.d_v,
                );
            }
            loss += cfg.penalty_weight * penalty / cfg.probes as f64;
        }

        ItemResult { grads, loss }
    })
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize, lr: f64) -> Self {
        Adam { m: vec![0.0; len], v: vec![0.0; len], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Trains the proximator on a phantom dataset; returns the weights and the
/// per-epoch mean loss trace.
pub fn train(dataset: &Dataset, net_config: &NetConfig, train_config: &TrainConfig) -> Result<TrainOutcome> {
    net_config.validate()?;
    train_config.validate()?;
    if dataset.images.is_empty() {
        return Err(Error::Parameter("training dataset is empty".into()));
    }
    let (h, w) = (dataset.images[0].height(), dataset.images[0].width());
    for img in &dataset.images {
        if img.height() != h || img.width() != w {
            return Err(Error::Dimension("training images must share one size".into()));
        }
    }
    let planes: Vec<Vec<f64>> = dataset.images.iter().map(image_to_planes).collect();
    let n = planes.len();

    let mut weights = DenoiserWeights::init(net_config.clone(), train_config.seed)?;
    let mut adam = Adam::new(weights.params.len(), train_config.learning_rate);
    let mut trace = Vec::with_capacity(train_config.epochs);

    for epoch in 0..train_config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        Rng::from_stream(train_config.seed, purpose::TRAIN_SHUFFLE, epoch as u64).shuffle(&mut order);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(train_config.batch_size) {
            let results: Vec<ItemResult> = batch
                .par_iter()
                .map(|&idx| {
                    let stream_index = epoch as u64 * n as u64 + idx as u64;
                    process_item(&weights, &planes[idx], h, w, train_config, stream_index, true)
                })
                .collect();

            let inv = 1.0 / batch.len() as f64;
            let mut batch_grads = vec![0.0; weights.params.len()];
            let mut batch_loss = 0.0;
            for item in &results {
                batch_loss += item.loss;
                for (acc, &g) in batch_grads.iter_mut().zip(item.grads.iter()) {
                    *acc += g;
                }
            }
            batch_loss *= inv;
            for g in batch_grads.iter_mut() {
                *g *= inv;
            }

            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged (non-finite loss) at epoch {epoch}"
                )));
            }
            adam.step(&mut weights.params, &batch_grads);
            epoch_loss += batch_loss * batch.len() as f64;
        }
        trace.push(epoch_loss / n as f64);
    }

    weights.meta = TrainMeta {
        sigma: train_config.noise_sigma,
        epochs: train_config.epochs,
        seed: train_config.seed,
    };
    weights.validate()?;
    Ok(TrainOutcome { weights, loss_trace: trace })
}

/// Mean training loss of `weights` on a dataset for a given epoch's noise
/// draw, without updating anything. Uses the same noise and probe streams
/// as [`train`].
pub fn training_loss(
    weights: &DenoiserWeights,
    dataset: &Dataset,
    train_config: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    weights.validate()?;
    train_config.validate()?;
    if dataset.images.is_empty() {
        return Err(Error::Parameter("dataset is empty".into()));
    }
    let (h, w) = (dataset.images[0].height(), dataset.images[0].width());
    let n = dataset.images.len();
    let losses: Vec<f64> = dataset
        .images
        .par_iter()
        .enumerate()
        .map(|(idx, img)| {
            let planes = image_to_planes(img);
            let stream_index = epoch as u64 * n as u64 + idx as u64;
            process_item(weights, &planes, h, w, train_config, stream_index, false).loss
        })
        .collect();
    Ok(losses.iter().sum::<f64>() / n as f64)
}
