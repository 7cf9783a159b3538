//! Clipped-surrogate actor-critic update.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{clip_grad_norm, Adam};
use super::policy::{gaussian_entropy, NetworkConfig, PolicyParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_ratio: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub num_envs: usize,
    pub steps_per_iteration: usize,
    pub network: NetworkConfig,
    /// Let the value loss train the privileged encoder. Off, the critic reads
    /// z as a constant and only the policy objective shapes it.
    pub value_shapes_encoder: bool,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip_ratio: 0.2,
            learning_rate: 3e-4,
            epochs: 5,
            minibatches: 4,
            entropy_coef: 0.005,
            value_coef: 1.0,
            max_grad_norm: 1.0,
            num_envs: 64,
            steps_per_iteration: 96,
            network: NetworkConfig::default(),
            value_shapes_encoder: false,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("train.gamma", "must lie in (0, 1]"));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::config("train.lambda", "must lie in (0, 1]"));
        }
        if !(self.clip_ratio > 0.0) {
            return Err(Error::config("train.clip_ratio", "must be > 0"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("train.learning_rate", "must be > 0"));
        }
        if self.epochs == 0 || self.minibatches == 0 {
            return Err(Error::config("train.epochs", "epochs and minibatches must be >= 1"));
        }
        if self.num_envs == 0 || self.steps_per_iteration == 0 {
            return Err(Error::config("train.num_envs", "num_envs and steps_per_iteration must be >= 1"));
        }
        if self.minibatches > self.num_envs * self.steps_per_iteration {
            return Err(Error::config("train.minibatches", "more minibatches than samples"));
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0 && self.max_grad_norm >= 0.0) {
            return Err(Error::config("train", "loss coefficients must be >= 0"));
        }
        self.network.validate()
    }
}

/// One iteration of experience, env-major: sample `i = env * steps + t`.
/// Feature vectors are stored contiguously per sample.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RolloutBatch {
    pub num_envs: usize,
    pub steps: usize,
    pub trunk_dim: usize,
    pub privileged_dim: usize,
    pub action_dim: usize,
    pub trunk: Vec<f64>,
    pub privileged: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn minibatch(&self, idx: &[usize]) -> Minibatch {
        let gather = |src: &[f64], dim: usize| {
            let mut m = DMatrix::zeros(dim, idx.len());
            for (c, &i) in idx.iter().enumerate() {
                m.column_mut(c).copy_from_slice(&src[i * dim..(i + 1) * dim]);
            }
            m
        };
        Minibatch {
            trunk: gather(&self.trunk, self.trunk_dim),
            privileged: gather(&self.privileged, self.privileged_dim),
            actions: gather(&self.actions, self.action_dim),
            old_log_probs: idx.iter().map(|&i| self.log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

/// Column-per-sample slice of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub trunk: DMatrix<f64>,
    pub privileged: DMatrix<f64>,
    pub actions: DMatrix<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Loss coefficients used by `loss_and_grad`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub clip_ratio: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub value_shapes_encoder: bool,
}

impl From<&TrainHyper> for LossWeights {
    fn from(h: &TrainHyper) -> Self {
        Self {
            clip_ratio: h.clip_ratio,
            value_coef: h.value_coef,
            entropy_coef: h.entropy_coef,
            value_shapes_encoder: h.value_shapes_encoder,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub surrogate: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Total loss `surrogate + c_v·value − c_e·entropy` and its gradient in
/// `PolicyParams::to_flat` order.
pub fn loss_and_grad(params: &PolicyParams, mb: &Minibatch, w: LossWeights) -> (LossParts, Vec<f64>) {
    let n = mb.old_log_probs.len();
    let nf = n as f64;
    let (z, enc_cache) = params.encoder.forward_cached(&mb.privileged);
    let tr = mb.trunk.nrows();
    let lat = z.nrows();
    let mut x = DMatrix::zeros(tr + lat, n);
    x.rows_mut(0, tr).copy_from(&mb.trunk);
    x.rows_mut(tr, lat).copy_from(&z);
    let (mut mean, act_cache) = params.actor.forward_cached(&x);
    for mut col in mean.column_iter_mut() {
        for (m, o) in col.iter_mut().zip(&params.action_offset) {
            *m += o;
        }
    }
    let (value, crit_cache) = params.critic.forward_cached(&x);

    let inv_var: Vec<f64> = params.log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();
    let mut parts = LossParts::default();
    let mut g_mean = DMatrix::zeros(mean.nrows(), n);
    let mut g_log_std = vec![0.0; params.log_std.len()];
    let mut g_value = DMatrix::zeros(1, n);
    let mut clipped = 0usize;
    for i in 0..n {
        let mut lp = 0.0;
        for j in 0..mean.nrows() {
            let d = mb.actions[(j, i)] - mean[(j, i)];
            lp += -0.5 * d * d * inv_var[j] - params.log_std[j] - 0.918_938_533_204_672_8;
        }
        let log_ratio = lp - mb.old_log_probs[i];
        let ratio = log_ratio.exp();
        let a = mb.advantages[i];
        let clipped_ratio = ratio.clamp(1.0 - w.clip_ratio, 1.0 + w.clip_ratio);
        let unclipped_obj = ratio * a;
        let clipped_obj = clipped_ratio * a;
        let active = unclipped_obj <= clipped_obj;
        parts.surrogate -= unclipped_obj.min(clipped_obj) / nf;
        parts.approx_kl += ((ratio - 1.0) - log_ratio) / nf;
        if !active {
            clipped += 1;
        }
        let g_lp = if active { -a * ratio / nf } else { 0.0 };
        if g_lp != 0.0 {
            for j in 0..mean.nrows() {
                let d = mb.actions[(j, i)] - mean[(j, i)];
                g_mean[(j, i)] = g_lp * d * inv_var[j];
                g_log_std[j] += g_lp * (d * d * inv_var[j] - 1.0);
            }
        }
        let dv = value[(0, i)] - mb.returns[i];
        parts.value += dv * dv / nf;
        g_value[(0, i)] = w.value_coef * 2.0 * dv / nf;
    }
    parts.entropy = gaussian_entropy(&params.log_std);
    for g in &mut g_log_std {
        *g -= w.entropy_coef;
    }
    parts.total = parts.surrogate + w.value_coef * parts.value - w.entropy_coef * parts.entropy;
    parts.clip_fraction = clipped as f64 / nf;

    let mut g_actor = params.actor.zeros_like();
    let gx_a = params.actor.backward(&act_cache, &g_mean, &mut g_actor);
    let mut g_critic = params.critic.zeros_like();
    let gx_c = params.critic.backward(&crit_cache, &g_value, &mut g_critic);
    let mut g_z = gx_a.rows(tr, lat).into_owned();
    if w.value_shapes_encoder {
        g_z += gx_c.rows(tr, lat);
    }
    let mut g_enc = params.encoder.zeros_like();
    params.encoder.backward(&enc_cache, &g_z, &mut g_enc);

    let mut grad = Vec::with_capacity(params.num_params());
    g_enc.write_flat(&mut grad);
    g_actor.write_flat(&mut grad);
    g_critic.write_flat(&mut grad);
    grad.extend_from_slice(&g_log_std);
    (parts, grad)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub surrogate: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    /// Set when the update was abandoned; parameters are then unchanged.
    pub aborted: Option<String>,
}

/// Runs `epochs × minibatches` optimizer steps over `batch`. Advantages are
/// expected to be normalized already. A non-finite loss or parameter aborts
/// the whole update and returns the input parameters.
pub fn ppo_update(
    params: &PolicyParams,
    opt: &mut Adam,
    batch: &RolloutBatch,
    hyper: &TrainHyper,
    rng: &mut impl Rng,
) -> (PolicyParams, UpdateStats) {
    let n = batch.len();
    let w = LossWeights::from(hyper);
    let saved_opt = opt.clone();
    let mut flat = params.to_flat();
    let mut work = params.clone();
    let mut stats = UpdateStats::default();
    let mut count = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mb_count = hyper.minibatches.min(n).max(1);
    for _ in 0..hyper.epochs {
        order.shuffle(rng);
        for k in 0..mb_count {
            let lo = k * n / mb_count;
            let hi = (k + 1) * n / mb_count;
            let mb = batch.minibatch(&order[lo..hi]);
            let (parts, mut grad) = loss_and_grad(&work, &mb, w);
            if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                *opt = saved_opt;
                return (
                    params.clone(),
                    UpdateStats {
                        aborted: Some(format!("non-finite loss {:?}", parts)),
                        ..UpdateStats::default()
                    },
                );
            }
            stats.grad_norm += clip_grad_norm(&mut grad, hyper.max_grad_norm);
            opt.step(&mut flat, &grad);
            work.set_flat(&flat);
            work.clamp_log_std();
            flat = work.to_flat();
            stats.surrogate += parts.surrogate;
            stats.value += parts.value;
            stats.entropy += parts.entropy;
            stats.approx_kl += parts.approx_kl;
            stats.clip_fraction += parts.clip_fraction;
            count += 1.0;
        }
    }
    if !work.is_finite() {
        *opt = saved_opt;
        return (
            params.clone(),
            UpdateStats {
                aborted: Some("non-finite parameters after update".into()),
                ..UpdateStats::default()
            },
        );
    }
    stats.surrogate /= count;
    stats.value /= count;
    stats.entropy /= count;
    stats.approx_kl /= count;
    stats.clip_fraction /= count;
    stats.grad_norm /= count;
    (work, stats)
}
