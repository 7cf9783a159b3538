//! Teacher policy: privileged encoder, Gaussian actor and critic.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::nn::Mlp;
use crate::env::{Observation, Privileged, PROPRIO_DIM, STRUCTURE_DIM, PRIVILEGED_DIM, VELOCITY_DIM};
use crate::error::{Error, Result};
use crate::sim::NUM_JOINTS;

pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 1.0;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian log-density.
pub fn gaussian_log_prob(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((x, m), ls)| {
            let z = (x - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LOG_2PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 + HALF_LOG_2PI).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub init_log_std: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![256, 128],
            critic_hidden: vec![256, 128],
            encoder_hidden: vec![32],
            latent_dim: 8,
            init_log_std: -1.4,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::config("network.latent_dim", "must be >= 1"));
        }
        for (name, h) in [
            ("actor_hidden", &self.actor_hidden),
            ("critic_hidden", &self.critic_hidden),
            ("encoder_hidden", &self.encoder_hidden),
        ] {
            if h.contains(&0) {
                return Err(Error::config(format!("network.{name}"), "layer widths must be >= 1"));
            }
        }
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&self.init_log_std) {
            return Err(Error::config("network.init_log_std", "must lie in [-4, 1]"));
        }
        Ok(())
    }
}

/// Input widths of the three networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    /// Proprioceptive features (o_t).
    pub proprio: usize,
    /// Body velocity features (v_t).
    pub velocity: usize,
    /// Encoder input (e_t ⊕ L).
    pub privileged: usize,
    pub action: usize,
}

impl PolicyDims {
    pub const WALKER: Self = Self {
        proprio: PROPRIO_DIM,
        velocity: VELOCITY_DIM,
        privileged: PRIVILEGED_DIM + STRUCTURE_DIM,
        action: NUM_JOINTS,
    };

    pub fn trunk(&self) -> usize {
        self.proprio + self.velocity
    }
}

// Fixed affine input scaling; keeps raw observations near unit range.
const VEL_SCALE: f64 = 0.1;
const PITCH_RATE_SCALE: f64 = 0.25;
const FRICTION_CENTER: f64 = 0.7;
const FRICTION_SCALE: f64 = 1.0 / 0.3;
const MASS_SCALE: f64 = 2.0;
/// Push timing is seen as proximity within this window, s; beyond it the
/// feature is flat so the encoder cannot use it as an episode clock.
const PUSH_LOOKAHEAD_S: f64 = 0.5;
const PUSH_IMPULSE_SCALE: f64 = 1.0 / 6.0;
const LENGTH_CENTER: f64 = 0.3;
const LENGTH_SCALE: f64 = 10.0;

/// Scaled `o_t` features, written into `out`.
pub fn proprio_features(obs: &Observation, nominal: &[f64; NUM_JOINTS], out: &mut Vec<f64>) {
    let p = &obs.proprio;
    out.extend(p.joint_pos.iter().zip(nominal).map(|(q, n)| q - n));
    out.extend(p.joint_vel.iter().map(|v| v * VEL_SCALE));
    out.push(p.pitch);
    out.push(p.pitch_rate * PITCH_RATE_SCALE);
    out.extend(p.prev_action.iter().zip(nominal).map(|(a, n)| a - n));
    out.extend_from_slice(&p.clock);
    out.push(p.command);
}

/// Scaled `e_t ⊕ L` features.
pub fn privileged_features(e: &Privileged, lengths: &[f64; STRUCTURE_DIM], out: &mut Vec<f64>) {
    out.push((e.friction - FRICTION_CENTER) * FRICTION_SCALE);
    out.push(e.mass_offset * MASS_SCALE);
    out.push(1.0 - e.time_to_next_push.clamp(0.0, PUSH_LOOKAHEAD_S) / PUSH_LOOKAHEAD_S);
    out.push(e.last_push_impulse * PUSH_IMPULSE_SCALE);
    out.extend(lengths.iter().map(|l| (l - LENGTH_CENTER) * LENGTH_SCALE));
}

/// Splits a teacher observation into (trunk, encoder) feature vectors.
pub fn teacher_features(obs: &Observation, nominal: &[f64; NUM_JOINTS]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (Some(v), Some(e), Some(l)) = (obs.velocity, obs.privileged, obs.structure) else {
        return Err(Error::Shape("teacher policy needs velocity, privileged and structure layers".into()));
    };
    let mut trunk = Vec::with_capacity(PolicyDims::WALKER.trunk());
    proprio_features(obs, nominal, &mut trunk);
    trunk.extend_from_slice(&v);
    let mut privileged = Vec::with_capacity(PolicyDims::WALKER.privileged);
    privileged_features(&e, &l, &mut privileged);
    Ok((trunk, privileged))
}

fn stack_rows(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let (r1, r2, n) = (top.nrows(), bottom.nrows(), top.ncols());
    let mut x = DMatrix::zeros(r1 + r2, n);
    x.rows_mut(0, r1).copy_from(top);
    x.rows_mut(r1, r2).copy_from(bottom);
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub dims: PolicyDims,
    pub encoder: Mlp,
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: Vec<f64>,
    /// Added to the actor output; the nominal stance for the walker.
    pub action_offset: Vec<f64>,
}

/// Output of a batched forward pass.
pub struct BatchOutput {
    pub mean: DMatrix<f64>,
    pub value: Vec<f64>,
}

impl PolicyParams {
    pub fn new(dims: PolicyDims, net: &NetworkConfig, action_offset: Vec<f64>, rng: &mut impl Rng) -> Result<Self> {
        net.validate()?;
        if action_offset.len() != dims.action {
            return Err(Error::Shape(format!(
                "action offset has {} entries, expected {}",
                action_offset.len(),
                dims.action
            )));
        }
        let sizes = |input: usize, hidden: &[usize], out: usize| {
            let mut s = vec![input];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        let trunk_in = dims.trunk() + net.latent_dim;
        Ok(Self {
            dims,
            encoder: Mlp::new(&sizes(dims.privileged, &net.encoder_hidden, net.latent_dim), 1.0, rng),
            actor: Mlp::new(&sizes(trunk_in, &net.actor_hidden, dims.action), 0.01, rng),
            critic: Mlp::new(&sizes(trunk_in, &net.critic_hidden, 1), 1.0, rng),
            log_std: vec![net.init_log_std; dims.action],
            action_offset,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params() + self.actor.num_params() + self.critic.num_params() + self.log_std.len()
    }

    /// Trainable parameters in a fixed order: encoder, actor, critic, log-std.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.encoder.write_flat(&mut out);
        self.actor.write_flat(&mut out);
        self.critic.write_flat(&mut out);
        out.extend_from_slice(&self.log_std);
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut k = self.encoder.read_flat(flat);
        k += self.actor.read_flat(&flat[k..]);
        k += self.critic.read_flat(&flat[k..]);
        let n = self.log_std.len();
        self.log_std.copy_from_slice(&flat[k..k + n]);
    }

    pub fn clamp_log_std(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite()
            && self.actor.is_finite()
            && self.critic.is_finite()
            && self.log_std.iter().all(|v| v.is_finite())
    }

    /// Latent `z_t` from encoder features.
    pub fn encode(&self, privileged: &[f64]) -> Vec<f64> {
        let x = DMatrix::from_column_slice(privileged.len(), 1, privileged);
        self.encoder.forward(&x).as_slice().to_vec()
    }

    /// Batched forward pass; columns are samples.
    pub fn forward_batch(&self, trunk: &DMatrix<f64>, privileged: &DMatrix<f64>) -> Result<BatchOutput> {
        if trunk.nrows() != self.dims.trunk() || privileged.nrows() != self.dims.privileged {
            return Err(Error::Shape(format!(
                "policy expects ({}, {}) input rows, got ({}, {})",
                self.dims.trunk(),
                self.dims.privileged,
                trunk.nrows(),
                privileged.nrows()
            )));
        }
        let z = self.encoder.forward(privileged);
        let x = stack_rows(trunk, &z);
        let mut mean = self.actor.forward(&x);
        for mut col in mean.column_iter_mut() {
            for (m, o) in col.iter_mut().zip(&self.action_offset) {
                *m += o;
            }
        }
        let value = self.critic.forward(&x).row(0).iter().copied().collect();
        Ok(BatchOutput { mean, value })
    }

    /// Action mean and value for one sample.
    pub fn forward_one(&self, trunk: &[f64], privileged: &[f64]) -> Result<(Vec<f64>, f64)> {
        let out = self.forward_batch(
            &DMatrix::from_column_slice(trunk.len(), 1, trunk),
            &DMatrix::from_column_slice(privileged.len(), 1, privileged),
        )?;
        Ok((out.mean.as_slice().to_vec(), out.value[0]))
    }

    /// Draws an action around `mean`, returning it with its log-probability.
    pub fn sample(&self, mean: &[f64], rng: &mut impl Rng) -> (Vec<f64>, f64) {
        let a: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = gaussian_log_prob(&a, mean, &self.log_std);
        (a, lp)
    }
}

/// Privileged latent for raw `e_t` and leg lengths.
pub fn encode_privileged(params: &PolicyParams, e: &Privileged, lengths: &[f64; STRUCTURE_DIM]) -> Vec<f64> {
    let mut f = Vec::with_capacity(params.dims.privileged);
    privileged_features(e, lengths, &mut f);
    params.encode(&f)
}

/// Action (desired joint positions, rad) and its log-probability for a
/// teacher observation. The deterministic flag returns the mean.
pub fn policy_forward(
    params: &PolicyParams,
    obs: &Observation,
    nominal: &[f64; NUM_JOINTS],
    deterministic: bool,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, f64)> {
    if params.dims != PolicyDims::WALKER {
        return Err(Error::Shape("policy dimensions do not match the walker observation".into()));
    }
    let (trunk, privileged) = teacher_features(obs, nominal)?;
    let (mean, _) = params.forward_one(&trunk, &privileged)?;
    if deterministic {
        let lp = gaussian_log_prob(&mean, &mean, &params.log_std);
        Ok((mean, lp))
    } else {
        Ok(params.sample(&mean, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Proprio;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs() -> Observation {
        Observation {
            proprio: Proprio {
                joint_pos: [0.1, -0.2, 0.05, 0.3],
                joint_vel: [1.0, -0.5, 0.2, 0.0],
                pitch: 0.02,
                pitch_rate: -0.3,
                prev_action: [0.15, 0.0, -0.15, 0.0],
                clock: [0.0, 1.0],
                command: 0.8,
            },
            velocity: Some([0.5, 0.0]),
            privileged: Some(Privileged {
                friction: 0.6,
                mass_offset: 0.1,
                time_to_next_push: 3.0,
                last_push_impulse: 0.0,
            }),
            structure: Some([0.3, 0.3]),
        }
    }

    fn params(seed: u64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PolicyParams::new(PolicyDims::WALKER, &NetworkConfig::default(), vec![0.15, 0.0, -0.15, 0.0], &mut rng)
            .unwrap()
    }

    #[test]
    fn latent_has_configured_size_and_is_deterministic() {
        let p = params(0);
        let e = obs().privileged.unwrap();
        let z1 = encode_privileged(&p, &e, &[0.3, 0.3]);
        assert_eq!(z1.len(), 8);
        assert_eq!(z1, encode_privileged(&p, &e, &[0.3, 0.3]));
    }

    #[test]
    fn distinct_lengths_give_distinct_latents() {
        let e = obs().privileged.unwrap();
        for seed in 0..100 {
            let p = params(seed);
            assert_ne!(encode_privileged(&p, &e, &[0.25, 0.3]), encode_privileged(&p, &e, &[0.35, 0.3]));
        }
    }

    #[test]
    fn deterministic_action_is_the_mode() {
        let p = params(1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let nominal = [0.15, 0.0, -0.15, 0.0];
        let (a1, lp1) = policy_forward(&p, &obs(), &nominal, true, &mut rng).unwrap();
        let (a2, _) = policy_forward(&p, &obs(), &nominal, true, &mut rng).unwrap();
        assert_eq!(a1, a2);
        for _ in 0..50 {
            let (_, lp) = policy_forward(&p, &obs(), &nominal, false, &mut rng).unwrap();
            assert!(lp1 >= lp);
        }
    }

    #[test]
    fn sampled_log_prob_matches_density() {
        let p = params(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nominal = [0.15, 0.0, -0.15, 0.0];
        let (mean, _) = policy_forward(&p, &obs(), &nominal, true, &mut rng).unwrap();
        let (a, lp) = policy_forward(&p, &obs(), &nominal, false, &mut rng).unwrap();
        // Product of univariate normal densities, computed directly.
        let mut density = 1.0;
        for j in 0..4 {
            let s = p.log_std[j].exp();
            let z = (a[j] - mean[j]) / s;
            density *= (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        }
        assert!((lp - density.ln()).abs() < 1e-10);
    }

    #[test]
    fn student_observation_is_rejected() {
        let p = params(0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = obs().for_phase(crate::env::Phase::Student);
        assert!(policy_forward(&p, &o, &[0.0; 4], true, &mut rng).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let p = params(4);
        let mut q = params(5);
        q.set_flat(&p.to_flat());
        assert_eq!(p, q);
    }
}
