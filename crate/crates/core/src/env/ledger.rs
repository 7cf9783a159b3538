//! Per-generation seed ledger ("fair rules").
//!
//! Every stochastic environment event (command draws, pushes, friction, mass
//! offset, initial jitter) and the learner's own sampling noise is a pure
//! function of the ledger plus an (environment, episode) key. All individuals
//! of one generation share the same ledger, so they face identical conditions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::EnvConfig;
use crate::rng::{derive, stream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedLedger {
    pub generation: u64,
    pub master_seed: u64,
    pub command_seed: u64,
    pub push_seed: u64,
    pub friction_seed: u64,
    pub mass_seed: u64,
    pub jitter_seed: u64,
    /// Action-noise and minibatch-shuffle stream for training.
    pub policy_seed: u64,
}

pub fn make_fair_ledger(generation: u64, master_seed: u64) -> SeedLedger {
    let base = derive(master_seed, &[tag("ledger"), generation]);
    let sub = |name: &str| derive(base, &[tag(name)]);
    SeedLedger {
        generation,
        master_seed,
        command_seed: sub("command"),
        push_seed: sub("push"),
        friction_seed: sub("friction"),
        mass_seed: sub("mass"),
        jitter_seed: sub("jitter"),
        policy_seed: sub("policy"),
    }
}

/// Identifies one episode of one parallel environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpisodeKey {
    pub env: u64,
    pub episode: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Push {
    /// Episode time, s.
    pub time: f64,
    /// Signed horizontal impulse, kg·m/s.
    pub impulse: f64,
}

/// Randomized conditions of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEvents {
    pub friction: f64,
    pub mass_offset: f64,
    pub joint_jitter: [f64; 4],
    pub pushes: Vec<Push>,
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

impl SeedLedger {
    /// Push times at `k·interval − jitter_k` for every `k ≥ 1` that falls
    /// inside the episode, with jitter in `[0, push_jitter)`.
    pub fn push_schedule(&self, key: EpisodeKey, cfg: &EnvConfig) -> Vec<Push> {
        let p = &cfg.push;
        if !p.enabled || p.interval_s <= 0.0 {
            return Vec::new();
        }
        let mut rng = stream(self.push_seed, &[key.env, key.episode]);
        let count = (cfg.episode_length_s / p.interval_s + 1e-9).floor() as usize;
        (1..=count)
            .map(|k| {
                let jitter = uniform(&mut rng, (0.0, p.jitter_s));
                let magnitude = uniform(&mut rng, p.impulse_range);
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                Push {
                    time: k as f64 * p.interval_s - jitter,
                    impulse: sign * magnitude,
                }
            })
            .collect()
    }

    pub fn friction(&self, key: EpisodeKey, cfg: &EnvConfig) -> f64 {
        uniform(&mut stream(self.friction_seed, &[key.env, key.episode]), cfg.friction_range)
    }

    pub fn mass_offset(&self, key: EpisodeKey, cfg: &EnvConfig) -> f64 {
        uniform(&mut stream(self.mass_seed, &[key.env, key.episode]), cfg.mass_offset_range)
    }

    pub fn joint_jitter(&self, key: EpisodeKey, cfg: &EnvConfig) -> [f64; 4] {
        let mut rng = stream(self.jitter_seed, &[key.env, key.episode]);
        let j = cfg.init_jitter_rad;
        std::array::from_fn(|_| uniform(&mut rng, (-j, j)))
    }

    pub fn episode_events(&self, key: EpisodeKey, cfg: &EnvConfig) -> EpisodeEvents {
        EpisodeEvents {
            friction: self.friction(key, cfg),
            mass_offset: self.mass_offset(key, cfg),
            joint_jitter: self.joint_jitter(key, cfg),
            pushes: self.push_schedule(key, cfg),
        }
    }

    /// Command for the resampling segment containing episode time `time`.
    pub(crate) fn command_draw(&self, key: EpisodeKey, segment: u64, range: (f64, f64)) -> f64 {
        uniform(&mut stream(self.command_seed, &[key.env, key.episode, segment]), range)
    }
}
