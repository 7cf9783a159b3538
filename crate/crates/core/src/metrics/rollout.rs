//! Deterministic evaluation episodes with per-episode metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::formulas::MetricsRecord;
use crate::env::{EnvSetup, SeedLedger, WalkerEnv, TERM_NAMES};
use crate::error::Result;
use crate::rl::{policy_forward, PolicyParams};
use crate::sim::{WalkerModel, NUM_JOINTS};
use crate::table::{num, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub steps: usize,
    pub episode_return: f64,
    pub max_velocity: f64,
    pub terminated: bool,
    pub metrics: MetricsRecord,
    /// Σ weighted reward per catalog term.
    pub reward_terms: [f64; 8],
}

/// Runs `episodes` full episodes with the policy mean. Episode `k` uses
/// ledger episode `k` of environment 0, so the same ledger replays the same
/// terrain, pushes and commands.
pub fn evaluate_episodes(
    model: &WalkerModel,
    params: &PolicyParams,
    ledger: &SeedLedger,
    setup: &EnvSetup,
    episodes: usize,
) -> Result<Vec<EpisodeMetrics>> {
    (0..episodes as u64)
        .into_par_iter()
        .map(|k| run_episode(model, params, ledger, setup, k))
        .collect()
}

fn run_episode(
    model: &WalkerModel,
    params: &PolicyParams,
    ledger: &SeedLedger,
    setup: &EnvSetup,
    episode: u64,
) -> Result<EpisodeMetrics> {
    let mut env = WalkerEnv::new(model.clone(), setup.sim, setup.env, 0);
    let mut obs = env.reset_episode(ledger, episode);
    // Unused: deterministic actions draw nothing.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut power = Vec::new();
    let mut velocity = Vec::new();
    let mut terms = [0.0; 8];
    let mut ret = 0.0;
    let terminated;
    loop {
        let (a, _) = policy_forward(params, &obs, &setup.env.nominal_stance, true, &mut rng)?;
        let action: [f64; NUM_JOINTS] = std::array::from_fn(|j| a[j]);
        let out = env.step(&action)?;
        power.push(out.info.power);
        velocity.push(out.info.forward_velocity);
        for (i, t) in terms.iter_mut().enumerate() {
            *t += out.reward.weighted(i);
        }
        ret += out.reward.total;
        if out.done {
            terminated = out.info.terminated || out.info.diverged;
            break;
        }
        obs = out.observation;
    }
    Ok(EpisodeMetrics {
        episode,
        steps: power.len(),
        episode_return: ret,
        max_velocity: velocity.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        terminated,
        metrics: MetricsRecord::from_traces(&power, &velocity, model.total_mass, model.lengths.leg_m(), model.gravity)?,
        reward_terms: terms,
    })
}

pub fn metrics_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "episode",
        "steps",
        "episode_return",
        "terminated",
        "mean_power_w",
        "mass_kg",
        "mean_velocity_mps",
        "max_velocity_mps",
        "leg_length_m",
        "cot",
        "cot_defined",
        "froude",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(TERM_NAMES.iter().map(|t| format!("reward_{t}")));
    h
}

pub fn metrics_table(rows: &[EpisodeMetrics]) -> Table {
    let header = metrics_header();
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&refs);
    for r in rows {
        let m = &r.metrics;
        let mut row = vec![
            r.episode.to_string(),
            r.steps.to_string(),
            num(r.episode_return),
            (r.terminated as u8).to_string(),
            num(m.mean_power),
            num(m.mass),
            num(m.mean_velocity),
            num(r.max_velocity),
            num(m.leg_length),
            num(m.cot),
            (m.cot_defined() as u8).to_string(),
            num(m.froude),
        ];
        row.extend(r.reward_terms.iter().map(|v| num(*v)));
        t.push(row);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_fair_ledger;
    use crate::rl::{init_policy, NetworkConfig, TrainHyper};
    use crate::sim::{build_walker, JointLimits, LegLengths, TorsoSpec};

    #[test]
    fn episodes_are_reproducible() {
        let setup = EnvSetup::default();
        let model = build_walker(LegLengths::new(0.3, 0.3).unwrap(), setup.sim.density, TorsoSpec::default(), JointLimits::default())
            .unwrap();
        let hyper = TrainHyper {
            network: NetworkConfig {
                actor_hidden: vec![8],
                critic_hidden: vec![8],
                encoder_hidden: vec![],
                latent_dim: 2,
                init_log_std: -1.0,
            },
            ..TrainHyper::default()
        };
        let p = init_policy(&hyper, &setup, 4).unwrap();
        let led = make_fair_ledger(0, 1);
        let a = evaluate_episodes(&model, &p, &led, &setup, 2).unwrap();
        let b = evaluate_episodes(&model, &p, &led, &setup, 2).unwrap();
        // NaN cost of transport breaks PartialEq; compare the printed form.
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(metrics_table(&a).len(), 2);
        assert!(evaluate_episodes(&model, &p, &led, &setup, 0).unwrap().is_empty());
        for r in &a {
            let sum: f64 = r.reward_terms.iter().sum();
            assert!((sum - r.episode_return).abs() < 1e-6 * (1.0 + r.episode_return.abs()));
            let f = r.metrics.mean_velocity.powi(2) / (9.81 * r.metrics.leg_length);
            assert!((f - r.metrics.froude).abs() < 1e-12);
        }
    }
}
