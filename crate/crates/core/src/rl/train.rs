//! Rollout collection and the training loop.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gae::{compute_gae, normalize_advantages};
use super::nn::Adam;
use super::policy::{teacher_features, PolicyDims, PolicyParams};
use super::ppo::{ppo_update, RolloutBatch, TrainHyper, UpdateStats};
use crate::env::{EnvSetup, Observation, SeedLedger, StepOutcome, WalkerEnv};
use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::sim::{build_walker, DesignSpace, LegLengths, WalkerModel, NUM_JOINTS};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u64,
    /// Mean over environments of the reward summed over the rollout window.
    pub mean_reward: f64,
    /// Mean return of episodes that finished in this window; NaN if none did.
    pub mean_episode_return: f64,
    pub episodes_completed: usize,
    pub diverged_envs: usize,
    pub update: UpdateStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    /// `mean_reward` of every iteration.
    pub reward_trace: Vec<f64>,
    pub stats: Vec<IterationStats>,
}

struct WindowSummary {
    mean_reward: f64,
    episode_returns: Vec<f64>,
    diverged_envs: usize,
}

/// A set of environments sharing one policy under training.
pub struct Trainer {
    hyper: TrainHyper,
    ledger: SeedLedger,
    envs: Vec<WalkerEnv>,
    obs: Vec<Observation>,
    params: PolicyParams,
    opt: Adam,
    iteration: u64,
}

fn features_matrix(
    nominal: &[f64; NUM_JOINTS],
    obs: &[Observation],
    dims: PolicyDims,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut trunk = DMatrix::zeros(dims.trunk(), obs.len());
    let mut privileged = DMatrix::zeros(dims.privileged, obs.len());
    for (i, o) in obs.iter().enumerate() {
        let (t, p) = teacher_features(o, nominal)?;
        trunk.column_mut(i).copy_from_slice(&t);
        privileged.column_mut(i).copy_from_slice(&p);
    }
    Ok((trunk, privileged))
}

fn to_action(v: &[f64]) -> [f64; NUM_JOINTS] {
    std::array::from_fn(|j| v[j])
}

impl Trainer {
    pub fn new(mut envs: Vec<WalkerEnv>, params: PolicyParams, ledger: SeedLedger, hyper: TrainHyper) -> Result<Self> {
        hyper.validate()?;
        if params.dims != PolicyDims::WALKER {
            return Err(Error::Shape("policy dimensions do not match the walker observation".into()));
        }
        if envs.is_empty() {
            return Err(Error::config("train.num_envs", "must be >= 1"));
        }
        let obs = envs.iter_mut().map(|e| e.reset(&ledger)).collect();
        let opt = Adam::new(params.num_params(), hyper.learning_rate);
        Ok(Self {
            hyper,
            ledger,
            envs,
            obs,
            params,
            opt,
            iteration: 0,
        })
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn into_params(self) -> PolicyParams {
        self.params
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Swaps in a new environment at `index` and starts its episode `episode`.
    pub fn replace_env(&mut self, index: usize, mut env: WalkerEnv, episode: u64) {
        self.obs[index] = env.reset_episode(&self.ledger, episode);
        self.envs[index] = env;
    }

    /// Collects one window of experience with the current parameters.
    /// Advantages in the returned batch are not normalized.
    fn collect(&mut self) -> Result<(RolloutBatch, WindowSummary)> {
        let dims = self.params.dims;
        let ne = self.envs.len();
        let steps = self.hyper.steps_per_iteration;
        let n = ne * steps;
        let gamma = self.hyper.gamma;
        let nominal = self.envs[0].config().nominal_stance;
        let mut b = RolloutBatch {
            num_envs: ne,
            steps,
            trunk_dim: dims.trunk(),
            privileged_dim: dims.privileged,
            action_dim: dims.action,
            trunk: vec![0.0; n * dims.trunk()],
            privileged: vec![0.0; n * dims.privileged],
            actions: vec![0.0; n * dims.action],
            log_probs: vec![0.0; n],
            rewards: vec![0.0; n],
            values: vec![0.0; n],
            dones: vec![false; n],
            advantages: Vec::new(),
            returns: Vec::new(),
        };
        let mut rngs: Vec<ChaCha8Rng> = (0..ne as u64)
            .map(|e| stream(self.ledger.policy_seed, &[tag("action"), self.iteration, e]))
            .collect();
        let mut window = vec![0.0; ne];
        let mut diverged = vec![false; ne];
        let mut episode_returns = Vec::new();

        for t in 0..steps {
            let (trunk, privileged) = features_matrix(&nominal, &self.obs, dims)?;
            let out = self.params.forward_batch(&trunk, &privileged)?;
            let mut actions = Vec::with_capacity(ne);
            for e in 0..ne {
                let i = e * steps + t;
                let mean: Vec<f64> = out.mean.column(e).iter().copied().collect();
                let (a, lp) = self.params.sample(&mean, &mut rngs[e]);
                b.trunk[i * dims.trunk()..(i + 1) * dims.trunk()].copy_from_slice(trunk.column(e).as_slice());
                b.privileged[i * dims.privileged..(i + 1) * dims.privileged]
                    .copy_from_slice(privileged.column(e).as_slice());
                b.actions[i * dims.action..(i + 1) * dims.action].copy_from_slice(&a);
                b.log_probs[i] = lp;
                b.values[i] = out.value[e];
                actions.push(to_action(&a));
            }
            let outcomes: Vec<StepOutcome> = self
                .envs
                .par_iter_mut()
                .zip(actions.par_iter())
                .map(|(env, a)| env.step(a))
                .collect::<Result<_>>()?;

            let mut truncated = Vec::new();
            for (e, o) in outcomes.iter().enumerate() {
                let i = e * steps + t;
                b.rewards[i] = o.reward.total;
                b.dones[i] = o.done;
                window[e] += o.reward.total;
                diverged[e] |= o.info.diverged;
                if o.done {
                    episode_returns.push(o.info.episode_return);
                }
                if o.info.truncated {
                    truncated.push(e);
                }
            }
            // Time limits are not failures: bootstrap from the final state.
            if !truncated.is_empty() {
                let finals: Vec<Observation> = truncated.iter().map(|&e| outcomes[e].observation).collect();
                let (tr, pr) = features_matrix(&nominal, &finals, dims)?;
                let v = self.params.forward_batch(&tr, &pr)?.value;
                for (k, &e) in truncated.iter().enumerate() {
                    b.rewards[e * steps + t] += gamma * v[k];
                }
            }
            for (e, o) in outcomes.into_iter().enumerate() {
                self.obs[e] = if o.done { self.envs[e].reset(&self.ledger) } else { o.observation };
            }
        }

        let (trunk, privileged) = features_matrix(&nominal, &self.obs, dims)?;
        let last = self.params.forward_batch(&trunk, &privileged)?.value;
        b.advantages = vec![0.0; n];
        b.returns = vec![0.0; n];
        for e in 0..ne {
            let r = e * steps..(e + 1) * steps;
            let (adv, ret) = compute_gae(
                &b.rewards[r.clone()],
                &b.values[r.clone()],
                &b.dones[r.clone()],
                last[e],
                gamma,
                self.hyper.lambda,
            );
            b.advantages[r.clone()].copy_from_slice(&adv);
            b.returns[r].copy_from_slice(&ret);
        }
        if b.advantages.iter().any(|a| !a.is_finite()) {
            return Err(Error::TrainingFailure("non-finite advantages".into()));
        }
        let summary = WindowSummary {
            mean_reward: window.iter().sum::<f64>() / ne as f64,
            episode_returns,
            diverged_envs: diverged.iter().filter(|&&d| d).count(),
        };
        Ok((b, summary))
    }

    /// Rollout, advantage estimation and one update.
    pub fn iterate(&mut self) -> Result<IterationStats> {
        let (mut batch, summary) = self.collect()?;
        if 2 * summary.diverged_envs > self.envs.len() {
            return Err(Error::TrainingFailure(format!(
                "simulation diverged in {} of {} environments at iteration {}",
                summary.diverged_envs,
                self.envs.len(),
                self.iteration
            )));
        }
        normalize_advantages(&mut batch.advantages);
        let mut rng = stream(self.ledger.policy_seed, &[tag("minibatch"), self.iteration]);
        let (params, update) = ppo_update(&self.params, &mut self.opt, &batch, &self.hyper, &mut rng);
        self.params = params;
        let done = summary.episode_returns.len();
        let stats = IterationStats {
            iteration: self.iteration,
            mean_reward: summary.mean_reward,
            mean_episode_return: if done == 0 {
                f64::NAN
            } else {
                summary.episode_returns.iter().sum::<f64>() / done as f64
            },
            episodes_completed: done,
            diverged_envs: summary.diverged_envs,
            update,
        };
        self.iteration += 1;
        Ok(stats)
    }

    /// One window of experience without an update; advantages are raw.
    pub fn collect_batch(&mut self) -> Result<RolloutBatch> {
        self.collect().map(|(b, _)| b)
    }
}

/// Fresh walker policy with the nominal stance as action offset.
pub fn init_policy(hyper: &TrainHyper, setup: &EnvSetup, seed: u64) -> Result<PolicyParams> {
    let mut rng = stream(seed, &[tag("policy-init")]);
    PolicyParams::new(
        PolicyDims::WALKER,
        &hyper.network,
        setup.env.nominal_stance.to_vec(),
        &mut rng,
    )
}

fn make_envs(model: &WalkerModel, setup: &EnvSetup, n: usize) -> Vec<WalkerEnv> {
    (0..n as u64)
        .map(|i| WalkerEnv::new(model.clone(), setup.sim, setup.env, i))
        .collect()
}

/// Trains `init` on one morphology for `iterations` cycles; `on_iteration`
/// sees every iteration's statistics as they are produced.
pub fn train_policy_with(
    model: &WalkerModel,
    init: PolicyParams,
    iterations: usize,
    ledger: &SeedLedger,
    hyper: &TrainHyper,
    setup: &EnvSetup,
    mut on_iteration: impl FnMut(&IterationStats),
) -> Result<TrainOutcome> {
    if iterations == 0 {
        return Err(Error::Domain("train_policy needs at least one iteration".into()));
    }
    setup.validate()?;
    let mut trainer = Trainer::new(make_envs(model, setup, hyper.num_envs), init, *ledger, hyper.clone())?;
    let mut stats = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let s = trainer.iterate()?;
        on_iteration(&s);
        stats.push(s);
    }
    Ok(TrainOutcome {
        reward_trace: stats.iter().map(|s| s.mean_reward).collect(),
        params: trainer.into_params(),
        stats,
    })
}

pub fn train_policy(
    model: &WalkerModel,
    init: PolicyParams,
    iterations: usize,
    ledger: &SeedLedger,
    hyper: &TrainHyper,
    setup: &EnvSetup,
) -> Result<TrainOutcome> {
    train_policy_with(model, init, iterations, ledger, hyper, setup, |_| {})
}

/// Leg lengths drawn uniformly from the design lattice.
pub fn sample_lengths(space: &DesignSpace, rng: &mut impl Rng) -> Result<LegLengths> {
    let thighs = space.lattice(space.thigh_range);
    let shins = space.lattice(space.shin_range);
    let t = thighs[rng.gen_range(0..thighs.len())];
    let s = shins[rng.gen_range(0..shins.len())];
    LegLengths::new_in(space, t, s)
}

/// Trains one policy across morphologies drawn uniformly from the design
/// space. Every `resample_every` iterations each environment gets a fresh
/// morphology. Zero iterations returns `init` unchanged.
pub fn pretrain_shared(
    space: &DesignSpace,
    init: PolicyParams,
    iterations: usize,
    resample_every: usize,
    ledger: &SeedLedger,
    hyper: &TrainHyper,
    setup: &EnvSetup,
    mut on_iteration: impl FnMut(&IterationStats),
) -> Result<TrainOutcome> {
    if iterations == 0 {
        return Ok(TrainOutcome {
            params: init,
            reward_trace: Vec::new(),
            stats: Vec::new(),
        });
    }
    setup.validate()?;
    space.validate()?;
    let resample_every = resample_every.max(1);
    let build = |block: u64, env: u64| -> Result<WalkerEnv> {
        let mut rng = stream(ledger.policy_seed, &[tag("morphology"), block, env]);
        let lengths = sample_lengths(space, &mut rng)?;
        let model = build_walker(lengths, setup.sim.density, setup.sim.torso, setup.sim.limits)?;
        Ok(WalkerEnv::new(model, setup.sim, setup.env, env))
    };
    let envs = (0..hyper.num_envs as u64).map(|e| build(0, e)).collect::<Result<Vec<_>>>()?;
    let mut trainer = Trainer::new(envs, init, *ledger, hyper.clone())?;
    let mut stats = Vec::with_capacity(iterations);
    for it in 0..iterations {
        if it > 0 && it % resample_every == 0 {
            let block = (it / resample_every) as u64;
            for e in 0..hyper.num_envs {
                trainer.replace_env(e, build(block, e as u64)?, block << 20);
            }
        }
        let s = trainer.iterate()?;
        on_iteration(&s);
        stats.push(s);
    }
    Ok(TrainOutcome {
        reward_trace: stats.iter().map(|s| s.mean_reward).collect(),
        params: trainer.into_params(),
        stats,
    })
}

/// Per-step record of a deterministic evaluation rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalStep {
    pub reward: f64,
    pub power: f64,
    pub forward_velocity: f64,
    pub command: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Mean over environments of the summed reward.
    pub mean_reward: f64,
    /// Mean return over finished episodes plus the unfinished tails.
    pub mean_episode_return: f64,
    pub steps: Vec<Vec<EvalStep>>,
}

/// Runs the policy mean for `steps` control steps in `num_envs` environments.
pub fn evaluate_policy(
    model: &WalkerModel,
    params: &PolicyParams,
    ledger: &SeedLedger,
    setup: &EnvSetup,
    num_envs: usize,
    steps: usize,
) -> Result<EvalSummary> {
    let dims = params.dims;
    let mut envs = make_envs(model, setup, num_envs);
    let mut obs: Vec<Observation> = envs.iter_mut().map(|e| e.reset(ledger)).collect();
    let mut records = vec![Vec::with_capacity(steps); num_envs];
    let mut returns = Vec::new();
    let mut running = vec![0.0; num_envs];
    for _ in 0..steps {
        let (trunk, privileged) = features_matrix(&setup.env.nominal_stance, &obs, dims)?;
        let out = params.forward_batch(&trunk, &privileged)?;
        let actions: Vec<[f64; NUM_JOINTS]> = (0..num_envs)
            .map(|e| to_action(out.mean.column(e).as_slice()))
            .collect();
        let outcomes: Vec<StepOutcome> = envs
            .par_iter_mut()
            .zip(actions.par_iter())
            .map(|(env, a)| env.step(a))
            .collect::<Result<_>>()?;
        for (e, o) in outcomes.into_iter().enumerate() {
            running[e] += o.reward.total;
            records[e].push(EvalStep {
                reward: o.reward.total,
                power: o.info.power,
                forward_velocity: o.info.forward_velocity,
                command: o.info.command,
                done: o.done,
            });
            if o.done {
                returns.push(running[e]);
                running[e] = 0.0;
                obs[e] = envs[e].reset(ledger);
            } else {
                obs[e] = o.observation;
            }
        }
    }
    let total: f64 = records.iter().flatten().map(|s| s.reward).sum();
    returns.extend(running.iter().copied());
    let mean_episode_return = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
    Ok(EvalSummary {
        mean_reward: total / num_envs.max(1) as f64,
        mean_episode_return,
        steps: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_fair_ledger;
    use crate::rl::policy::NetworkConfig;
    use crate::sim::{JointLimits, TorsoSpec};

    fn tiny() -> (WalkerModel, TrainHyper, EnvSetup) {
        let model = build_walker(LegLengths::new(0.3, 0.3).unwrap(), 2.0, TorsoSpec::default(), JointLimits::default())
            .unwrap();
        let hyper = TrainHyper {
            num_envs: 3,
            steps_per_iteration: 12,
            minibatches: 2,
            epochs: 2,
            network: NetworkConfig {
                actor_hidden: vec![16],
                critic_hidden: vec![16],
                encoder_hidden: vec![8],
                latent_dim: 4,
                init_log_std: -1.0,
            },
            ..TrainHyper::default()
        };
        (model, hyper, EnvSetup::default())
    }

    #[test]
    fn trace_length_and_determinism() {
        let (model, hyper, setup) = tiny();
        let ledger = make_fair_ledger(0, 42);
        let init = init_policy(&hyper, &setup, 1).unwrap();
        let a = train_policy(&model, init.clone(), 2, &ledger, &hyper, &setup).unwrap();
        let b = train_policy(&model, init.clone(), 2, &ledger, &hyper, &setup).unwrap();
        assert_eq!(a.reward_trace.len(), 2);
        assert_eq!(a.reward_trace, b.reward_trace);
        assert_eq!(a.params, b.params);
        assert!(a.params.is_finite());
        let one = train_policy(&model, init.clone(), 1, &ledger, &hyper, &setup).unwrap();
        assert_eq!(one.reward_trace.len(), 1);
        assert!(train_policy(&model, init, 0, &ledger, &hyper, &setup).is_err());
    }

    #[test]
    fn batch_invariants() {
        let (model, hyper, setup) = tiny();
        let ledger = make_fair_ledger(1, 7);
        let init = init_policy(&hyper, &setup, 2).unwrap();
        let mut trainer = Trainer::new(make_envs(&model, &setup, 3), init.clone(), ledger, hyper.clone()).unwrap();
        let b = trainer.collect_batch().unwrap();
        assert_eq!(b.len(), 36);
        for i in 0..b.len() {
            assert!(b.advantages[i].is_finite());
            assert_eq!(b.returns[i], b.advantages[i] + b.values[i]);
            // stored log-probs agree with a recomputation under the same parameters
            let t = &b.trunk[i * b.trunk_dim..(i + 1) * b.trunk_dim];
            let p = &b.privileged[i * b.privileged_dim..(i + 1) * b.privileged_dim];
            let a = &b.actions[i * b.action_dim..(i + 1) * b.action_dim];
            let (mean, _) = init.forward_one(t, p).unwrap();
            let lp = crate::rl::gaussian_log_prob(a, &mean, &init.log_std);
            assert!((lp - b.log_probs[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn pretrain_zero_iterations_is_identity() {
        let (_, hyper, setup) = tiny();
        let init = init_policy(&hyper, &setup, 3).unwrap();
        let out = pretrain_shared(
            &DesignSpace::default(),
            init.clone(),
            0,
            5,
            &make_fair_ledger(0, 0),
            &hyper,
            &setup,
            |_| {},
        )
        .unwrap();
        assert_eq!(out.params, init);
        assert!(out.reward_trace.is_empty());
    }

    #[test]
    fn pretrained_params_feed_train_policy() {
        let (model, hyper, setup) = tiny();
        let ledger = make_fair_ledger(0, 5);
        let init = init_policy(&hyper, &setup, 4).unwrap();
        let pre = pretrain_shared(&DesignSpace::default(), init, 2, 1, &ledger, &hyper, &setup, |_| {}).unwrap();
        assert_eq!(pre.reward_trace.len(), 2);
        let out = train_policy(&model, pre.params, 1, &ledger, &hyper, &setup).unwrap();
        assert!(out.reward_trace[0].is_finite());
    }
}
