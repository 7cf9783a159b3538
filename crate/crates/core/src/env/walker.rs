//! Episodic MDP around the walker simulation.

use serde::{Deserialize, Serialize};

use super::config::{EnvConfig, SimParams, TaskKind};
use super::ledger::{EpisodeEvents, EpisodeKey, SeedLedger};
use super::observation::{Observation, Phase, Privileged, Proprio};
use super::reward::{compute_reward, RewardBreakdown, RewardInputs};
use crate::error::{Error, Result};
use crate::sim::{self, SimState, StepOptions, WalkerModel, NUM_JOINTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    /// Target forward velocity, m/s.
    pub forward_velocity: f64,
}

/// Piecewise-constant command, redrawn every `command_resample_s` seconds.
pub fn sample_command(
    task: TaskKind,
    ledger: &SeedLedger,
    key: EpisodeKey,
    time: f64,
    cfg: &EnvConfig,
) -> Result<Command> {
    if task != TaskKind::ComprehensiveLocomotion {
        return Err(Error::Domain(format!("task {task:?} has no velocity command")));
    }
    let segment = (time.max(0.0) / cfg.command_resample_s).floor() as u64;
    Ok(Command {
        forward_velocity: ledger.command_draw(key, segment, cfg.command_range),
    })
}

/// Everything besides the simulator state that an observation is built from.
#[derive(Debug, Clone, Copy)]
pub struct ObservationSources<'a> {
    pub model: &'a WalkerModel,
    pub prev_action: &'a [f64; NUM_JOINTS],
    pub command: f64,
    pub gait_period_s: f64,
    pub friction: f64,
    pub mass_offset: f64,
    pub time_to_next_push: f64,
    pub last_push_impulse: f64,
}

pub fn build_observation(state: &SimState, src: &ObservationSources<'_>, phase: Phase) -> Observation {
    let phase_angle = std::f64::consts::TAU * state.time / src.gait_period_s;
    let proprio = Proprio {
        joint_pos: state.joint_angles(),
        joint_vel: state.joint_velocities(),
        pitch: state.pitch(),
        pitch_rate: state.qd[sim::state::IDX_PITCH],
        prev_action: *src.prev_action,
        clock: [phase_angle.sin(), phase_angle.cos()],
        command: src.command,
    };
    let full = Observation {
        proprio,
        velocity: Some([state.qd[sim::state::IDX_X], state.qd[sim::state::IDX_Z]]),
        privileged: Some(Privileged {
            friction: src.friction,
            mass_offset: src.mass_offset,
            time_to_next_push: src.time_to_next_push,
            last_push_impulse: src.last_push_impulse,
        }),
        structure: Some([src.model.lengths.thigh_m(), src.model.lengths.shin_m()]),
    };
    full.for_phase(phase)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    /// A termination predicate fired (fall).
    pub terminated: bool,
    /// Episode-length cap reached.
    pub truncated: bool,
    pub diverged: bool,
    /// Mean over substeps of Σ |τ·ω|, W.
    pub power: f64,
    pub forward_velocity: f64,
    pub command: f64,
    pub time: f64,
    pub episode_return: f64,
    pub episode_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub info: StepInfo,
}

/// One simulated environment. Single writer; independent instances share nothing.
#[derive(Debug, Clone)]
pub struct WalkerEnv {
    cfg: EnvConfig,
    sim: SimParams,
    base: WalkerModel,
    model: WalkerModel,
    opts: StepOptions,
    nominal_height: f64,
    env_index: u64,
    episodes_started: u64,
    ledger: Option<SeedLedger>,
    key: EpisodeKey,
    events: EpisodeEvents,
    next_push: usize,
    last_push: f64,
    state: SimState,
    prev_action: [f64; NUM_JOINTS],
    command: f64,
    steps: usize,
    episode_return: f64,
    max_steps: usize,
}

impl WalkerEnv {
    pub fn new(model: WalkerModel, sim: SimParams, cfg: EnvConfig, env_index: u64) -> Self {
        let nominal_height = SimState::standing(&model, cfg.nominal_stance).torso_height();
        let opts = StepOptions {
            contact: sim.contact,
            fixed_base: false,
        };
        let state = SimState::standing(&model, cfg.nominal_stance);
        Self {
            max_steps: cfg.episode_steps(&sim),
            cfg,
            sim,
            model: model.clone(),
            base: model,
            opts,
            nominal_height,
            env_index,
            episodes_started: 0,
            ledger: None,
            key: EpisodeKey { env: env_index, episode: 0 },
            events: EpisodeEvents {
                friction: sim.contact.friction,
                mass_offset: 0.0,
                joint_jitter: [0.0; NUM_JOINTS],
                pushes: Vec::new(),
            },
            next_push: 0,
            last_push: 0.0,
            state,
            prev_action: cfg.nominal_stance,
            command: 0.0,
            steps: 0,
            episode_return: 0.0,
        }
    }

    pub fn model(&self) -> &WalkerModel {
        &self.base
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn nominal_height(&self) -> f64 {
        self.nominal_height
    }

    pub fn episode_key(&self) -> EpisodeKey {
        self.key
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    /// Starts the next episode of this environment under `ledger`.
    pub fn reset(&mut self, ledger: &SeedLedger) -> Observation {
        let episode = self.episodes_started;
        self.reset_episode(ledger, episode)
    }

    /// Starts a specific episode index; later `reset` calls continue from it.
    pub fn reset_episode(&mut self, ledger: &SeedLedger, episode: u64) -> Observation {
        self.key = EpisodeKey { env: self.env_index, episode };
        self.episodes_started = episode + 1;
        self.ledger = Some(*ledger);
        self.events = ledger.episode_events(self.key, &self.cfg);
        // The randomization range is validated so the offset model stays valid;
        // fall back to the nominal torso otherwise.
        self.model = self
            .base
            .with_torso_mass_offset(self.events.mass_offset)
            .unwrap_or_else(|_| self.base.clone());
        self.opts.contact.friction = self.events.friction;
        let mut stance = self.cfg.nominal_stance;
        for (q, j) in stance.iter_mut().zip(self.events.joint_jitter.iter()) {
            *q += j;
        }
        self.state = SimState::standing(&self.model, stance);
        self.prev_action = self.cfg.nominal_stance;
        self.next_push = 0;
        self.last_push = 0.0;
        self.steps = 0;
        self.episode_return = 0.0;
        self.command = self.current_command();
        self.observe(Phase::Teacher)
    }

    fn current_command(&self) -> f64 {
        match (self.cfg.task, &self.ledger) {
            (TaskKind::ComprehensiveLocomotion, Some(ledger)) => {
                sample_command(self.cfg.task, ledger, self.key, self.state.time, &self.cfg)
                    .map(|c| c.forward_velocity)
                    .unwrap_or(0.0)
            }
            _ => 0.0,
        }
    }

    fn time_to_next_push(&self) -> f64 {
        match self.events.pushes.get(self.next_push) {
            Some(p) => (p.time - self.state.time).max(0.0),
            None => (self.cfg.episode_length_s - self.state.time).max(0.0),
        }
    }

    pub fn observe(&self, phase: Phase) -> Observation {
        let src = ObservationSources {
            model: &self.base,
            prev_action: &self.prev_action,
            command: self.command,
            gait_period_s: self.cfg.gait_period_s,
            friction: self.events.friction,
            mass_offset: self.events.mass_offset,
            time_to_next_push: self.time_to_next_push(),
            last_push_impulse: self.last_push,
        };
        build_observation(&self.state, &src, phase)
    }

    fn apply_due_pushes(&mut self) {
        while let Some(p) = self.events.pushes.get(self.next_push) {
            if p.time > self.state.time + 1e-12 {
                break;
            }
            self.state = sim::apply_push(&self.model, &self.state, p.impulse);
            self.last_push = p.impulse;
            self.next_push += 1;
        }
    }

    /// Applies desired joint positions for one control period.
    pub fn step(&mut self, action: &[f64; NUM_JOINTS]) -> Result<StepOutcome> {
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::Domain(format!("non-finite action {action:?}")));
        }
        let q_des: [f64; NUM_JOINTS] = std::array::from_fn(|j| self.model.joints[j].clamp(action[j]));
        let command = self.command;
        let mut torque_sq = 0.0;
        let mut power = 0.0;
        let mut diverged = false;
        for _ in 0..self.sim.substeps {
            self.apply_due_pushes();
            let tau = sim::joint_torques(&self.model, &self.sim.gains, &self.state, &q_des);
            let qd = self.state.joint_velocities();
            torque_sq += tau.iter().map(|t| t * t).sum::<f64>();
            power += tau.iter().zip(qd.iter()).map(|(t, w)| (t * w).abs()).sum::<f64>();
            match sim::step(&self.model, &self.state, &tau, self.sim.physics_dt, &self.opts) {
                Ok(next) => self.state = next,
                Err(_) => {
                    diverged = true;
                    break;
                }
            }
        }
        let n = self.sim.substeps as f64;
        self.steps += 1;

        let reward = if diverged {
            RewardBreakdown::failure(&self.cfg)
        } else {
            let joints = self.state.joint_angles();
            compute_reward(
                self.cfg.task,
                &self.cfg,
                &self.model,
                &RewardInputs {
                    forward_velocity: self.state.forward_velocity(),
                    command,
                    torque_sq: torque_sq / n,
                    action,
                    prev_action: &self.prev_action,
                    pitch: self.state.pitch(),
                    height: self.state.torso_height(),
                    nominal_height: self.nominal_height,
                    joints: &joints,
                },
            )
        };
        self.episode_return += reward.total;
        self.prev_action = *action;

        let t = &self.cfg.termination;
        let terminated = !diverged
            && (self.state.torso_height() < t.height_fraction * self.nominal_height
                || self.state.pitch().abs() > t.max_pitch);
        let truncated = !diverged && !terminated && self.steps >= self.max_steps;
        if !diverged {
            self.command = self.current_command();
        }
        let info = StepInfo {
            terminated,
            truncated,
            diverged,
            power: power / n,
            forward_velocity: self.state.forward_velocity(),
            command,
            time: self.state.time,
            episode_return: self.episode_return,
            episode_steps: self.steps,
        };
        Ok(StepOutcome {
            observation: self.observe(Phase::Teacher),
            reward,
            done: terminated || truncated || diverged,
            info,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ledger::make_fair_ledger;
    use crate::sim::{build_walker, LegLengths};

    fn env(t: f64, s: f64) -> WalkerEnv {
        let sim = SimParams::default();
        let model = build_walker(LegLengths::new(t, s).unwrap(), sim.density, sim.torso, sim.limits).unwrap();
        WalkerEnv::new(model, sim, EnvConfig::default(), 0)
    }

    #[test]
    fn identical_ledgers_give_identical_resets() {
        let ledger = make_fair_ledger(2, 11);
        let (mut a, mut b) = (env(0.3, 0.3), env(0.3, 0.3));
        assert_eq!(a.reset(&ledger), b.reset(&ledger));
        let other = make_fair_ledger(3, 11);
        let mut c = env(0.3, 0.3);
        assert_ne!(a.reset_episode(&ledger, 0), c.reset(&other));
    }

    #[test]
    fn reset_respects_joint_limits() {
        let ledger = make_fair_ledger(0, 5);
        let mut e = env(0.2, 0.4);
        for _ in 0..50 {
            let obs = e.reset(&ledger);
            for (q, lim) in obs.proprio.joint_pos.iter().zip(e.model().joints.iter()) {
                assert!(*q >= lim.lower && *q <= lim.upper);
            }
        }
    }

    #[test]
    fn command_is_piecewise_constant() {
        let cfg = EnvConfig::default();
        let ledger = make_fair_ledger(0, 5);
        let key = EpisodeKey { env: 1, episode: 2 };
        let task = TaskKind::ComprehensiveLocomotion;
        let c0 = sample_command(task, &ledger, key, 0.0, &cfg).unwrap();
        let c1 = sample_command(task, &ledger, key, 4.9, &cfg).unwrap();
        let c2 = sample_command(task, &ledger, key, 5.1, &cfg).unwrap();
        assert_eq!(c0, c1);
        assert_ne!(c0, c2);
        assert!(matches!(
            sample_command(TaskKind::MaxVelocity, &ledger, key, 0.0, &cfg),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn command_draws_in_range() {
        let cfg = EnvConfig::default();
        let ledger = make_fair_ledger(1, 5);
        for k in 0..1000u64 {
            let key = EpisodeKey { env: k % 13, episode: k };
            let c = sample_command(TaskKind::ComprehensiveLocomotion, &ledger, key, k as f64 * 0.37, &cfg)
                .unwrap()
                .forward_velocity;
            assert!((0.0..=1.5).contains(&c));
        }
    }

    #[test]
    fn standing_still_under_zero_command() {
        let mut cfg = EnvConfig::default();
        cfg.command_range = (0.0, 0.0);
        cfg.push.enabled = false;
        let sim = SimParams::default();
        let model = build_walker(LegLengths::new(0.3, 0.3).unwrap(), sim.density, sim.torso, sim.limits).unwrap();
        let mut e = WalkerEnv::new(model, sim, cfg, 0);
        e.reset(&make_fair_ledger(0, 3));
        let stance = cfg.nominal_stance;
        let mut last = None;
        for _ in 0..50 {
            let out = e.step(&stance).unwrap();
            assert!(!out.done);
            last = Some(out);
        }
        let r = last.unwrap().reward;
        assert!(r.values[0] > 0.99, "tracking {}", r.values[0]);
        assert!(r.weighted(6) > r.weighted(1).abs() + r.weighted(2).abs() + r.weighted(3).abs());
    }

    #[test]
    fn collapse_terminates() {
        let mut e = env(0.3, 0.3);
        e.reset(&make_fair_ledger(0, 3));
        // Fold both knees fully: the hip sinks below the height threshold.
        let fold = [1.5, -1.5, 1.5, -1.5];
        let mut done = false;
        for _ in 0..200 {
            let out = e.step(&fold).unwrap();
            if out.done {
                assert!(out.info.terminated);
                done = true;
                break;
            }
        }
        assert!(done);
    }

    #[test]
    fn reward_stream_is_deterministic() {
        let ledger = make_fair_ledger(4, 8);
        let run = || {
            let mut e = env(0.33, 0.27);
            e.reset(&ledger);
            (0..300)
                .map(|k| {
                    let a = [0.3 * (k as f64 * 0.2).sin(), -0.3, -0.2, -0.1];
                    let out = e.step(&a).unwrap();
                    if out.done {
                        e.reset(&ledger);
                    }
                    (out.reward.total, out.observation)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn student_layout_hides_privileged_layers() {
        let mut e = env(0.31, 0.36);
        let obs = e.reset(&make_fair_ledger(0, 1));
        assert_eq!(obs.structure, Some([0.31, 0.36]));
        let s = obs.for_phase(Phase::Student);
        assert!(s.velocity.is_none() && s.privileged.is_none() && s.structure.is_none());
        assert_eq!(s.dim(), super::super::observation::PROPRIO_DIM);
        let out = e.step(&EnvConfig::default().nominal_stance).unwrap();
        assert_eq!(out.observation.dim(), obs.dim());
    }

    #[test]
    fn non_finite_action_rejected() {
        let mut e = env(0.3, 0.3);
        e.reset(&make_fair_ledger(0, 1));
        assert!(e.step(&[f64::NAN, 0.0, 0.0, 0.0]).is_err());
    }
}
