use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{ContactParams, JointLimits, PdGains, TorsoSpec, NUM_JOINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Track a commanded forward speed while being pushed.
    ComprehensiveLocomotion,
    /// Go as fast as possible.
    MaxVelocity,
}

/// Physical and integration parameters of the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub physics_dt: f64,
    /// Physics substeps per control step.
    pub substeps: usize,
    /// Leg-link linear mass density, kg/m.
    pub density: f64,
    pub torso: TorsoSpec,
    pub limits: JointLimits,
    pub contact: ContactParams,
    pub gains: PdGains,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            physics_dt: 1e-3,
            substeps: 20,
            density: 2.0,
            torso: TorsoSpec::default(),
            limits: JointLimits::default(),
            contact: ContactParams::default(),
            gains: PdGains::default(),
        }
    }
}

impl SimParams {
    pub fn control_dt(&self) -> f64 {
        self.physics_dt * self.substeps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.physics_dt > 0.0 && self.physics_dt <= 0.01) {
            return Err(Error::config("sim.physics_dt", "must lie in (0, 0.01]"));
        }
        if self.substeps == 0 {
            return Err(Error::config("sim.substeps", "must be >= 1"));
        }
        if !(self.density > 0.0) {
            return Err(Error::config("sim.density", "must be > 0"));
        }
        if !(self.torso.mass > 0.0 && self.torso.length > 0.0) {
            return Err(Error::config("sim.torso", "mass and length must be > 0"));
        }
        for (name, l) in [("hip", self.limits.hip), ("knee", self.limits.knee)] {
            if !(l.lower < l.upper && l.torque > 0.0 && l.velocity > 0.0) {
                return Err(Error::config(
                    format!("sim.limits.{name}"),
                    "need lower < upper and positive torque/velocity limits",
                ));
            }
        }
        let c = &self.contact;
        if !(c.stiffness > 0.0) {
            return Err(Error::config("sim.contact.stiffness", "must be > 0"));
        }
        if !(c.damping >= 0.0 && c.tangential_damping >= 0.0 && c.tangential_stiffness >= 0.0) {
            return Err(Error::config("sim.contact", "damping and tangential stiffness must be >= 0"));
        }
        if !(c.friction >= 0.0) {
            return Err(Error::config("sim.contact.friction", "must be >= 0"));
        }
        self.gains.validate()
    }
}

/// Weights of the reward catalog. Penalty weights are negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub task: f64,
    pub torque: f64,
    pub action_rate: f64,
    pub pitch: f64,
    pub height: f64,
    pub joint_limit: f64,
    pub alive: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            task: 1.0,
            torque: -1e-4,
            action_rate: -0.01,
            pitch: -0.5,
            height: -1.0,
            joint_limit: -1.0,
            alive: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PushParams {
    pub enabled: bool,
    pub interval_s: f64,
    /// Pushes land up to this much earlier than the nominal interval.
    pub jitter_s: f64,
    /// Impulse magnitude range, kg·m/s; the sign is drawn separately.
    pub impulse_range: (f64, f64),
}

impl Default for PushParams {
    fn default() -> Self {
        Self {
            enabled: true,
            interval_s: 5.0,
            jitter_s: 1.0,
            impulse_range: (2.0, 6.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Termination {
    /// Episode ends when hip height drops below this fraction of nominal.
    pub height_fraction: f64,
    /// |pitch| limit, rad.
    pub max_pitch: f64,
    /// Reward assigned on simulator divergence.
    pub failure_penalty: f64,
}

impl Default for Termination {
    fn default() -> Self {
        Self {
            height_fraction: 0.4,
            max_pitch: 1.0,
            failure_penalty: -10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub task: TaskKind,
    pub episode_length_s: f64,
    pub rewards: RewardWeights,
    /// Width of the velocity-tracking kernel, m/s.
    pub tracking_sigma: f64,
    /// Scale of the forward-velocity task term.
    pub velocity_reward_scale: f64,
    pub command_range: (f64, f64),
    pub command_resample_s: f64,
    pub push: PushParams,
    pub friction_range: (f64, f64),
    pub mass_offset_range: (f64, f64),
    pub init_jitter_rad: f64,
    pub termination: Termination,
    pub nominal_stance: [f64; NUM_JOINTS],
    pub gait_period_s: f64,
    /// Fraction of the joint range beyond which the joint-limit penalty applies.
    pub soft_limit_fraction: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::ComprehensiveLocomotion,
            episode_length_s: 20.0,
            rewards: RewardWeights::default(),
            tracking_sigma: 0.25,
            velocity_reward_scale: 1.0,
            command_range: (0.0, 1.5),
            command_resample_s: 5.0,
            push: PushParams::default(),
            friction_range: (0.4, 1.0),
            mass_offset_range: (-0.5, 0.5),
            init_jitter_rad: 0.05,
            termination: Termination::default(),
            nominal_stance: [0.15, 0.0, -0.15, 0.0],
            gait_period_s: 0.8,
            soft_limit_fraction: 0.9,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !(self.episode_length_s > 0.0) {
            return Err(Error::config("env.episode_length_s", "must be > 0"));
        }
        if !(self.tracking_sigma > 0.0) {
            return Err(Error::config("env.tracking_sigma", "must be > 0"));
        }
        if !range_ok(self.command_range) || self.command_range.0 < 0.0 {
            return Err(Error::config("env.command_range", "need 0 <= min <= max"));
        }
        if !(self.command_resample_s > 0.0) {
            return Err(Error::config("env.command_resample_s", "must be > 0"));
        }
        if !range_ok(self.friction_range) || self.friction_range.0 < 0.0 {
            return Err(Error::config("env.friction_range", "need 0 <= min <= max"));
        }
        if !range_ok(self.mass_offset_range) {
            return Err(Error::config("env.mass_offset_range", "need min <= max"));
        }
        if !(self.init_jitter_rad >= 0.0) {
            return Err(Error::config("env.init_jitter_rad", "must be >= 0"));
        }
        let p = &self.push;
        if !(p.interval_s > 0.0) {
            return Err(Error::config("env.push.interval_s", "must be > 0"));
        }
        if !(p.jitter_s >= 0.0 && p.jitter_s < p.interval_s) {
            return Err(Error::config("env.push.jitter_s", "need 0 <= jitter < interval"));
        }
        if !range_ok(p.impulse_range) || p.impulse_range.0 < 0.0 {
            return Err(Error::config("env.push.impulse_range", "need 0 <= min <= max"));
        }
        let t = &self.termination;
        if !(t.height_fraction > 0.0 && t.height_fraction < 1.0) {
            return Err(Error::config("env.termination.height_fraction", "must lie in (0, 1)"));
        }
        if !(t.max_pitch > 0.0) {
            return Err(Error::config("env.termination.max_pitch", "must be > 0"));
        }
        if !(self.gait_period_s > 0.0) {
            return Err(Error::config("env.gait_period_s", "must be > 0"));
        }
        if !(self.soft_limit_fraction > 0.0 && self.soft_limit_fraction <= 1.0) {
            return Err(Error::config("env.soft_limit_fraction", "must lie in (0, 1]"));
        }
        if self.rewards.alive < 0.0 {
            return Err(Error::config("env.rewards.alive", "alive bonus must be >= 0"));
        }
        Ok(())
    }

    pub fn episode_steps(&self, sim: &SimParams) -> usize {
        (self.episode_length_s / sim.control_dt()).round() as usize
    }
}

/// Simulator and MDP settings shared by every environment of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSetup {
    pub sim: SimParams,
    pub env: EnvConfig,
}

impl EnvSetup {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.env.validate()
    }
}
