//! Reward catalog: one task term plus regularizers.

use serde::{Deserialize, Serialize};

use super::config::{EnvConfig, TaskKind};
use crate::sim::{WalkerModel, NUM_JOINTS};

pub const TERM_NAMES: [&str; 8] = [
    "task",
    "torque",
    "action_rate",
    "pitch",
    "height",
    "joint_limit",
    "alive",
    "failure",
];

/// Raw term values and their weights. `total` is always
/// `Σ weights[i] * values[i]`, accumulated in catalog order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub values: [f64; 8],
    pub weights: [f64; 8],
    pub total: f64,
}

impl RewardBreakdown {
    fn from_parts(values: [f64; 8], weights: [f64; 8]) -> Self {
        let total = values.iter().zip(weights.iter()).fold(0.0, |acc, (v, w)| acc + w * v);
        Self { values, weights, total }
    }

    pub fn weighted(&self, index: usize) -> f64 {
        self.weights[index] * self.values[index]
    }

    pub fn terms(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        TERM_NAMES.iter().copied().zip(self.values.iter().copied())
    }

    /// Breakdown of a step on which the simulator diverged.
    pub fn failure(cfg: &EnvConfig) -> Self {
        let mut weights = weights(cfg);
        weights[7] = cfg.termination.failure_penalty;
        let mut values = [0.0; 8];
        values[7] = 1.0;
        Self::from_parts(values, weights)
    }
}

fn weights(cfg: &EnvConfig) -> [f64; 8] {
    let w = &cfg.rewards;
    [
        w.task,
        w.torque,
        w.action_rate,
        w.pitch,
        w.height,
        w.joint_limit,
        w.alive,
        cfg.termination.failure_penalty,
    ]
}

/// Quantities of one control step that the reward depends on.
#[derive(Debug, Clone, Copy)]
pub struct RewardInputs<'a> {
    pub forward_velocity: f64,
    pub command: f64,
    /// Mean over physics substeps of Σ τ².
    pub torque_sq: f64,
    pub action: &'a [f64; NUM_JOINTS],
    pub prev_action: &'a [f64; NUM_JOINTS],
    pub pitch: f64,
    pub height: f64,
    pub nominal_height: f64,
    pub joints: &'a [f64; NUM_JOINTS],
}

/// Gaussian velocity-tracking kernel, in (0, 1].
pub fn tracking_kernel(velocity: f64, command: f64, sigma: f64) -> f64 {
    let e = velocity - command;
    (-(e * e) / (sigma * sigma)).exp()
}

pub fn compute_reward(
    task: TaskKind,
    cfg: &EnvConfig,
    model: &WalkerModel,
    inputs: &RewardInputs<'_>,
) -> RewardBreakdown {
    let task_term = match task {
        TaskKind::ComprehensiveLocomotion => {
            tracking_kernel(inputs.forward_velocity, inputs.command, cfg.tracking_sigma)
        }
        TaskKind::MaxVelocity => cfg.velocity_reward_scale * inputs.forward_velocity,
    };
    let action_rate: f64 = inputs
        .action
        .iter()
        .zip(inputs.prev_action.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let joint_limit: f64 = inputs
        .joints
        .iter()
        .zip(model.joints.iter())
        .map(|(&q, lim)| {
            let mid = 0.5 * (lim.upper + lim.lower);
            let half = 0.5 * (lim.upper - lim.lower) * cfg.soft_limit_fraction;
            ((q - mid).abs() - half).max(0.0)
        })
        .sum();
    let dh = inputs.height - inputs.nominal_height;
    let values = [
        task_term,
        inputs.torque_sq,
        action_rate,
        inputs.pitch * inputs.pitch,
        dh * dh,
        joint_limit,
        1.0,
        0.0,
    ];
    RewardBreakdown::from_parts(values, weights(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{build_walker, JointLimits, LegLengths, TorsoSpec};

    fn model() -> WalkerModel {
        build_walker(LegLengths::new(0.3, 0.3).unwrap(), 2.0, TorsoSpec::default(), JointLimits::default())
            .unwrap()
    }

    fn inputs<'a>(v: f64, cmd: f64, a: &'a [f64; 4], p: &'a [f64; 4]) -> RewardInputs<'a> {
        RewardInputs {
            forward_velocity: v,
            command: cmd,
            torque_sq: 0.0,
            action: a,
            prev_action: p,
            pitch: 0.0,
            height: 0.6,
            nominal_height: 0.6,
            joints: a,
        }
    }

    #[test]
    fn tracking_peaks_at_command() {
        let cfg = EnvConfig::default();
        let a = [0.0; 4];
        let r = compute_reward(TaskKind::ComprehensiveLocomotion, &cfg, &model(), &inputs(0.7, 0.7, &a, &a));
        assert_eq!(r.values[0], 1.0);
        assert_eq!(r.values[1], 0.0);
        assert_eq!(r.values[2], 0.0);
        assert!(tracking_kernel(0.5, 0.7, 0.25) < 1.0);
        assert!(tracking_kernel(50.0, 0.0, 0.25) >= 0.0);
    }

    #[test]
    fn max_velocity_term_is_linear() {
        let cfg = EnvConfig::default();
        let a = [0.0; 4];
        let r0 = compute_reward(TaskKind::MaxVelocity, &cfg, &model(), &inputs(0.0, 0.0, &a, &a));
        assert_eq!(r0.values[0], 0.0);
        let r1 = compute_reward(TaskKind::MaxVelocity, &cfg, &model(), &inputs(1.3, 0.0, &a, &a));
        assert!((r1.values[0] - 1.3).abs() < 1e-15);
    }

    #[test]
    fn total_is_weighted_sum() {
        let cfg = EnvConfig::default();
        let a = [0.1, -1.45, 0.3, 1.4];
        let p = [0.0, -1.0, 0.2, 1.0];
        let mut inp = inputs(0.4, 1.1, &a, &p);
        inp.torque_sq = 350.0;
        inp.pitch = 0.2;
        inp.height = 0.5;
        let r = compute_reward(TaskKind::ComprehensiveLocomotion, &cfg, &model(), &inp);
        let mut sum = 0.0;
        for i in 0..8 {
            sum += r.weighted(i);
        }
        assert_eq!(r.total, sum);
        assert!(r.values[5] > 0.0, "joint-limit penalty should be active");
        let f = RewardBreakdown::failure(&cfg);
        assert_eq!(f.total, cfg.termination.failure_penalty);
    }
}
