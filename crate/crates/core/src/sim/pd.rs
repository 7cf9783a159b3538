use serde::{Deserialize, Serialize};

use super::model::{WalkerModel, NUM_JOINTS};
use super::state::SimState;
use crate::error::{Error, Result};

/// Per-joint proportional and derivative gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdGains {
    /// N·m/rad
    pub kp: [f64; NUM_JOINTS],
    /// N·m·s/rad
    pub kd: [f64; NUM_JOINTS],
}

impl Default for PdGains {
    fn default() -> Self {
        Self {
            kp: [40.0; NUM_JOINTS],
            kd: [1.5; NUM_JOINTS],
        }
    }
}

impl PdGains {
    pub fn validate(&self) -> Result<()> {
        if self.kp.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
            return Err(Error::config("sim.gains.kp", "all gains must be > 0"));
        }
        if self.kd.iter().any(|&k| !(k >= 0.0 && k.is_finite())) {
            return Err(Error::config("sim.gains.kd", "all gains must be >= 0"));
        }
        Ok(())
    }
}

/// `clamp(kp (q_des − q) − kd q̇, −limit, limit)`.
pub fn pd_torque(kp: f64, kd: f64, q_des: f64, q: f64, q_dot: f64, limit: f64) -> f64 {
    (kp * (q_des - q) - kd * q_dot).clamp(-limit, limit)
}

/// Joint torques for desired positions, with torque saturation and no drive
/// beyond the joint speed limit.
pub fn joint_torques(
    model: &WalkerModel,
    gains: &PdGains,
    state: &SimState,
    q_des: &[f64; NUM_JOINTS],
) -> [f64; NUM_JOINTS] {
    let q = state.joint_angles();
    let qd = state.joint_velocities();
    std::array::from_fn(|j| {
        let lim = &model.joints[j];
        let tau = pd_torque(gains.kp[j], gains.kd[j], q_des[j], q[j], qd[j], lim.torque);
        if qd[j].abs() > lim.velocity && tau * qd[j] > 0.0 {
            0.0
        } else {
            tau
        }
    })
}
