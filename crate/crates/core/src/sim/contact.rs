//! Penalty ground contact for point feet.
//!
//! Normal force is a one-sided spring-damper. Tangential force comes from a
//! spring anchored at the touchdown point plus viscous damping, clamped to the
//! Coulomb cone; when the cone saturates the anchor slides with the foot.

use serde::{Deserialize, Serialize};

use super::dynamics::{Kinematics, VecN};
use super::model::WalkerModel;
use super::state::SimState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    pub enabled: bool,
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
    pub friction: f64,
    pub tangential_stiffness: f64,
    pub tangential_damping: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            enabled: true,
            stiffness: 1e4,
            damping: 100.0,
            friction: 0.8,
            tangential_stiffness: 1e4,
            tangential_damping: 100.0,
        }
    }
}

/// Per-foot forces `[tangential, normal]` and updated stick anchors (`None`
/// when the foot is airborne).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ContactOutput {
    pub forces: [[f64; 2]; 2],
    pub anchors: [Option<f64>; 2],
}

impl ContactOutput {
    pub fn total_normal(&self) -> f64 {
        self.forces.iter().map(|f| f[1]).sum()
    }
}

/// Spring-damper normal force, never negative. `penetration` > 0 means below ground.
pub fn normal_force(penetration: f64, normal_velocity: f64, params: &ContactParams) -> f64 {
    if penetration <= 0.0 {
        return 0.0;
    }
    (params.stiffness * penetration - params.damping * normal_velocity).max(0.0)
}

/// Clamps a tangential force demand into the friction cone `|f_t| ≤ μ f_n`.
pub fn friction_clamp(demand: f64, normal: f64, mu: f64) -> f64 {
    let bound = mu * normal.max(0.0);
    demand.clamp(-bound, bound)
}

pub fn contact_forces(model: &WalkerModel, state: &SimState, params: &ContactParams) -> ContactOutput {
    let kin = Kinematics::new(model, &state.q);
    contact_from_kinematics(&kin, state, &VecN::from(state.qd), params)
}

pub(crate) fn contact_from_kinematics(
    kin: &Kinematics,
    state: &SimState,
    qd: &VecN,
    params: &ContactParams,
) -> ContactOutput {
    let mut out = ContactOutput::default();
    for i in 0..2 {
        let pos = kin.foot[i];
        let vel = kin.jac_foot[i] * qd;
        let penetration = -pos.y;
        if penetration <= 0.0 {
            continue;
        }
        let fn_ = normal_force(penetration, vel.y, params);
        let foot = &state.feet[i];
        let anchor = if foot.in_contact { foot.anchor_x } else { pos.x };
        let demand =
            -params.tangential_stiffness * (pos.x - anchor) - params.tangential_damping * vel.x;
        let ft = friction_clamp(demand, fn_, params.friction);
        let anchor = if ft != demand && params.tangential_stiffness > 0.0 {
            pos.x + (ft + params.tangential_damping * vel.x) / params.tangential_stiffness
        } else {
            anchor
        };
        out.forces[i] = [ft, fn_];
        out.anchors[i] = Some(anchor);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::model::{build_walker, JointLimits, LegLengths, TorsoSpec};
    use crate::sim::state::IDX_Z;

    #[test]
    fn hooke_normal_force() {
        let p = ContactParams::default();
        assert!((normal_force(0.001, 0.0, &p) - 10.0).abs() < 1e-12);
        assert_eq!(normal_force(-0.05, 0.0, &p), 0.0);
        // Fast separation cannot pull the foot down.
        assert_eq!(normal_force(0.001, 5.0, &p), 0.0);
    }

    #[test]
    fn cone_clamp() {
        assert!((friction_clamp(100.0, 50.0, 0.8) - 40.0).abs() < 1e-12);
        assert!((friction_clamp(-100.0, 50.0, 0.8) + 40.0).abs() < 1e-12);
        assert_eq!(friction_clamp(10.0, 50.0, 0.8), 10.0);
        assert_eq!(friction_clamp(10.0, 0.0, 0.8), 0.0);
    }

    #[test]
    fn raised_foot_has_no_force() {
        let m = build_walker(
            LegLengths::new(0.3, 0.3).unwrap(),
            2.0,
            TorsoSpec::default(),
            JointLimits::default(),
        )
        .unwrap();
        let mut s = SimState::standing(&m, [0.15, 0.0, -0.15, 0.0]);
        s.q[IDX_Z] += 0.05;
        let out = contact_forces(&m, &s, &ContactParams::default());
        assert_eq!(out.forces, [[0.0; 2]; 2]);
        assert_eq!(out.anchors, [None, None]);

        s.q[IDX_Z] -= 0.051;
        let out = contact_forces(&m, &s, &ContactParams::default());
        for f in out.forces {
            assert!((f[1] - 10.0).abs() < 1e-6);
            assert_eq!(f[0], 0.0);
        }
    }
}
