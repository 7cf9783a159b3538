use serde::{Deserialize, Serialize};

use super::model::{WalkerModel, NUM_JOINTS};

/// Generalized coordinates: torso x, torso z, torso pitch, then the four joints.
pub const NDOF: usize = 3 + NUM_JOINTS;
pub const IDX_X: usize = 0;
pub const IDX_Z: usize = 1;
pub const IDX_PITCH: usize = 2;
pub const IDX_JOINT0: usize = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FootContact {
    pub in_contact: bool,
    /// (tangential, normal) force on the foot, N.
    pub force: [f64; 2],
    /// Stick point of the tangential spring; meaningful only while in contact.
    pub anchor_x: f64,
}

/// Full simulator state. `(x, z)` is the hip point at the base of the torso.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub q: [f64; NDOF],
    pub qd: [f64; NDOF],
    pub time: f64,
    pub feet: [FootContact; 2],
}

impl SimState {
    /// Places the walker at rest with the given joint angles and the lowest
    /// foot exactly at ground height, torso upright.
    pub fn standing(model: &WalkerModel, joints: [f64; NUM_JOINTS]) -> Self {
        let mut q = [0.0; NDOF];
        for (j, (&a, lim)) in joints.iter().zip(model.joints.iter()).enumerate() {
            q[IDX_JOINT0 + j] = lim.clamp(a);
        }
        let mut state = Self {
            q,
            qd: [0.0; NDOF],
            time: 0.0,
            feet: [FootContact::default(); 2],
        };
        let lowest = super::dynamics::foot_positions(model, &state)
            .iter()
            .map(|p| p[1])
            .fold(f64::INFINITY, f64::min);
        state.q[IDX_Z] = -lowest;
        state
    }

    pub fn joint_angles(&self) -> [f64; NUM_JOINTS] {
        let mut out = [0.0; NUM_JOINTS];
        out.copy_from_slice(&self.q[IDX_JOINT0..]);
        out
    }

    pub fn joint_velocities(&self) -> [f64; NUM_JOINTS] {
        let mut out = [0.0; NUM_JOINTS];
        out.copy_from_slice(&self.qd[IDX_JOINT0..]);
        out
    }

    pub fn torso_height(&self) -> f64 {
        self.q[IDX_Z]
    }

    pub fn pitch(&self) -> f64 {
        self.q[IDX_PITCH]
    }

    pub fn forward_velocity(&self) -> f64 {
        self.qd[IDX_X]
    }

    /// First non-finite entry, if any, named for diagnostics.
    pub fn first_non_finite(&self) -> Option<(String, f64)> {
        let named = self
            .q
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("q[{i}]"), *v))
            .chain(self.qd.iter().enumerate().map(|(i, v)| (format!("qd[{i}]"), *v)))
            .chain(std::iter::once(("time".to_string(), self.time)));
        named.into_iter().find(|(_, v)| !v.is_finite())
    }
}
