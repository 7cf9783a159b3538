use serde::{Deserialize, Serialize};

use crate::sim::NUM_JOINTS;

/// joints (pos, vel, previous action), pitch, pitch rate, clock pair, command.
pub const PROPRIO_DIM: usize = 3 * NUM_JOINTS + 5;
pub const VELOCITY_DIM: usize = 2;
pub const PRIVILEGED_DIM: usize = 4;
pub const STRUCTURE_DIM: usize = 2;

/// Which observation layout to build: the privileged teacher or the
/// deployable student.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Teacher,
    Student,
}

/// Proprioceptive record `o_t`. The forward-velocity command is included
/// because a tracking policy cannot act without it; it is zero for tasks
/// without a command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proprio {
    pub joint_pos: [f64; NUM_JOINTS],
    pub joint_vel: [f64; NUM_JOINTS],
    pub pitch: f64,
    pub pitch_rate: f64,
    pub prev_action: [f64; NUM_JOINTS],
    /// (sin, cos) of the gait phase.
    pub clock: [f64; 2],
    pub command: f64,
}

impl Proprio {
    pub fn to_array(&self) -> [f64; PROPRIO_DIM] {
        let mut out = [0.0; PROPRIO_DIM];
        out[0..4].copy_from_slice(&self.joint_pos);
        out[4..8].copy_from_slice(&self.joint_vel);
        out[8] = self.pitch;
        out[9] = self.pitch_rate;
        out[10..14].copy_from_slice(&self.prev_action);
        out[14..16].copy_from_slice(&self.clock);
        out[16] = self.command;
        out
    }
}

/// Simulator-only information `e_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Privileged {
    pub friction: f64,
    pub mass_offset: f64,
    pub time_to_next_push: f64,
    pub last_push_impulse: f64,
}

impl Privileged {
    pub fn to_array(&self) -> [f64; PRIVILEGED_DIM] {
        [self.friction, self.mass_offset, self.time_to_next_push, self.last_push_impulse]
    }
}

/// Layered observation. Teacher observations carry every layer; student
/// observations carry only `proprio`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub proprio: Proprio,
    /// Torso (forward, vertical) velocity, m/s.
    pub velocity: Option<[f64; VELOCITY_DIM]>,
    pub privileged: Option<Privileged>,
    /// (thigh, shin) lengths, m.
    pub structure: Option<[f64; STRUCTURE_DIM]>,
}

impl Observation {
    pub fn phase(&self) -> Phase {
        if self.privileged.is_some() {
            Phase::Teacher
        } else {
            Phase::Student
        }
    }

    /// Strips layers that the given phase must not see.
    pub fn for_phase(&self, phase: Phase) -> Self {
        match phase {
            Phase::Teacher => *self,
            Phase::Student => Self {
                proprio: self.proprio,
                velocity: None,
                privileged: None,
                structure: None,
            },
        }
    }

    pub fn dim(&self) -> usize {
        PROPRIO_DIM
            + self.velocity.map_or(0, |_| VELOCITY_DIM)
            + self.privileged.map_or(0, |_| PRIVILEGED_DIM)
            + self.structure.map_or(0, |_| STRUCTURE_DIM)
    }

    /// Concatenation `o_t ⊕ v_t ⊕ e_t ⊕ L_i` of the present layers.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&self.proprio.to_array());
        if let Some(v) = self.velocity {
            out.extend_from_slice(&v);
        }
        if let Some(p) = self.privileged {
            out.extend_from_slice(&p.to_array());
        }
        if let Some(s) = self.structure {
            out.extend_from_slice(&s);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}
