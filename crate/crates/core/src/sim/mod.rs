//! Deterministic planar simulation of a five-link point-foot biped.

pub mod contact;
pub mod dynamics;
pub mod model;
pub mod pd;
pub mod state;

pub use contact::{contact_forces, friction_clamp, normal_force, ContactOutput, ContactParams};
pub use dynamics::{
    apply_push, foot_positions, generalized_momentum, mechanical_energy, step, Kinematics,
    StepOptions,
};
pub use model::{
    build_walker, DesignSpace, JointLimit, JointLimits, LegLengths, Link, TorsoSpec, WalkerModel,
    NUM_JOINTS,
};
pub use pd::{joint_torques, pd_torque, PdGains};
pub use state::{FootContact, SimState, NDOF};
