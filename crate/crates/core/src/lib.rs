//! Morphology/controller co-design for a planar biped.
//!
//! A genetic algorithm searches thigh and shin lengths; each candidate's
//! fitness is the reward collected while a locomotion policy is trained on it.
//! The winning policy can then be distilled into a recurrent student that
//! only sees proprioception.

pub mod env;
pub mod error;
pub mod evolution;
pub mod metrics;
pub mod orchestrator;
pub mod rl;
pub mod rng;
pub mod sim;
pub mod table;

pub use error::{Error, Result};
