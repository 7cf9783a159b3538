//! The walker as an episodic MDP: observations, rewards, randomization,
//! termination and the per-generation seed ledger.

pub mod config;
pub mod ledger;
pub mod observation;
pub mod reward;
pub mod walker;

use std::io::Write;

pub use config::{EnvConfig, EnvSetup, PushParams, RewardWeights, SimParams, TaskKind, Termination};
pub use ledger::{make_fair_ledger, EpisodeEvents, EpisodeKey, Push, SeedLedger};
pub use observation::{
    Observation, Phase, Privileged, Proprio, PRIVILEGED_DIM, PROPRIO_DIM, STRUCTURE_DIM, VELOCITY_DIM,
};
pub use reward::{compute_reward, tracking_kernel, RewardBreakdown, RewardInputs, TERM_NAMES};
pub use walker::{build_observation, sample_command, Command, StepInfo, StepOutcome, WalkerEnv};

pub const REWARD_CSV_HEADER: &str = "episode,step,term,value";

/// Appends one `(episode, step, term, value)` row per catalog term.
pub fn write_reward_rows<W: Write>(
    out: &mut W,
    episode: u64,
    step: usize,
    breakdown: &RewardBreakdown,
) -> std::io::Result<()> {
    for (name, value) in breakdown.terms() {
        writeln!(out, "{episode},{step},{name},{value}")?;
    }
    Ok(())
}
