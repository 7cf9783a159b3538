//! Fixed-column CSV exports.

use crate::evolution::GenerationRecord;
use crate::metrics::GenerationStats;
use crate::rl::{DistillStats, IterationStats};
use crate::table::{num, Table};

pub const GENERATIONS_HEADER: [&str; 8] = [
    "generation",
    "index",
    "genome",
    "thigh_m",
    "shin_m",
    "total_reward",
    "shifted_fitness",
    "failed",
];

pub fn generations_table(history: &[GenerationRecord]) -> Table {
    let mut t = Table::new(&GENERATIONS_HEADER);
    for g in history {
        for (i, ind) in g.individuals.iter().enumerate() {
            t.push(vec![
                g.generation.to_string(),
                i.to_string(),
                ind.genome.to_string(),
                num(ind.thigh_m),
                num(ind.shin_m),
                num(ind.total_reward),
                num(ind.shifted_fitness),
                (ind.failed as u8).to_string(),
            ]);
        }
    }
    t
}

pub const POPULATION_HEADER: [&str; 11] = [
    "generation",
    "mean_reward",
    "reward_variance",
    "max_fitness",
    "thigh_mean",
    "thigh_std",
    "shin_mean",
    "shin_std",
    "best_thigh_m",
    "best_shin_m",
    "best_reward",
];

pub fn population_table(history: &[GenerationRecord], stats: &[GenerationStats]) -> Table {
    let mut t = Table::new(&POPULATION_HEADER);
    for (g, s) in history.iter().zip(stats) {
        let best = &g.individuals[g.best_index];
        t.push(vec![
            s.generation.to_string(),
            num(s.mean_reward),
            num(s.reward_variance),
            num(s.max_fitness),
            num(s.thigh.mean),
            num(s.thigh.std),
            num(s.shin.mean),
            num(s.shin.std),
            num(best.thigh_m),
            num(best.shin_m),
            num(best.total_reward),
        ]);
    }
    t
}

pub const TRAIN_TRACE_HEADER: [&str; 13] = [
    "phase",
    "iteration",
    "mean_reward",
    "mean_episode_return",
    "episodes_completed",
    "diverged_envs",
    "surrogate",
    "value_loss",
    "entropy",
    "approx_kl",
    "clip_fraction",
    "grad_norm",
    "aborted",
];

pub fn train_trace_table<'a>(rows: impl IntoIterator<Item = (&'a str, &'a IterationStats)>) -> Table {
    let mut t = Table::new(&TRAIN_TRACE_HEADER);
    for (phase, s) in rows {
        let u = &s.update;
        t.push(vec![
            phase.to_string(),
            s.iteration.to_string(),
            num(s.mean_reward),
            num(s.mean_episode_return),
            s.episodes_completed.to_string(),
            s.diverged_envs.to_string(),
            num(u.surrogate),
            num(u.value),
            num(u.entropy),
            num(u.approx_kl),
            num(u.clip_fraction),
            num(u.grad_norm),
            (u.aborted.is_some() as u8).to_string(),
        ]);
    }
    t
}

pub const DISTILL_TRACE_HEADER: [&str; 6] = ["iteration", "updated", "action_rms", "velocity_rms", "loss", "mean_reward"];

/// Rows at or past `iterations` are measurements without a following update.
pub fn distill_trace_table(trace: &[DistillStats], iterations: usize) -> Table {
    let mut t = Table::new(&DISTILL_TRACE_HEADER);
    for s in trace {
        t.push(vec![
            s.iteration.to_string(),
            (((s.iteration as usize) < iterations) as u8).to_string(),
            num(s.action_rms),
            num(s.velocity_rms),
            num(s.loss),
            num(s.mean_reward),
        ]);
    }
    t
}
