//! Configuration, checkpoints, trace export and the pipeline commands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod traces;

pub use checkpoint::{Checkpoint, EvolutionCheckpoint, Payload, PolicyCheckpoint, StudentCheckpoint, FORMAT_VERSION, MAGIC};
pub use commands::{
    cmd_distill, cmd_eval, cmd_evolve, cmd_pretrain, cmd_sweep, make_evaluator, sweep_ledger, with_workers,
    EvolveReport, PretrainReport,
};
pub use config::{
    EvalConfig, FitnessConfig, MorphologyConfig, RunConfig, SweepConfig, TeacherConfig, DEFAULT_CONFIG,
};
