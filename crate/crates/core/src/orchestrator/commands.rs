//! Pipeline stages behind the command-line subcommands. Every command takes a
//! validated [`RunConfig`], writes its artifacts into `config.out_dir` and
//! reports progress lines to `log`.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::{self, EvolutionCheckpoint, Payload, PolicyCheckpoint, StudentCheckpoint};
use super::config::{FitnessConfig, RunConfig};
use super::traces::{distill_trace_table, generations_table, population_table, train_trace_table};
use crate::env::{make_fair_ledger, SeedLedger};
use crate::error::{Error, Result};
use crate::evolution::{
    evolve, finalize, BestIndividual, EvolutionState, FitnessEvaluator, RlEvaluator, SyntheticEvaluator,
};
use crate::metrics::{evaluate_episodes, grid_sweep, metrics_table, population_stats, EpisodeMetrics, RewardSurface};
use crate::rl::{
    distill_student, evaluate_student, init_policy, init_student, pretrain_shared, train_policy_with, IterationStats,
    PolicyParams, StudentEval,
};
use crate::sim::{build_walker, LegLengths, WalkerModel};

/// Ledger generations reserved for stages outside the evolutionary loop.
pub const PRETRAIN_LEDGER: u64 = u64::MAX;
pub const TEACHER_LEDGER: u64 = u64::MAX - 1;
pub const DISTILL_LEDGER: u64 = u64::MAX - 2;
pub const EVAL_LEDGER: u64 = u64::MAX - 3;

const LOG_EVERY: u64 = 10;

pub const GENERATIONS_CSV: &str = "generations.csv";
pub const POPULATION_CSV: &str = "population.csv";
pub const TRAIN_TRACE_CSV: &str = "train_trace.csv";
pub const DISTILL_TRACE_CSV: &str = "distill_trace.csv";
pub const SURFACE_CSV: &str = "surface.csv";
pub const SURFACE_JSON: &str = "surface.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const BEST_JSON: &str = "best.json";
pub const EVOLUTION_CKPT: &str = "evolution.ckpt";
pub const BEST_POLICY_CKPT: &str = "best_policy.ckpt";
pub const PRETRAIN_CKPT: &str = "pretrain.ckpt";
pub const TEACHER_CKPT: &str = "teacher.ckpt";
pub const STUDENT_CKPT: &str = "student.ckpt";

/// Runs `f` on a pool of `workers` threads (0 = one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    Ok(pool.install(f))
}

fn say(log: &mut dyn Write, line: String) {
    // Progress output is best effort.
    let _ = writeln!(log, "{line}");
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    Ok(cfg.out_dir.clone())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Codec(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn walker(cfg: &RunConfig, lengths: LegLengths) -> Result<WalkerModel> {
    build_walker(lengths, cfg.sim.density, cfg.sim.torso, cfg.sim.limits)
}

fn fmt_lengths(l: &LegLengths) -> String {
    format!("(thigh {:.2} m, shin {:.2} m)", l.thigh_m(), l.shin_m())
}

fn log_iteration(log: &mut dyn Write, phase: &str, s: &IterationStats) {
    if s.iteration.is_multiple_of(LOG_EVERY) {
        say(
            log,
            format!(
                "{phase} iter {:>4}  reward {:.3}  kl {:.4}  entropy {:.3}",
                s.iteration, s.mean_reward, s.update.approx_kl, s.update.entropy
            ),
        );
    }
}

fn load_policy(path: &Path) -> Result<PolicyCheckpoint> {
    match checkpoint::load(path)?.payload {
        Payload::Policy(p) => Ok(p),
        other => Err(Error::Checkpoint(format!(
            "{}: expected a policy checkpoint, found {}",
            path.display(),
            other.kind()
        ))),
    }
}

/// Design-space-wide training from a fresh initialization, or the policy in
/// `checkpoint` when given.
fn shared_policy(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    log: &mut dyn Write,
) -> Result<(PolicyParams, Vec<IterationStats>)> {
    if let Some(path) = checkpoint {
        let p = load_policy(path)?;
        say(log, format!("warm start loaded from {}", path.display()));
        return Ok((p.params, Vec::new()));
    }
    let setup = cfg.setup();
    let init = init_policy(&cfg.train, &setup, cfg.seed)?;
    let out = pretrain_shared(
        &cfg.design,
        init,
        cfg.evolution.pretrain_iterations,
        cfg.evolution.pretrain_resample_every,
        &make_fair_ledger(PRETRAIN_LEDGER, cfg.seed),
        &cfg.train,
        &setup,
        |s| log_iteration(log, "pretrain", s),
    )?;
    Ok((out.params, out.stats))
}

/// Warm start shared by `evolve` and `sweep`; `None` for synthetic fitness.
fn warm_start(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    log: &mut dyn Write,
) -> Result<Option<(PolicyParams, Vec<IterationStats>)>> {
    match cfg.fitness {
        FitnessConfig::Synthetic { .. } => Ok(None),
        FitnessConfig::TrainedPolicy if cfg.evolution.warm_start || checkpoint.is_some() => {
            shared_policy(cfg, checkpoint, log).map(Some)
        }
        FitnessConfig::TrainedPolicy => Ok(Some((init_policy(&cfg.train, &cfg.setup(), cfg.seed)?, Vec::new()))),
    }
}

/// The fitness function a configuration describes.
pub fn make_evaluator(cfg: &RunConfig, warm: Option<&PolicyParams>) -> Result<Box<dyn FitnessEvaluator>> {
    match cfg.fitness {
        FitnessConfig::Synthetic { optimum } => Ok(Box::new(SyntheticEvaluator { optimum })),
        FitnessConfig::TrainedPolicy => {
            let warm = warm.ok_or_else(|| Error::Domain("trained fitness needs a warm-start policy".into()))?;
            Ok(Box::new(RlEvaluator {
                setup: cfg.setup(),
                hyper: cfg.train.clone(),
                iterations: cfg.evolution.iterations_per_evolution,
                warm_start: warm.clone(),
            }))
        }
    }
}

fn write_pretrain_trace(dir: &Path, trace: &[IterationStats]) -> Result<()> {
    train_trace_table(trace.iter().map(|s| ("pretrain", s))).write(&dir.join(TRAIN_TRACE_CSV))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveReport {
    pub finished: bool,
    pub generations_done: usize,
    pub best: Option<BestIndividual>,
    /// Best individual's reward re-measured under the last generation's ledger.
    pub final_ledger_reward: Option<f64>,
    pub config_hash: u64,
}

/// Pretraining (unless resuming) followed by the evolutionary loop. A
/// checkpoint is written after pretraining and after every generation;
/// `stop_after` ends the run early after that many generations, as an
/// interruption would.
pub fn cmd_evolve(
    cfg: &RunConfig,
    resume: Option<&Path>,
    warm_checkpoint: Option<&Path>,
    stop_after: Option<usize>,
    log: &mut dyn Write,
) -> Result<EvolveReport> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let hash = cfg.result_hash();
    let ckpt_path = dir.join(EVOLUTION_CKPT);
    let start = match resume {
        Some(path) => {
            let c = checkpoint::load(path)?;
            if c.config_hash != hash {
                return Err(Error::Checkpoint(format!(
                    "{}: written by a different configuration (hash {:016x}, current {:016x})",
                    path.display(),
                    c.config_hash,
                    hash
                )));
            }
            match c.payload {
                Payload::Evolution(e) => {
                    say(log, format!("resuming at generation {}", e.state.next_generation));
                    e
                }
                other => {
                    return Err(Error::Checkpoint(format!(
                        "{}: expected an evolution checkpoint, found {}",
                        path.display(),
                        other.kind()
                    )))
                }
            }
        }
        None => {
            let warm = warm_start(cfg, warm_checkpoint, log)?;
            let (warm_start, pretrain_trace) = match warm {
                Some((p, t)) => (Some(p), t),
                None => (None, Vec::new()),
            };
            let e = EvolutionCheckpoint {
                state: EvolutionState::new(&cfg.evolution, cfg.seed)?,
                warm_start,
                pretrain_trace,
            };
            checkpoint::save(&ckpt_path, hash, &Payload::Evolution(e.clone()))?;
            e
        }
    };
    write_pretrain_trace(&dir, &start.pretrain_trace)?;
    let evaluator = make_evaluator(cfg, start.warm_start.as_ref())?;
    let state = evolve(
        evaluator.as_ref(),
        &cfg.evolution,
        &cfg.design,
        start.state.clone(),
        stop_after,
        |rec, st| {
            let best = &rec.individuals[rec.best_index];
            say(
                log,
                format!(
                    "generation {:>3}  mean {:.4}  variance {:.4}  best {:.4} at ({:.2}, {:.2})",
                    rec.generation, rec.mean_reward, rec.reward_variance, best.total_reward, best.thigh_m, best.shin_m
                ),
            );
            generations_table(&st.history).write(&dir.join(GENERATIONS_CSV))?;
            let stats = population_stats(&st.history, cfg.design.resolution);
            population_table(&st.history, &stats).write(&dir.join(POPULATION_CSV))?;
            let snapshot = EvolutionCheckpoint {
                state: st.clone(),
                warm_start: start.warm_start.clone(),
                pretrain_trace: start.pretrain_trace.clone(),
            };
            checkpoint::save(&ckpt_path, hash, &Payload::Evolution(snapshot))
        },
    )?;
    let mut report = EvolveReport {
        finished: state.finished(&cfg.evolution),
        generations_done: state.next_generation,
        best: state.best.clone(),
        final_ledger_reward: None,
        config_hash: hash,
    };
    if report.finished {
        let result = finalize(&state, evaluator.as_ref(), &cfg.design)?;
        report.final_ledger_reward = Some(result.final_ledger_reward);
        if let Some(params) = result.params {
            let lengths = LegLengths::new_in(&cfg.design, result.best.thigh_m, result.best.shin_m)?;
            let payload = Payload::Policy(PolicyCheckpoint {
                params,
                morphology: Some(lengths),
                iterations: start.pretrain_trace.len() + cfg.evolution.iterations_per_evolution,
            });
            checkpoint::save(&dir.join(BEST_POLICY_CKPT), hash, &payload)?;
        }
        write_json(&dir.join(BEST_JSON), &report)?;
        say(
            log,
            format!(
                "best ({:.2}, {:.2}) reward {:.4} from generation {}; {:.4} under the final ledger",
                result.best.thigh_m,
                result.best.shin_m,
                result.best.total_reward,
                result.best.generation,
                result.final_ledger_reward
            ),
        );
    }
    Ok(report)
}

/// Trains and scores every cell of the configured grid under one ledger.
pub fn cmd_sweep(cfg: &RunConfig, warm_checkpoint: Option<&Path>, log: &mut dyn Write) -> Result<RewardSurface> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let grid = cfg.sweep_grid()?;
    let warm = warm_start(cfg, warm_checkpoint, log)?;
    let (params, trace) = match warm {
        Some((p, t)) => (Some(p), t),
        None => (None, Vec::new()),
    };
    write_pretrain_trace(&dir, &trace)?;
    let evaluator = make_evaluator(cfg, params.as_ref())?;
    let ledger = sweep_ledger(cfg);
    say(log, format!("sweeping {}x{} cells", grid.thigh.len(), grid.shin.len()));
    let surface = grid_sweep(
        &grid,
        &cfg.design,
        evaluator.as_ref(),
        &ledger,
        cfg.evolution.iterations_per_evolution,
    )?;
    surface.to_table().write(&dir.join(SURFACE_CSV))?;
    let json = surface.to_json()?;
    std::fs::write(dir.join(SURFACE_JSON), json + "\n").map_err(|e| Error::io(dir.join(SURFACE_JSON), e))?;
    let b = surface.best();
    say(
        log,
        format!(
            "argmax thigh {:.2} m shin {:.2} m reward {:.4}{}",
            b.thigh_m,
            b.shin_m,
            b.reward,
            if b.failed { " (failed)" } else { "" }
        ),
    );
    Ok(surface)
}

pub fn sweep_ledger(cfg: &RunConfig) -> SeedLedger {
    make_fair_ledger(cfg.sweep.ledger_generation, cfg.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub pretrain_iterations: usize,
    pub teacher_iterations: usize,
    pub final_pretrain_reward: Option<f64>,
    pub final_teacher_reward: Option<f64>,
}

/// Design-space-wide pretraining, then single-morphology teacher training on
/// `[morphology]` when `teacher.iterations > 0`.
pub fn cmd_pretrain(cfg: &RunConfig, warm_checkpoint: Option<&Path>, log: &mut dyn Write) -> Result<PretrainReport> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let hash = cfg.result_hash();
    let (shared, shared_trace) = shared_policy(cfg, warm_checkpoint, log)?;
    checkpoint::save(
        &dir.join(PRETRAIN_CKPT),
        hash,
        &Payload::Policy(PolicyCheckpoint {
            params: shared.clone(),
            morphology: None,
            iterations: shared_trace.len(),
        }),
    )?;
    let mut teacher_trace = Vec::new();
    if cfg.teacher.iterations > 0 {
        let lengths = cfg.morphology_lengths()?;
        say(log, format!("teacher training on {}", fmt_lengths(&lengths)));
        let out = train_policy_with(
            &walker(cfg, lengths)?,
            shared,
            cfg.teacher.iterations,
            &make_fair_ledger(TEACHER_LEDGER, cfg.seed),
            &cfg.train,
            &cfg.setup(),
            |s| log_iteration(log, "teacher", s),
        )?;
        checkpoint::save(
            &dir.join(TEACHER_CKPT),
            hash,
            &Payload::Policy(PolicyCheckpoint {
                params: out.params,
                morphology: Some(lengths),
                iterations: shared_trace.len() + cfg.teacher.iterations,
            }),
        )?;
        teacher_trace = out.stats;
    }
    train_trace_table(
        shared_trace
            .iter()
            .map(|s| ("pretrain", s))
            .chain(teacher_trace.iter().map(|s| ("teacher", s))),
    )
    .write(&dir.join(TRAIN_TRACE_CSV))?;
    Ok(PretrainReport {
        pretrain_iterations: shared_trace.len(),
        teacher_iterations: teacher_trace.len(),
        final_pretrain_reward: shared_trace.last().map(|s| s.mean_reward),
        final_teacher_reward: teacher_trace.last().map(|s| s.mean_reward),
    })
}

/// Distills the teacher in `teacher_path` into a recurrent student for the
/// configured morphology, then compares both on held-out rollouts.
pub fn cmd_distill(cfg: &RunConfig, teacher_path: &Path, log: &mut dyn Write) -> Result<StudentEval> {
    cfg.validate()?;
    let teacher = load_policy(teacher_path)?;
    let lengths = cfg.morphology_lengths()?;
    match teacher.morphology {
        Some(l) if l == lengths => {}
        Some(l) => {
            return Err(Error::MorphologyMismatch {
                checkpoint: fmt_lengths(&l),
                config: fmt_lengths(&lengths),
            })
        }
        None => {
            return Err(Error::MorphologyMismatch {
                checkpoint: "no morphology (design-space-wide policy)".into(),
                config: fmt_lengths(&lengths),
            })
        }
    }
    let dir = out_dir(cfg)?;
    let setup = cfg.setup();
    let model = walker(cfg, lengths)?;
    let init = init_student(&cfg.distill, &setup, cfg.seed)?;
    let out = distill_student(
        &teacher.params,
        init,
        &model,
        &make_fair_ledger(DISTILL_LEDGER, cfg.seed),
        &cfg.distill,
        &setup,
        |s| {
            if s.iteration.is_multiple_of(LOG_EVERY) {
                say(
                    log,
                    format!(
                        "distill iter {:>4}  action rms {:.4}  velocity rms {:.4}",
                        s.iteration, s.action_rms, s.velocity_rms
                    ),
                );
            }
        },
    )?;
    distill_trace_table(&out.trace, cfg.distill.iterations).write(&dir.join(DISTILL_TRACE_CSV))?;
    checkpoint::save(
        &dir.join(STUDENT_CKPT),
        cfg.result_hash(),
        &Payload::Student(StudentCheckpoint {
            student: out.student.clone(),
            morphology: lengths,
        }),
    )?;
    let eval = evaluate_student(
        &out.student,
        &teacher.params,
        &model,
        &make_fair_ledger(EVAL_LEDGER, cfg.seed),
        &setup,
        cfg.eval.comparison_envs,
        cfg.eval.comparison_steps,
    )?;
    say(
        log,
        format!(
            "student action rms {:.4} rad  velocity rms {:.4} m/s  reward {:.3} vs teacher {:.3}",
            eval.action_rms, eval.velocity_rms, eval.student_reward, eval.teacher_reward
        ),
    );
    Ok(eval)
}

/// Deterministic evaluation episodes of a policy checkpoint. The policy runs
/// on the morphology stored in the checkpoint, or `[morphology]` for a
/// design-space-wide policy.
pub fn cmd_eval(
    cfg: &RunConfig,
    policy_path: &Path,
    episodes: Option<usize>,
    log: &mut dyn Write,
) -> Result<Vec<EpisodeMetrics>> {
    cfg.validate()?;
    let policy = load_policy(policy_path)?;
    let lengths = match policy.morphology {
        Some(l) => l,
        None => cfg.morphology_lengths()?,
    };
    let dir = out_dir(cfg)?;
    let rows = evaluate_episodes(
        &walker(cfg, lengths)?,
        &policy.params,
        &make_fair_ledger(EVAL_LEDGER, cfg.seed),
        &cfg.setup(),
        episodes.unwrap_or(cfg.eval.episodes),
    )?;
    metrics_table(&rows).write(&dir.join(METRICS_CSV))?;
    let defined: Vec<f64> = rows.iter().map(|r| r.metrics.cot).filter(|c| c.is_finite()).collect();
    let vmax = rows.iter().map(|r| r.max_velocity).fold(f64::NEG_INFINITY, f64::max);
    say(
        log,
        format!(
            "{} episodes on {}  mean COT {}  max velocity {:.3} m/s",
            rows.len(),
            fmt_lengths(&lengths),
            if defined.is_empty() {
                "undefined".to_string()
            } else {
                format!("{:.4}", defined.iter().sum::<f64>() / defined.len() as f64)
            },
            vmax
        ),
    );
    Ok(rows)
}
