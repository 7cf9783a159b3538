use std::path::PathBuf;
use std::process::ExitCode;

use biped_codesign::orchestrator::{
    cmd_distill, cmd_eval, cmd_evolve, cmd_pretrain, cmd_sweep, with_workers, RunConfig, DEFAULT_CONFIG,
};
use biped_codesign::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "biped-codesign", version, about = "Leg-length evolution with RL-trained fitness for a planar biped")]
struct Cli {
    /// Print the annotated default configuration and exit.
    #[arg(long)]
    print_default_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain, then evolve leg lengths.
    Evolve {
        #[command(flatten)]
        common: Common,
        /// Continue from an evolution checkpoint.
        #[arg(long, value_name = "PATH")]
        resume: Option<PathBuf>,
        /// Use this policy checkpoint as the warm start instead of pretraining.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Stop after this many generations (resumable).
        #[arg(long, value_name = "N")]
        generations: Option<usize>,
    },
    /// Train and score every cell of the leg-length grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Use this policy checkpoint as the warm start instead of pretraining.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Distill a teacher checkpoint into a proprioceptive student.
    Distill {
        #[command(flatten)]
        common: Common,
        /// Teacher policy checkpoint.
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Roll out a policy checkpoint and write per-episode metrics.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Policy checkpoint.
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "N")]
        episodes: Option<usize>,
    },
    /// Shared pretraining across the design space, then teacher training.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Start from this policy checkpoint.
        #[arg(long, value_name = "PATH")]
        resume: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: Command) -> Result<()> {
    let mut out = std::io::stdout();
    let common = match &command {
        Command::Evolve { common, .. }
        | Command::Sweep { common, .. }
        | Command::Distill { common, .. }
        | Command::Eval { common, .. }
        | Command::Pretrain { common, .. } => common.clone(),
    };
    let cfg = load_config(&common)?;
    with_workers(cfg.workers, move || -> Result<()> {
        let log = &mut out;
        match command {
            Command::Evolve {
                resume,
                checkpoint,
                generations,
                ..
            } => {
                let r = cmd_evolve(&cfg, resume.as_deref(), checkpoint.as_deref(), generations, log)?;
                if !r.finished {
                    println!(
                        "stopped after generation {}; resume with --resume {}",
                        r.generations_done,
                        cfg.out_dir.join("evolution.ckpt").display()
                    );
                }
            }
            Command::Sweep { checkpoint, .. } => {
                cmd_sweep(&cfg, checkpoint.as_deref(), log)?;
            }
            Command::Distill { checkpoint, .. } => {
                cmd_distill(&cfg, &checkpoint, log)?;
            }
            Command::Eval { checkpoint, episodes, .. } => {
                cmd_eval(&cfg, &checkpoint, episodes, log)?;
            }
            Command::Pretrain { resume, .. } => {
                cmd_pretrain(&cfg, resume.as_deref(), log)?;
            }
        }
        Ok(())
    })?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_default_config {
        print!("{DEFAULT_CONFIG}");
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (evolve, sweep, distill, eval, pretrain)");
        return ExitCode::from(2);
    };
    match run(command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let c = Common {
            config: None,
            seed: Some(9),
            workers: Some(2),
            out: Some("x".into()),
        };
        let cfg = load_config(&c).unwrap();
        assert_eq!((cfg.seed, cfg.workers, cfg.out_dir), (9, 2, PathBuf::from("x")));
    }

    #[test]
    fn missing_config_names_the_path() {
        let c = Common {
            config: Some("/nonexistent/run.toml".into()),
            seed: None,
            workers: None,
            out: None,
        };
        let msg = match load_config(&c) {
            Err(e) => e.to_string(),
            Ok(_) => panic!("expected an error"),
        };
        assert!(msg.contains("/nonexistent/run.toml"), "{msg}");
    }
}
