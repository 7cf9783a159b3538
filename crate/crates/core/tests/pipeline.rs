//! End-to-end runs of the pipeline commands at toy scale.

use std::io::sink;
use std::path::Path;

use biped_codesign::orchestrator::{
    checkpoint, cmd_distill, cmd_eval, cmd_evolve, cmd_pretrain, cmd_sweep, Payload, RunConfig,
};
use biped_codesign::Error;

fn tiny(out: &Path) -> RunConfig {
    let text = format!(
        r#"
out_dir = "{}"
seed = 3
[evolution]
population_size = 3
generations = 2
iterations_per_evolution = 1
pretrain_iterations = 2
pretrain_resample_every = 1
[train]
num_envs = 2
steps_per_iteration = 8
epochs = 1
minibatches = 2
[train.network]
actor_hidden = [8]
critic_hidden = [8]
encoder_hidden = [4]
latent_dim = 2
[teacher]
iterations = 1
[distill]
iterations = 0
num_envs = 2
steps_per_iteration = 6
gru_hidden = 4
summary_dim = 2
actor_hidden = [8]
[sweep]
thigh = [0.3, 0.35]
shin = [0.3]
[eval]
episodes = 1
comparison_steps = 10
comparison_envs = 2
[env]
episode_length_s = 1.0
"#,
        out.display()
    );
    RunConfig::from_toml(&text).unwrap()
}

#[test]
fn pretrain_distill_eval_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let rep = cmd_pretrain(&cfg, None, &mut sink()).unwrap();
    assert_eq!((rep.pretrain_iterations, rep.teacher_iterations), (2, 1));
    let trace = std::fs::read_to_string(dir.path().join("train_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 3);
    let teacher = dir.path().join("teacher.ckpt");
    let shared = dir.path().join("pretrain.ckpt");
    match checkpoint::load(&teacher).unwrap().payload {
        Payload::Policy(p) => assert_eq!(p.morphology, Some(cfg.morphology_lengths().unwrap())),
        other => panic!("unexpected {}", other.kind()),
    }

    // Morphology guard names both designs.
    let mut other = cfg.clone();
    other.morphology.thigh_m = 0.30;
    other.morphology.shin_m = 0.30;
    match cmd_distill(&other, &teacher, &mut sink()) {
        Err(e @ Error::MorphologyMismatch { .. }) => {
            let msg = e.to_string();
            assert!(msg.contains("0.31") && msg.contains("0.30"), "{msg}");
        }
        r => panic!("expected a mismatch, got {r:?}"),
    }
    assert!(matches!(cmd_distill(&cfg, &shared, &mut sink()), Err(Error::MorphologyMismatch { .. })));

    // Zero-iteration distillation: student written, no update rows.
    let eval = cmd_distill(&cfg, &teacher, &mut sink()).unwrap();
    assert!(eval.action_rms.is_finite());
    assert!(dir.path().join("student.ckpt").exists());
    let dtrace = std::fs::read_to_string(dir.path().join("distill_trace.csv")).unwrap();
    assert!(dtrace.lines().skip(1).all(|l| l.split(',').nth(1) == Some("0")));

    // Evaluation: header-only for zero episodes, reproducible otherwise.
    assert!(cmd_eval(&cfg, &teacher, Some(0), &mut sink()).unwrap().is_empty());
    let header_only = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(header_only.lines().count(), 1);
    cmd_eval(&cfg, &teacher, Some(2), &mut sink()).unwrap();
    let a = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    cmd_eval(&cfg, &teacher, Some(2), &mut sink()).unwrap();
    let b = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 3);
    // Froude column recomputes from velocity and leg length.
    let header: Vec<&str> = a.lines().next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for line in a.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect();
        let v = f[col("mean_velocity_mps")];
        let l = f[col("leg_length_m")];
        let fr = f[col("froude")];
        assert!((v * v / (9.81 * l) - fr).abs() <= 1e-9 * fr.abs().max(1e-3), "{line}");
    }
}

#[test]
fn trained_evolution_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path());
    let rep = cmd_evolve(&cfg, None, None, None, &mut sink()).unwrap();
    assert!(rep.finished);
    assert!(rep.final_ledger_reward.unwrap().is_finite());
    assert!(dir.path().join("best_policy.ckpt").exists());
    let gens = std::fs::read_to_string(dir.path().join("generations.csv")).unwrap();
    assert_eq!(gens.lines().count(), 1 + 2 * 3);
    let surface = cmd_sweep(&cfg, Some(&dir.path().join("best_policy.ckpt")), &mut sink()).unwrap();
    assert_eq!(surface.cells.len(), 2);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("surface.csv")).unwrap().lines().count(),
        3
    );
}
