use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_biped-codesign"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SYNTHETIC: &str = r#"
[fitness]
kind = "synthetic"
optimum = [0.31, 0.36]

[evolution]
population_size = 4
generations = 1
"#;

#[test]
fn prints_default_config() {
    let out = run(&["--print-default-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("population_size = 250"));
    assert!(text.contains("interval_s = 5.0"));
}

#[test]
fn missing_config_fails_with_path() {
    let out = run(&["evolve", "--config", "/no/such/config.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/config.toml"));
}

#[test]
fn invalid_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[evolution]\ncrossover_prob = 2.0\n");
    let out = run(&["evolve", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("evolution.crossover_prob"));
}

#[test]
fn evolve_smoke_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SYNTHETIC);
    let out_dir = dir.path().join("out");
    let out = run(&["evolve", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("generations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    for f in ["population.csv", "train_trace.csv", "evolution.ckpt", "best.json"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("generation   0"));
}

#[test]
fn interrupted_evolution_resumes_to_the_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let body = SYNTHETIC.replace("generations = 1", "generations = 3").replace("population_size = 4", "population_size = 12");
    let cfg = write_config(dir.path(), &body);
    let full = dir.path().join("full");
    let split = dir.path().join("split");
    assert!(run(&["evolve", "--config", &cfg, "--out", full.to_str().unwrap()]).status.success());
    let first = run(&["evolve", "--config", &cfg, "--out", split.to_str().unwrap(), "--generations", "1"]);
    assert!(first.status.success());
    assert!(String::from_utf8_lossy(&first.stdout).contains("resume with"));
    let ckpt = split.join("evolution.ckpt");
    let second = run(&["evolve", "--config", &cfg, "--out", split.to_str().unwrap(), "--resume", ckpt.to_str().unwrap()]);
    assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stderr));
    for f in ["generations.csv", "population.csv", "best.json"] {
        assert_eq!(std::fs::read(full.join(f)).unwrap(), std::fs::read(split.join(f)).unwrap(), "{f}");
    }
    // A different seed changes the configuration hash.
    let bad = run(&["evolve", "--config", &cfg, "--seed", "5", "--out", split.to_str().unwrap(), "--resume", ckpt.to_str().unwrap()]);
    assert!(!bad.status.success());
}

#[test]
fn sweep_is_deterministic_and_reports_argmax() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{SYNTHETIC}\n[sweep]\nthigh = [0.3, 0.35]\nshin = [0.3, 0.35]\n");
    let cfg = write_config(dir.path(), &body);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = run(&["sweep", "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("argmax thigh 0.30 m shin 0.35 m"));
    assert!(run(&["sweep", "--config", &cfg, "--out", b.to_str().unwrap()]).status.success());
    let csv = std::fs::read_to_string(a.join("surface.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert_eq!(csv, std::fs::read_to_string(b.join("surface.csv")).unwrap());
    assert!(a.join("surface.json").exists());
}

#[test]
fn distill_requires_a_checkpoint() {
    let out = run(&["distill"]);
    assert!(!out.status.success());
}
