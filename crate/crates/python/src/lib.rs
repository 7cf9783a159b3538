//! Python bindings: codec, metrics, the walker environment and the pipeline
//! commands.

use std::path::PathBuf;

use biped_codesign::env::{make_fair_ledger, EnvSetup, Observation, Phase, SeedLedger, WalkerEnv, TERM_NAMES};
use biped_codesign::evolution::{self, MorphologyGenome};
use biped_codesign::metrics;
use biped_codesign::orchestrator::{self, RunConfig, DEFAULT_CONFIG};
use biped_codesign::rl;
use biped_codesign::sim::{build_walker, DesignSpace, LegLengths, NUM_JOINTS};
use biped_codesign::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Codec(_) | Error::Config { .. } | Error::Shape(_) | Error::MorphologyMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn config(toml_text: &str, out_dir: Option<PathBuf>) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::from_toml(toml_text).map_err(to_py)?;
    if let Some(o) = out_dir {
        cfg.out_dir = o;
    }
    Ok(cfg)
}

/// Annotated default configuration (TOML).
#[pyfunction]
fn default_config() -> &'static str {
    DEFAULT_CONFIG
}

/// Parses and validates a TOML configuration; returns it as a dict.
#[pyfunction]
fn parse_config<'py>(py: Python<'py>, toml_text: &str) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &config(toml_text, None)?)
}

/// Decodes an 18-character bitstring to (thigh_m, shin_m).
#[pyfunction]
fn decode_genome(bits: &str) -> PyResult<(f64, f64)> {
    let g: MorphologyGenome = bits.parse().map_err(to_py)?;
    let l = evolution::decode_genome(&g, &DesignSpace::default()).map_err(to_py)?;
    Ok((l.thigh_m(), l.shin_m()))
}

/// Bitstring that decodes to the given on-grid lengths.
#[pyfunction]
fn encode_lengths(thigh_m: f64, shin_m: f64) -> PyResult<String> {
    let l = LegLengths::new(thigh_m, shin_m).map_err(to_py)?;
    Ok(evolution::encode_lengths(&l, &DesignSpace::default()).map_err(to_py)?.to_string())
}

#[pyfunction]
#[pyo3(signature = (power, mass, velocity, g = 9.81))]
fn cost_of_transport(power: Vec<f64>, mass: f64, velocity: Vec<f64>, g: f64) -> PyResult<f64> {
    metrics::cost_of_transport(&power, mass, &velocity, g).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (v, leg_length, g = 9.81))]
fn froude_number(v: f64, leg_length: f64, g: f64) -> PyResult<f64> {
    metrics::froude_number(v, leg_length, g).map_err(to_py)
}

/// (advantages, returns) for one trajectory.
#[pyfunction]
fn compute_gae(
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    last_value: f64,
    gamma: f64,
    lam: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    if values.len() != rewards.len() || dones.len() != rewards.len() {
        return Err(PyValueError::new_err("rewards, values and dones need equal lengths"));
    }
    Ok(rl::compute_gae(&rewards, &values, &dones, last_value, gamma, lam))
}

/// Runs the genetic algorithm on the closed-form landscape peaking at
/// `optimum`; returns the best individual as a dict.
#[pyfunction]
#[pyo3(signature = (optimum, population_size = 32, generations = 50, seed = 0))]
fn evolve_synthetic<'py>(
    py: Python<'py>,
    optimum: (f64, f64),
    population_size: usize,
    generations: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let hyper = evolution::EvoHyper {
        population_size,
        generations,
        ..Default::default()
    };
    let space = DesignSpace::default();
    let eval = evolution::SyntheticEvaluator { optimum };
    let state = evolution::EvolutionState::new(&hyper, seed).map_err(to_py)?;
    let state = evolution::evolve(&eval, &hyper, &space, state, None, |_, _| Ok(())).map_err(to_py)?;
    json_to_py(py, &state.best)
}

fn observation_dict<'py>(py: Python<'py>, obs: &Observation) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("proprio", obs.proprio.to_array().to_vec())?;
    d.set_item("velocity", obs.velocity.map(|v| v.to_vec()))?;
    d.set_item("privileged", obs.privileged.map(|p| p.to_array().to_vec()))?;
    d.set_item("structure", obs.structure.map(|s| s.to_vec()))?;
    Ok(d)
}

/// One walker environment with default settings and a fixed ledger.
#[pyclass]
struct Walker {
    env: WalkerEnv,
    ledger: SeedLedger,
}

#[pymethods]
impl Walker {
    #[new]
    #[pyo3(signature = (thigh_m, shin_m, seed = 0))]
    fn new(thigh_m: f64, shin_m: f64, seed: u64) -> PyResult<Self> {
        let setup = EnvSetup::default();
        let l = LegLengths::new(thigh_m, shin_m).map_err(to_py)?;
        let model = build_walker(l, setup.sim.density, setup.sim.torso, setup.sim.limits).map_err(to_py)?;
        Ok(Self {
            env: WalkerEnv::new(model, setup.sim, setup.env, 0),
            ledger: make_fair_ledger(0, seed),
        })
    }

    #[getter]
    fn total_mass(&self) -> f64 {
        self.env.model().total_mass
    }

    #[getter]
    fn nominal_stance(&self) -> Vec<f64> {
        self.env.config().nominal_stance.to_vec()
    }

    fn reset<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let obs = self.env.reset(&self.ledger);
        observation_dict(py, &obs)
    }

    /// Joint position targets in; (observation, reward, done, info) out.
    fn step<'py>(&mut self, py: Python<'py>, action: Vec<f64>) -> PyResult<(Bound<'py, PyDict>, f64, bool, Bound<'py, PyDict>)> {
        if action.len() != NUM_JOINTS {
            return Err(PyValueError::new_err(format!("action needs {NUM_JOINTS} values")));
        }
        let a: [f64; NUM_JOINTS] = std::array::from_fn(|j| action[j]);
        let out = self.env.step(&a).map_err(to_py)?;
        let info = PyDict::new(py);
        info.set_item("terminated", out.info.terminated)?;
        info.set_item("truncated", out.info.truncated)?;
        info.set_item("power", out.info.power)?;
        info.set_item("forward_velocity", out.info.forward_velocity)?;
        info.set_item("command", out.info.command)?;
        let terms = PyDict::new(py);
        for (i, name) in TERM_NAMES.iter().enumerate() {
            terms.set_item(*name, out.reward.weighted(i))?;
        }
        info.set_item("reward_terms", terms)?;
        Ok((observation_dict(py, &out.observation)?, out.reward.total, out.done, info))
    }

    fn student_observation<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        observation_dict(py, &self.env.observe(Phase::Student))
    }
}

/// `evolve` command; returns the report dict.
#[pyfunction]
#[pyo3(signature = (config_toml, out_dir = None, resume = None, stop_after = None))]
fn run_evolve<'py>(
    py: Python<'py>,
    config_toml: &str,
    out_dir: Option<PathBuf>,
    resume: Option<PathBuf>,
    stop_after: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(config_toml, out_dir)?;
    let r = py
        .detach(|| orchestrator::cmd_evolve(&cfg, resume.as_deref(), None, stop_after, &mut std::io::sink()))
        .map_err(to_py)?;
    json_to_py(py, &r)
}

/// `sweep` command; returns the reward surface dict.
#[pyfunction]
#[pyo3(signature = (config_toml, out_dir = None))]
fn run_sweep<'py>(py: Python<'py>, config_toml: &str, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(config_toml, out_dir)?;
    let s = py
        .detach(|| orchestrator::cmd_sweep(&cfg, None, &mut std::io::sink()))
        .map_err(to_py)?;
    json_to_py(py, &s)
}

#[pyfunction]
#[pyo3(signature = (config_toml, out_dir = None))]
fn run_pretrain<'py>(py: Python<'py>, config_toml: &str, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(config_toml, out_dir)?;
    let r = py
        .detach(|| orchestrator::cmd_pretrain(&cfg, None, &mut std::io::sink()))
        .map_err(to_py)?;
    json_to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (config_toml, teacher, out_dir = None))]
fn run_distill<'py>(
    py: Python<'py>,
    config_toml: &str,
    teacher: PathBuf,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(config_toml, out_dir)?;
    let r = py
        .detach(|| orchestrator::cmd_distill(&cfg, &teacher, &mut std::io::sink()))
        .map_err(to_py)?;
    json_to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (config_toml, policy, episodes = None, out_dir = None))]
fn run_eval<'py>(
    py: Python<'py>,
    config_toml: &str,
    policy: PathBuf,
    episodes: Option<usize>,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config(config_toml, out_dir)?;
    let rows = py
        .detach(|| orchestrator::cmd_eval(&cfg, &policy, episodes, &mut std::io::sink()))
        .map_err(to_py)?;
    json_to_py(py, &rows)
}

#[pymodule]
fn biped_codesign_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(decode_genome, m)?)?;
    m.add_function(wrap_pyfunction!(encode_lengths, m)?)?;
    m.add_function(wrap_pyfunction!(cost_of_transport, m)?)?;
    m.add_function(wrap_pyfunction!(froude_number, m)?)?;
    m.add_function(wrap_pyfunction!(compute_gae, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_evolve, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_pretrain, m)?)?;
    m.add_function(wrap_pyfunction!(run_distill, m)?)?;
    m.add_function(wrap_pyfunction!(run_eval, m)?)?;
    m.add_class::<Walker>()?;
    Ok(())
}
