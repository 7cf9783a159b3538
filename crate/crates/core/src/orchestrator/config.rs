//! Run configuration: one TOML file covering every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{EnvConfig, EnvSetup, SimParams};
use crate::error::{Error, Result};
use crate::evolution::EvoHyper;
use crate::rl::{StudentHyper, TrainHyper};
use crate::sim::{DesignSpace, LegLengths};

/// How a morphology is scored.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FitnessConfig {
    /// Summed reward of a policy trained on the morphology.
    #[default]
    TrainedPolicy,
    /// Closed-form `−(l_t − a)² − (l_s − b)²`, no training.
    Synthetic { optimum: (f64, f64) },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Explicit axis values; when both are empty the axes are generated
    /// from the design space at `spacing`.
    pub thigh: Vec<f64>,
    pub shin: Vec<f64>,
    pub spacing: f64,
    /// Generation index whose ledger every cell is evaluated under.
    pub ledger_generation: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            thigh: vec![0.25, 0.30, 0.35, 0.40],
            shin: vec![0.25, 0.30, 0.35, 0.40],
            spacing: 0.05,
            ledger_generation: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MorphologyConfig {
    pub thigh_m: f64,
    pub shin_m: f64,
}

impl Default for MorphologyConfig {
    fn default() -> Self {
        Self { thigh_m: 0.31, shin_m: 0.36 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    /// Single-morphology iterations run by `pretrain` after the shared phase.
    pub iterations: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self { iterations: 300 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Rollout horizon of the student/teacher comparison after distillation.
    pub comparison_steps: usize,
    pub comparison_envs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 10,
            comparison_steps: 500,
            comparison_envs: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub out_dir: PathBuf,
    pub fitness: FitnessConfig,
    pub design: DesignSpace,
    pub evolution: EvoHyper,
    pub train: TrainHyper,
    pub sweep: SweepConfig,
    pub morphology: MorphologyConfig,
    pub teacher: TeacherConfig,
    pub distill: StudentHyper,
    pub eval: EvalConfig,
    pub sim: SimParams,
    pub env: EnvConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            out_dir: PathBuf::from("runs/default"),
            fitness: FitnessConfig::default(),
            design: DesignSpace::default(),
            evolution: EvoHyper::default(),
            train: TrainHyper::default(),
            sweep: SweepConfig::default(),
            morphology: MorphologyConfig::default(),
            teacher: TeacherConfig::default(),
            distill: StudentHyper::default(),
            eval: EvalConfig::default(),
            sim: SimParams::default(),
            env: EnvConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field,
                message: format!("{message} (in {})", path.display()),
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Codec(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        self.evolution.validate()?;
        self.train.validate()?;
        self.distill.validate()?;
        self.sim.validate()?;
        self.env.validate()?;
        if let FitnessConfig::Synthetic { optimum } = self.fitness {
            if !(optimum.0.is_finite() && optimum.1.is_finite()) {
                return Err(Error::config("fitness.optimum", "must be finite"));
            }
        }
        if self.sweep.thigh.is_empty() != self.sweep.shin.is_empty() {
            return Err(Error::config("sweep.thigh", "give both axes or neither"));
        }
        if !(self.sweep.spacing > 0.0) {
            return Err(Error::config("sweep.spacing", "must be > 0"));
        }
        self.sweep_grid()?;
        self.morphology_lengths()
            .map_err(|e| Error::config("morphology", e.to_string()))?;
        if self.eval.comparison_envs == 0 || self.eval.comparison_steps == 0 {
            return Err(Error::config("eval.comparison_steps", "horizon and env count must be >= 1"));
        }
        Ok(())
    }

    pub fn setup(&self) -> EnvSetup {
        EnvSetup {
            sim: self.sim,
            env: self.env,
        }
    }

    pub fn morphology_lengths(&self) -> Result<LegLengths> {
        LegLengths::new_in(&self.design, self.morphology.thigh_m, self.morphology.shin_m)
    }

    pub fn sweep_grid(&self) -> Result<crate::metrics::SweepGrid> {
        if self.sweep.thigh.is_empty() {
            crate::metrics::SweepGrid::from_space(&self.design, self.sweep.spacing)
        } else {
            crate::metrics::SweepGrid::from_axes(&self.design, self.sweep.thigh.clone(), self.sweep.shin.clone())
                .map_err(|e| Error::config("sweep", e.to_string()))
        }
    }

    /// Digest of every setting that influences results. Worker count and
    /// output location are excluded.
    pub fn result_hash(&self) -> u64 {
        let mut c = self.clone();
        c.workers = 0;
        c.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

/// Annotated defaults, printed by `--print-default-config`.
pub const DEFAULT_CONFIG: &str = r#"# Run configuration. Unknown keys are rejected.
# [published] marks values taken from the published hyperparameter table;
# everything else is a chosen default.

seed = 0
workers = 0                      # 0 = all cores
out_dir = "runs/default"

[fitness]
kind = "trained_policy"          # or "synthetic" with optimum = [thigh, shin]

[design]
thigh_range = [0.2, 0.4]         # [published] m
shin_range = [0.2, 0.4]          # [published] m
resolution = 0.01                # [published] m; 9-bit genes per length [published]

[evolution]
population_size = 250            # [published]
crossover_prob = 0.8             # [published]
mutation_prob = 0.03             # [published]
generations = 50                 # not published
iterations_per_evolution = 10    # [published]
fitness_epsilon = 0.01
convergence_threshold = 0.0      # stop when reward variance falls below; 0 disables
elitism = 1
warm_start = true
pretrain_iterations = 500        # [published] shared training before evolution
pretrain_resample_every = 10
reuse_identical = true

[train]
gamma = 0.99
lambda = 0.95
clip_ratio = 0.2
learning_rate = 0.0003
epochs = 5
minibatches = 4
entropy_coef = 0.005
value_coef = 1.0
max_grad_norm = 1.0
num_envs = 64
steps_per_iteration = 96         # [published]
value_shapes_encoder = false     # critic reads z without training the encoder

[train.network]
actor_hidden = [256, 128]
critic_hidden = [256, 128]
encoder_hidden = [32]
latent_dim = 8
init_log_std = -1.4

[sweep]
thigh = [0.25, 0.3, 0.35, 0.4]   # empty lists: generate from design at `spacing`
shin = [0.25, 0.3, 0.35, 0.4]
spacing = 0.05
ledger_generation = 0

[morphology]                     # target of pretrain/distill/eval
thigh_m = 0.31                   # [published] evolved design
shin_m = 0.36                    # [published] evolved design

[teacher]
iterations = 300

[distill]
iterations = 300
num_envs = 32
steps_per_iteration = 48
epochs = 4
learning_rate = 0.001
velocity_loss_coef = 1.0
max_grad_norm = 1.0
gru_hidden = 64
summary_dim = 8
actor_hidden = [256, 128]
teacher_mix_iterations = 0
replay_windows = 8               # recent rollout windows trained on each iteration
final_lr_fraction = 0.1          # linear learning-rate decay target

[eval]
episodes = 10
comparison_steps = 500
comparison_envs = 16

[sim]
physics_dt = 0.001               # s
substeps = 20                    # 50 Hz control
density = 2.0                    # kg/m, uniform over leg links

[sim.torso]
mass = 6.0
length = 0.4

[sim.limits.hip]
lower = -1.5
upper = 1.5
velocity = 21.0
torque = 33.5

[sim.limits.knee]
lower = -1.5
upper = 1.5
velocity = 14.0
torque = 50.25

[sim.contact]
enabled = true
stiffness = 10000.0
damping = 100.0
friction = 0.8
tangential_stiffness = 10000.0
tangential_damping = 100.0

[sim.gains]
kp = [40.0, 40.0, 40.0, 40.0]
kd = [1.5, 1.5, 1.5, 1.5]

[env]
task = "comprehensive_locomotion"   # or "max_velocity"
episode_length_s = 20.0
tracking_sigma = 0.25
velocity_reward_scale = 1.0
command_range = [0.0, 1.5]
command_resample_s = 5.0
friction_range = [0.4, 1.0]
mass_offset_range = [-0.5, 0.5]
init_jitter_rad = 0.05
nominal_stance = [0.15, 0.0, -0.15, 0.0]
gait_period_s = 0.8
soft_limit_fraction = 0.9

[env.rewards]
task = 1.0
torque = -0.0001
action_rate = -0.01
pitch = -0.5
height = -1.0
joint_limit = -1.0
alive = 0.2

[env.push]
enabled = true
interval_s = 5.0                 # [published]
jitter_s = 1.0
impulse_range = [2.0, 6.0]

[env.termination]
height_fraction = 0.4
max_pitch = 1.0
failure_penalty = -10.0
"#;
