//! Deployable student: a recurrent history encoder that estimates body
//! velocity and a latent summary from proprioception alone, and an actor on
//! top of it. Trained by on-policy imitation of a privileged teacher.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gru::{Gru, GruStepCache};
use super::nn::{clip_grad_norm, Adam, Mlp, MlpCache};
use super::policy::{proprio_features, teacher_features, PolicyDims, PolicyParams};
use crate::env::{EnvSetup, Observation, Phase, SeedLedger, StepOutcome, WalkerEnv, PROPRIO_DIM, VELOCITY_DIM};
use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use crate::sim::{WalkerModel, NUM_JOINTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentHyper {
    pub iterations: usize,
    pub num_envs: usize,
    /// Rollout window, also the backpropagation-through-time horizon.
    pub steps_per_iteration: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub velocity_loss_coef: f64,
    pub max_grad_norm: f64,
    pub gru_hidden: usize,
    pub summary_dim: usize,
    pub actor_hidden: Vec<usize>,
    /// Iterations over which executed actions blend from teacher to student.
    pub teacher_mix_iterations: usize,
    /// Most recent windows kept for aggregated training (1 = newest only).
    pub replay_windows: usize,
    /// Learning rate at the last iteration as a fraction of the initial one;
    /// decays linearly.
    pub final_lr_fraction: f64,
}

impl Default for StudentHyper {
    fn default() -> Self {
        Self {
            iterations: 300,
            num_envs: 32,
            steps_per_iteration: 48,
            epochs: 4,
            learning_rate: 1e-3,
            velocity_loss_coef: 1.0,
            max_grad_norm: 1.0,
            gru_hidden: 64,
            summary_dim: 8,
            actor_hidden: vec![256, 128],
            teacher_mix_iterations: 0,
            replay_windows: 8,
            final_lr_fraction: 0.1,
        }
    }
}

impl StudentHyper {
    pub fn validate(&self) -> Result<()> {
        if self.num_envs == 0 || self.steps_per_iteration == 0 || self.epochs == 0 || self.replay_windows == 0 {
            return Err(Error::config(
                "student",
                "num_envs, steps_per_iteration, epochs and replay_windows must be >= 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::config("student.final_lr_fraction", "must be in [0, 1]"));
        }
        if self.gru_hidden == 0 || self.summary_dim == 0 || self.actor_hidden.contains(&0) {
            return Err(Error::config("student", "layer sizes must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.velocity_loss_coef >= 0.0 && self.max_grad_norm >= 0.0) {
            return Err(Error::config("student.learning_rate", "must be > 0 with non-negative coefficients"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentParams {
    pub gru: Gru,
    /// Hidden state to (y ⊕ v̂).
    pub head: Mlp,
    /// (o ⊕ v̂ ⊕ y) to action mean, offset by `action_offset`.
    pub actor: Mlp,
    pub action_offset: Vec<f64>,
    pub summary_dim: usize,
}

/// Per-step student outputs for a batch.
pub struct StudentOutput {
    pub hidden: DMatrix<f64>,
    pub summary: DMatrix<f64>,
    pub velocity: DMatrix<f64>,
    pub mean: DMatrix<f64>,
}

struct StepCache {
    gru: GruStepCache,
    head: MlpCache,
    actor: MlpCache,
    velocity: DMatrix<f64>,
    mean: DMatrix<f64>,
}

impl StudentParams {
    pub fn new(hyper: &StudentHyper, action_offset: Vec<f64>, rng: &mut impl Rng) -> Result<Self> {
        hyper.validate()?;
        let mut actor_sizes = vec![PROPRIO_DIM + VELOCITY_DIM + hyper.summary_dim];
        actor_sizes.extend_from_slice(&hyper.actor_hidden);
        actor_sizes.push(action_offset.len());
        Ok(Self {
            gru: Gru::new(PROPRIO_DIM, hyper.gru_hidden, rng),
            head: Mlp::new(&[hyper.gru_hidden, hyper.summary_dim + VELOCITY_DIM], 1.0, rng),
            actor: Mlp::new(&actor_sizes, 0.01, rng),
            action_offset,
            summary_dim: hyper.summary_dim,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru.hidden()
    }

    pub fn num_params(&self) -> usize {
        self.gru.num_params() + self.head.num_params() + self.actor.num_params()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.gru.write_flat(&mut out);
        self.head.write_flat(&mut out);
        self.actor.write_flat(&mut out);
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut k = self.gru.read_flat(flat);
        k += self.head.read_flat(&flat[k..]);
        self.actor.read_flat(&flat[k..]);
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    fn actor_input(&self, x: &DMatrix<f64>, velocity: &DMatrix<f64>, summary: &DMatrix<f64>) -> DMatrix<f64> {
        let b = x.ncols();
        let mut inp = DMatrix::zeros(PROPRIO_DIM + VELOCITY_DIM + self.summary_dim, b);
        inp.rows_mut(0, PROPRIO_DIM).copy_from(x);
        inp.rows_mut(PROPRIO_DIM, VELOCITY_DIM).copy_from(velocity);
        inp.rows_mut(PROPRIO_DIM + VELOCITY_DIM, self.summary_dim).copy_from(summary);
        inp
    }

    fn add_offset(&self, mean: &mut DMatrix<f64>) {
        for mut col in mean.column_iter_mut() {
            for (m, o) in col.iter_mut().zip(&self.action_offset) {
                *m += o;
            }
        }
    }

    /// One recurrent step. `x` holds scaled proprioceptive features.
    pub fn step(&self, x: &DMatrix<f64>, h_prev: &DMatrix<f64>) -> StudentOutput {
        let (hidden, _) = self.gru.step(x, h_prev);
        let out = self.head.forward(&hidden);
        let summary = out.rows(0, self.summary_dim).into_owned();
        let velocity = out.rows(self.summary_dim, VELOCITY_DIM).into_owned();
        let mut mean = self.actor.forward(&self.actor_input(x, &velocity, &summary));
        self.add_offset(&mut mean);
        StudentOutput {
            hidden,
            summary,
            velocity,
            mean,
        }
    }

    fn step_cached(&self, x: &DMatrix<f64>, h_prev: &DMatrix<f64>) -> (DMatrix<f64>, StepCache) {
        let (hidden, gru) = self.gru.step(x, h_prev);
        let (out, head) = self.head.forward_cached(&hidden);
        let summary = out.rows(0, self.summary_dim).into_owned();
        let velocity = out.rows(self.summary_dim, VELOCITY_DIM).into_owned();
        let (mut mean, actor) = self.actor.forward_cached(&self.actor_input(x, &velocity, &summary));
        self.add_offset(&mut mean);
        (
            hidden,
            StepCache {
                gru,
                head,
                actor,
                velocity,
                mean,
            },
        )
    }
}

/// Summary `y_t` and velocity estimate for every step of one episode's
/// observation stream, starting from a zero hidden state.
pub fn gru_encode_history(
    student: &StudentParams,
    nominal: &[f64; NUM_JOINTS],
    stream: &[Observation],
) -> Vec<(Vec<f64>, [f64; VELOCITY_DIM])> {
    let mut h = DMatrix::zeros(student.hidden_dim(), 1);
    let mut out = Vec::with_capacity(stream.len());
    let mut x = Vec::with_capacity(PROPRIO_DIM);
    for o in stream {
        x.clear();
        proprio_features(&o.for_phase(Phase::Student), nominal, &mut x);
        let s = student.step(&DMatrix::from_column_slice(PROPRIO_DIM, 1, &x), &h);
        out.push((s.summary.as_slice().to_vec(), [s.velocity[(0, 0)], s.velocity[(1, 0)]]));
        h = s.hidden;
    }
    out
}

/// A rollout window with teacher labels, column per environment.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillWindow {
    pub h0: DMatrix<f64>,
    pub inputs: Vec<DMatrix<f64>>,
    /// `resets[t][b]`: hidden state of env `b` is zeroed before step `t`.
    pub resets: Vec<Vec<bool>>,
    pub target_actions: Vec<DMatrix<f64>>,
    pub target_velocity: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DistillLoss {
    pub action_mse: f64,
    pub velocity_mse: f64,
    pub total: f64,
}

fn mask_columns(h: &mut DMatrix<f64>, resets: &[bool]) {
    for (b, &r) in resets.iter().enumerate() {
        if r {
            h.column_mut(b).fill(0.0);
        }
    }
}

/// Imitation loss over a window and its gradient in `to_flat` order. The
/// actor's dependence on the velocity estimate is not differentiated
/// through; only the velocity loss trains that output.
pub fn window_loss_and_grad(student: &StudentParams, w: &DistillWindow, velocity_coef: f64) -> (DistillLoss, Vec<f64>) {
    let steps = w.inputs.len();
    let b = w.h0.ncols();
    let na = student.action_offset.len();
    let mut h = w.h0.clone();
    let mut caches = Vec::with_capacity(steps);
    for t in 0..steps {
        mask_columns(&mut h, &w.resets[t]);
        let (hn, c) = student.step_cached(&w.inputs[t], &h);
        caches.push(c);
        h = hn;
    }
    let n_act = (steps * b * na) as f64;
    let n_vel = (steps * b * VELOCITY_DIM) as f64;
    let mut loss = DistillLoss::default();
    let mut g_gru = student.gru.zeros_like();
    let mut g_head = student.head.zeros_like();
    let mut g_actor = student.actor.zeros_like();
    let mut carry = DMatrix::zeros(student.hidden_dim(), b);
    for t in (0..steps).rev() {
        let c = &caches[t];
        let da = &c.mean - &w.target_actions[t];
        let dv = &c.velocity - &w.target_velocity[t];
        loss.action_mse += da.norm_squared() / n_act;
        loss.velocity_mse += dv.norm_squared() / n_vel;
        let g_in = student.actor.backward(&c.actor, &(da * (2.0 / n_act)), &mut g_actor);
        let mut g_out = DMatrix::zeros(student.summary_dim + VELOCITY_DIM, b);
        g_out
            .rows_mut(0, student.summary_dim)
            .copy_from(&g_in.rows(PROPRIO_DIM + VELOCITY_DIM, student.summary_dim));
        g_out
            .rows_mut(student.summary_dim, VELOCITY_DIM)
            .copy_from(&(dv * (2.0 * velocity_coef / n_vel)));
        let dh = student.head.backward(&c.head, &g_out, &mut g_head) + &carry;
        carry = student.gru.step_backward(&c.gru, &dh, &mut g_gru);
        mask_columns(&mut carry, &w.resets[t]);
    }
    loss.total = loss.action_mse + velocity_coef * loss.velocity_mse;
    let mut grad = Vec::with_capacity(student.num_params());
    g_gru.write_flat(&mut grad);
    g_head.write_flat(&mut grad);
    g_actor.write_flat(&mut grad);
    (loss, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DistillStats {
    pub iteration: u64,
    /// Per-component RMS of student minus teacher action, rad, measured on
    /// the rollout before the update.
    pub action_rms: f64,
    /// Per-component RMS velocity-estimate error, m/s.
    pub velocity_rms: f64,
    pub loss: f64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillOutcome {
    pub student: StudentParams,
    pub trace: Vec<DistillStats>,
}

/// Drives environments with a student (optionally blended with the
/// teacher) and records teacher labels.
struct DistillRunner<'a> {
    teacher: &'a PolicyParams,
    envs: Vec<WalkerEnv>,
    obs: Vec<Observation>,
    hidden: DMatrix<f64>,
    fresh: Vec<bool>,
    ledger: SeedLedger,
    nominal: [f64; NUM_JOINTS],
}

struct Collected {
    window: DistillWindow,
    mean_reward: f64,
    sq_action: f64,
    sq_velocity: f64,
    count_action: usize,
    count_velocity: usize,
    diverged: usize,
}

impl<'a> DistillRunner<'a> {
    fn new(teacher: &'a PolicyParams, model: &WalkerModel, setup: &EnvSetup, n: usize, ledger: SeedLedger, hidden: usize) -> Self {
        let mut envs: Vec<WalkerEnv> = (0..n as u64)
            .map(|i| WalkerEnv::new(model.clone(), setup.sim, setup.env, i))
            .collect();
        let obs = envs.iter_mut().map(|e| e.reset(&ledger)).collect();
        Self {
            teacher,
            envs,
            obs,
            hidden: DMatrix::zeros(hidden, n),
            fresh: vec![true; n],
            ledger,
            nominal: setup.env.nominal_stance,
        }
    }

    /// `teacher_weight` in [0, 1] blends the executed action toward the teacher.
    fn collect(&mut self, student: &StudentParams, steps: usize, teacher_weight: f64) -> Result<Collected> {
        let ne = self.envs.len();
        let mut window = DistillWindow {
            h0: self.hidden.clone(),
            inputs: Vec::with_capacity(steps),
            resets: Vec::with_capacity(steps),
            target_actions: Vec::with_capacity(steps),
            target_velocity: Vec::with_capacity(steps),
        };
        let mut c = Collected {
            window: window.clone(),
            mean_reward: 0.0,
            sq_action: 0.0,
            sq_velocity: 0.0,
            count_action: 0,
            count_velocity: 0,
            diverged: 0,
        };
        let mut diverged = vec![false; ne];
        let mut total_reward = 0.0;
        let mut h = self.hidden.clone();
        for _ in 0..steps {
            let resets = std::mem::replace(&mut self.fresh, vec![false; ne]);
            mask_columns(&mut h, &resets);
            let mut x = DMatrix::zeros(PROPRIO_DIM, ne);
            let mut trunk = DMatrix::zeros(PolicyDims::WALKER.trunk(), ne);
            let mut privileged = DMatrix::zeros(PolicyDims::WALKER.privileged, ne);
            let mut vel = DMatrix::zeros(VELOCITY_DIM, ne);
            let mut buf = Vec::with_capacity(PROPRIO_DIM);
            for (e, o) in self.obs.iter().enumerate() {
                buf.clear();
                proprio_features(&o.for_phase(Phase::Student), &self.nominal, &mut buf);
                x.column_mut(e).copy_from_slice(&buf);
                let (t, p) = teacher_features(o, &self.nominal)?;
                trunk.column_mut(e).copy_from_slice(&t);
                privileged.column_mut(e).copy_from_slice(&p);
                let v = o.velocity.unwrap_or([0.0; VELOCITY_DIM]);
                vel.column_mut(e).copy_from_slice(&v);
            }
            let s = student.step(&x, &h);
            let teacher_mean = self.teacher.forward_batch(&trunk, &privileged)?.mean;
            let da = &s.mean - &teacher_mean;
            let dv = &s.velocity - &vel;
            c.sq_action += da.norm_squared();
            c.sq_velocity += dv.norm_squared();
            c.count_action += da.len();
            c.count_velocity += dv.len();
            let exec = &s.mean * (1.0 - teacher_weight) + &teacher_mean * teacher_weight;
            let actions: Vec<[f64; NUM_JOINTS]> = (0..ne)
                .map(|e| std::array::from_fn(|j| exec[(j, e)]))
                .collect();
            let outcomes: Vec<StepOutcome> = self
                .envs
                .par_iter_mut()
                .zip(actions.par_iter())
                .map(|(env, a)| env.step(a))
                .collect::<Result<_>>()?;
            for (e, o) in outcomes.into_iter().enumerate() {
                total_reward += o.reward.total;
                diverged[e] |= o.info.diverged;
                if o.done {
                    self.obs[e] = self.envs[e].reset(&self.ledger);
                    self.fresh[e] = true;
                } else {
                    self.obs[e] = o.observation;
                }
            }
            window.inputs.push(x);
            window.resets.push(resets);
            window.target_actions.push(teacher_mean);
            window.target_velocity.push(vel);
            h = s.hidden;
        }
        self.hidden = h;
        c.window = window;
        c.mean_reward = total_reward / ne as f64;
        c.diverged = diverged.iter().filter(|&&d| d).count();
        Ok(c)
    }
}

fn rms(sq: f64, n: usize) -> f64 {
    (sq / n.max(1) as f64).sqrt()
}

/// Fresh student with the nominal stance as action offset.
pub fn init_student(hyper: &StudentHyper, setup: &EnvSetup, seed: u64) -> Result<StudentParams> {
    let mut rng = stream(seed, &[tag("student-init")]);
    StudentParams::new(hyper, setup.env.nominal_stance.to_vec(), &mut rng)
}

/// On-policy imitation of `teacher` on one morphology. The trace has one
/// entry per iteration, measured before that iteration's update; with zero
/// iterations a single baseline measurement is returned and no update is made.
pub fn distill_student(
    teacher: &PolicyParams,
    init: StudentParams,
    model: &WalkerModel,
    ledger: &SeedLedger,
    hyper: &StudentHyper,
    setup: &EnvSetup,
    mut on_iteration: impl FnMut(&DistillStats),
) -> Result<DistillOutcome> {
    hyper.validate()?;
    setup.validate()?;
    if teacher.dims != PolicyDims::WALKER {
        return Err(Error::Shape("teacher dimensions do not match the walker observation".into()));
    }
    let mut student = init;
    let mut runner = DistillRunner::new(teacher, model, setup, hyper.num_envs, *ledger, student.hidden_dim());
    let mut opt = Adam::new(student.num_params(), hyper.learning_rate);
    let mut trace = Vec::new();
    let mut replay = std::collections::VecDeque::with_capacity(hyper.replay_windows + 1);
    let rounds = hyper.iterations.max(1);
    for it in 0..rounds {
        let weight = if it < hyper.teacher_mix_iterations {
            1.0 - it as f64 / hyper.teacher_mix_iterations as f64
        } else {
            0.0
        };
        let c = runner.collect(&student, hyper.steps_per_iteration, weight)?;
        if 2 * c.diverged > hyper.num_envs {
            return Err(Error::TrainingFailure(format!(
                "simulation diverged in {} of {} environments during distillation",
                c.diverged, hyper.num_envs
            )));
        }
        let mut stats = DistillStats {
            iteration: it as u64,
            action_rms: rms(c.sq_action, c.count_action),
            velocity_rms: rms(c.sq_velocity, c.count_velocity),
            loss: f64::NAN,
            mean_reward: c.mean_reward,
        };
        if hyper.iterations == 0 {
            stats.loss = window_loss_and_grad(&student, &c.window, hyper.velocity_loss_coef).0.total;
            on_iteration(&stats);
            trace.push(stats);
            break;
        }
        replay.push_back(c.window);
        if replay.len() > hyper.replay_windows {
            replay.pop_front();
        }
        let progress = it as f64 / (rounds - 1).max(1) as f64;
        opt.lr = hyper.learning_rate * (1.0 - (1.0 - hyper.final_lr_fraction) * progress);
        let mut flat = student.to_flat();
        for epoch in 0..hyper.epochs {
            for (k, w) in replay.iter().rev().enumerate() {
                let (loss, mut grad) = window_loss_and_grad(&student, w, hyper.velocity_loss_coef);
                if epoch == 0 && k == 0 {
                    stats.loss = loss.total;
                }
                if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::TrainingFailure(format!("non-finite distillation loss at iteration {it}")));
                }
                clip_grad_norm(&mut grad, hyper.max_grad_norm);
                opt.step(&mut flat, &grad);
                student.set_flat(&flat);
            }
        }
        on_iteration(&stats);
        trace.push(stats);
    }
    Ok(DistillOutcome { student, trace })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentEval {
    pub action_rms: f64,
    pub velocity_rms: f64,
    /// Mean over environments of reward summed over the horizon, student driving.
    pub student_reward: f64,
    /// Same with the teacher driving.
    pub teacher_reward: f64,
}

/// Compares student and teacher on rollouts drawn from `ledger`.
pub fn evaluate_student(
    student: &StudentParams,
    teacher: &PolicyParams,
    model: &WalkerModel,
    ledger: &SeedLedger,
    setup: &EnvSetup,
    num_envs: usize,
    steps: usize,
) -> Result<StudentEval> {
    let mut runner = DistillRunner::new(teacher, model, setup, num_envs, *ledger, student.hidden_dim());
    let c = runner.collect(student, steps, 0.0)?;
    let teacher_run = super::train::evaluate_policy(model, teacher, ledger, setup, num_envs, steps)?;
    Ok(StudentEval {
        action_rms: rms(c.sq_action, c.count_action),
        velocity_rms: rms(c.sq_velocity, c.count_velocity),
        student_reward: c.mean_reward,
        teacher_reward: teacher_run.mean_reward,
    })
}
