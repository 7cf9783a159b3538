//! Planar floating-base dynamics of the five-link walker.
//!
//! Every link direction is parameterized by its absolute angle `θ`
//! (counter-clockwise positive). Leg links point along `d(θ) = (sin θ, −cos θ)`,
//! the torso points along `−d(θ)`. Absolute angles are linear in the
//! generalized coordinates: `θ_torso = pitch`, `θ_thigh = pitch + hip`,
//! `θ_shin = pitch + hip + knee`.
//!
//! Integration is semi-implicit Euler in momentum form: the generalized
//! momentum `p = M(q) q̇` is advanced with forces evaluated at `q_n`, the
//! configuration with the updated velocity `M(q_n)⁻¹ p_{n+1}`, and the new
//! velocity is recovered from `M(q_{n+1})`. Horizontal momentum is a cyclic
//! coordinate, so it is conserved to rounding in flight.

use nalgebra::{SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};

use super::contact::{contact_from_kinematics, ContactParams};
use super::model::{WalkerModel, NUM_JOINTS};
use super::state::{SimState, IDX_JOINT0, IDX_X, IDX_Z, NDOF};
use crate::error::{Error, Result};

pub type VecN = SVector<f64, NDOF>;
pub type MatN = SMatrix<f64, NDOF, NDOF>;
pub type Jac = SMatrix<f64, 2, NDOF>;

pub(crate) const NUM_LINKS: usize = 5;
/// Link order: torso, thigh L, shin L, thigh R, shin R.
const LINK_COORDS: [&[usize]; NUM_LINKS] = [&[2], &[2, 3], &[2, 3, 4], &[2, 5], &[2, 5, 6]];

/// Fixed-point sweeps for the implicit velocity dependence of `∂T/∂q`.
const VELOCITY_SWEEPS: usize = 2;

/// Integration options that are not part of the morphology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepOptions {
    pub contact: ContactParams,
    /// Pins torso x, z and pitch (legs swing as two double pendulums).
    #[serde(default)]
    pub fixed_base: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            contact: ContactParams::default(),
            fixed_base: false,
        }
    }
}

#[inline]
fn dir(theta: f64) -> Vector2<f64> {
    Vector2::new(theta.sin(), -theta.cos())
}

#[inline]
fn dir_prime(theta: f64) -> Vector2<f64> {
    Vector2::new(theta.cos(), theta.sin())
}

/// A body point written as `hip + Σ coeff · d(θ_link)`.
#[derive(Clone, Copy)]
struct PointDef {
    terms: [(usize, f64); 2],
    n: usize,
}

impl PointDef {
    fn one(link: usize, a: f64) -> Self {
        Self { terms: [(link, a), (0, 0.0)], n: 1 }
    }
    fn two(l0: usize, a0: f64, l1: usize, a1: f64) -> Self {
        Self { terms: [(l0, a0), (l1, a1)], n: 2 }
    }
    fn terms(&self) -> &[(usize, f64)] {
        &self.terms[..self.n]
    }
}

fn com_defs(model: &WalkerModel) -> [PointDef; NUM_LINKS] {
    let t = model.torso.length;
    let [l, r] = model.legs;
    [
        PointDef::one(0, -0.5 * t),
        PointDef::one(1, 0.5 * l.thigh.length),
        PointDef::two(1, l.thigh.length, 2, 0.5 * l.shin.length),
        PointDef::one(3, 0.5 * r.thigh.length),
        PointDef::two(3, r.thigh.length, 4, 0.5 * r.shin.length),
    ]
}

fn foot_defs(model: &WalkerModel) -> [PointDef; 2] {
    let [l, r] = model.legs;
    [
        PointDef::two(1, l.thigh.length, 2, l.shin.length),
        PointDef::two(3, r.thigh.length, 4, r.shin.length),
    ]
}

fn link_masses(model: &WalkerModel) -> [(f64, f64); NUM_LINKS] {
    let [l, r] = model.legs;
    [model.torso, l.thigh, l.shin, r.thigh, r.shin].map(|k| (k.mass, k.inertia_com()))
}

/// Positions and Jacobians of link centres of mass and feet at one configuration.
pub struct Kinematics {
    pub theta: [f64; NUM_LINKS],
    pub com: [Vector2<f64>; NUM_LINKS],
    pub jac_com: [Jac; NUM_LINKS],
    pub foot: [Vector2<f64>; 2],
    pub jac_foot: [Jac; 2],
    com_defs: [PointDef; NUM_LINKS],
}

impl Kinematics {
    pub fn new(model: &WalkerModel, q: &[f64; NDOF]) -> Self {
        let mut theta = [0.0; NUM_LINKS];
        for (k, coords) in LINK_COORDS.iter().enumerate() {
            theta[k] = coords.iter().map(|&c| q[c]).sum();
        }
        let hip = Vector2::new(q[IDX_X], q[IDX_Z]);
        let point = |def: &PointDef| -> (Vector2<f64>, Jac) {
            let mut p = hip;
            let mut jac = Jac::zeros();
            jac[(0, IDX_X)] = 1.0;
            jac[(1, IDX_Z)] = 1.0;
            for &(link, a) in def.terms() {
                p += a * dir(theta[link]);
                let dp = a * dir_prime(theta[link]);
                for &c in LINK_COORDS[link] {
                    jac[(0, c)] += dp.x;
                    jac[(1, c)] += dp.y;
                }
            }
            (p, jac)
        };
        let com_defs = com_defs(model);
        let mut com = [Vector2::zeros(); NUM_LINKS];
        let mut jac_com = [Jac::zeros(); NUM_LINKS];
        for (i, def) in com_defs.iter().enumerate() {
            (com[i], jac_com[i]) = point(def);
        }
        let mut foot = [Vector2::zeros(); 2];
        let mut jac_foot = [Jac::zeros(); 2];
        for (i, def) in foot_defs(model).iter().enumerate() {
            (foot[i], jac_foot[i]) = point(def);
        }
        Self {
            theta,
            com,
            jac_com,
            foot,
            jac_foot,
            com_defs,
        }
    }

    pub fn mass_matrix(&self, model: &WalkerModel) -> MatN {
        let mut m = MatN::zeros();
        for (i, (mass, inertia)) in link_masses(model).into_iter().enumerate() {
            m += mass * self.jac_com[i].transpose() * self.jac_com[i];
            for &a in LINK_COORDS[i] {
                for &b in LINK_COORDS[i] {
                    m[(a, b)] += inertia;
                }
            }
        }
        m
    }

    fn link_rates(&self, qd: &VecN) -> [f64; NUM_LINKS] {
        let mut out = [0.0; NUM_LINKS];
        for (k, coords) in LINK_COORDS.iter().enumerate() {
            out[k] = coords.iter().map(|&c| qd[c]).sum();
        }
        out
    }

    /// `∂T/∂q` at this configuration for generalized velocity `qd`.
    fn kinetic_gradient(&self, model: &WalkerModel, qd: &VecN) -> VecN {
        let rates = self.link_rates(qd);
        let mut per_link = [0.0; NUM_LINKS];
        for (i, (mass, _)) in link_masses(model).into_iter().enumerate() {
            let v = self.jac_com[i] * qd;
            for &(link, a) in self.com_defs[i].terms() {
                per_link[link] -= mass * a * rates[link] * v.dot(&dir(self.theta[link]));
            }
        }
        spread_link_terms(&per_link)
    }

    /// `∂V/∂q` for gravitational potential energy.
    fn potential_gradient(&self, model: &WalkerModel) -> VecN {
        let g = model.gravity;
        let mut per_link = [0.0; NUM_LINKS];
        let mut total = 0.0;
        for (i, (mass, _)) in link_masses(model).into_iter().enumerate() {
            total += mass;
            for &(link, a) in self.com_defs[i].terms() {
                per_link[link] += g * mass * a * self.theta[link].sin();
            }
        }
        let mut grad = spread_link_terms(&per_link);
        grad[IDX_Z] = g * total;
        grad
    }
}

fn spread_link_terms(per_link: &[f64; NUM_LINKS]) -> VecN {
    let mut out = VecN::zeros();
    for (k, coords) in LINK_COORDS.iter().enumerate() {
        for &c in coords.iter() {
            out[c] += per_link[k];
        }
    }
    out
}

pub fn foot_positions(model: &WalkerModel, state: &SimState) -> [Vector2<f64>; 2] {
    Kinematics::new(model, &state.q).foot
}

/// Total mechanical energy (kinetic + gravitational, zero at z = 0).
pub fn mechanical_energy(model: &WalkerModel, state: &SimState) -> f64 {
    let kin = Kinematics::new(model, &state.q);
    let qd = VecN::from(state.qd);
    let kinetic = 0.5 * qd.dot(&(kin.mass_matrix(model) * qd));
    let potential: f64 = link_masses(model)
        .iter()
        .zip(kin.com.iter())
        .map(|((m, _), p)| m * model.gravity * p.y)
        .sum();
    kinetic + potential
}

/// Generalized momentum `M(q) q̇`. Component 0 is the total horizontal momentum.
pub fn generalized_momentum(model: &WalkerModel, state: &SimState) -> VecN {
    let kin = Kinematics::new(model, &state.q);
    kin.mass_matrix(model) * VecN::from(state.qd)
}

fn pin_base(m: &mut MatN, v: &mut VecN) {
    for k in 0..IDX_JOINT0 {
        for c in 0..NDOF {
            m[(k, c)] = 0.0;
            m[(c, k)] = 0.0;
        }
        m[(k, k)] = 1.0;
        v[k] = 0.0;
    }
}

fn solve(m: MatN, rhs: &VecN) -> Result<VecN> {
    m.cholesky()
        .map(|c| c.solve(rhs))
        .ok_or_else(|| Error::SimulationDiverged {
            quantity: "mass matrix (not positive definite)".into(),
            value: f64::NAN,
        })
}

/// Advances one physics step of length `dt` with the given joint torques.
///
/// Joint angles are clamped to their limits afterwards; a joint driven into a
/// stop loses its outward velocity.
pub fn step(
    model: &WalkerModel,
    state: &SimState,
    torques: &[f64; NUM_JOINTS],
    dt: f64,
    opts: &StepOptions,
) -> Result<SimState> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::Domain(format!("dt must lie in (0, 0.01], got {dt}")));
    }
    let kin = Kinematics::new(model, &state.q);
    let mut mass = kin.mass_matrix(model);
    let qd = VecN::from(state.qd);
    let mut momentum = mass * qd;

    let mut applied = -kin.potential_gradient(model);
    for (j, &tau) in torques.iter().enumerate() {
        applied[IDX_JOINT0 + j] += tau;
    }
    let contact = if opts.contact.enabled && !opts.fixed_base {
        contact_from_kinematics(&kin, state, &qd, &opts.contact)
    } else {
        Default::default()
    };
    for (f, jac) in contact.forces.iter().zip(kin.jac_foot.iter()) {
        applied += jac.transpose() * Vector2::new(f[0], f[1]);
    }
    if opts.fixed_base {
        pin_base(&mut mass, &mut momentum);
    }
    let chol = mass.cholesky().ok_or_else(|| Error::SimulationDiverged {
        quantity: "mass matrix (not positive definite)".into(),
        value: f64::NAN,
    })?;

    let mut velocity = qd;
    let mut next_momentum = momentum;
    for _ in 0..VELOCITY_SWEEPS {
        let mut force = applied + kin.kinetic_gradient(model, &velocity);
        if opts.fixed_base {
            force.rows_mut(0, IDX_JOINT0).fill(0.0);
        }
        next_momentum = momentum + dt * force;
        velocity = chol.solve(&next_momentum);
    }

    let mut next = *state;
    for k in 0..NDOF {
        next.q[k] = state.q[k] + dt * velocity[k];
    }
    let next_kin = Kinematics::new(model, &next.q);
    let mut next_mass = next_kin.mass_matrix(model);
    if opts.fixed_base {
        pin_base(&mut next_mass, &mut next_momentum);
    }
    let next_velocity = solve(next_mass, &next_momentum)?;
    next.qd = next_velocity.into();
    next.time = state.time + dt;

    for (j, lim) in model.joints.iter().enumerate() {
        let k = IDX_JOINT0 + j;
        if next.q[k] > lim.upper {
            next.q[k] = lim.upper;
            next.qd[k] = next.qd[k].min(0.0);
        } else if next.q[k] < lim.lower {
            next.q[k] = lim.lower;
            next.qd[k] = next.qd[k].max(0.0);
        }
    }
    for (foot, (f, anchor)) in next
        .feet
        .iter_mut()
        .zip(contact.forces.iter().zip(contact.anchors.iter()))
    {
        foot.in_contact = anchor.is_some();
        foot.force = *f;
        foot.anchor_x = anchor.unwrap_or(0.0);
    }

    if let Some((quantity, value)) = next.first_non_finite() {
        return Err(Error::SimulationDiverged { quantity, value });
    }
    Ok(next)
}

/// Adds a horizontal impulse (kg·m/s) to the whole body.
pub fn apply_push(model: &WalkerModel, state: &SimState, impulse: f64) -> SimState {
    let mut next = *state;
    next.qd[IDX_X] += impulse / model.total_mass;
    next
}
