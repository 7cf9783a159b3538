//! Physics oracles: energy, momentum and static stance.

use biped_codesign::sim::{
    build_walker, generalized_momentum, joint_torques, step, JointLimits, LegLengths, PdGains,
    SimState, StepOptions, TorsoSpec, WalkerModel,
};

fn model(t: f64, s: f64) -> WalkerModel {
    build_walker(LegLengths::new(t, s).unwrap(), 2.0, TorsoSpec::default(), JointLimits::default())
        .unwrap()
}

/// Independent energy bookkeeping: explicit link geometry, rod inertia about
/// each centre of mass, gravity with zero at z = 0.
fn energy_oracle(m: &WalkerModel, s: &SimState) -> f64 {
    let g = m.gravity;
    let (z, pitch) = (s.q[1], s.q[2]);
    let (vx, vz, wp) = (s.qd[0], s.qd[1], s.qd[2]);
    let mut e = 0.0;

    // torso: centre at hip + (L/2)(−sin φ, cos φ)
    let lt = m.torso.length;
    let cz = z + 0.5 * lt * pitch.cos();
    let cvx = vx - 0.5 * lt * pitch.cos() * wp;
    let cvz = vz - 0.5 * lt * pitch.sin() * wp;
    let i_torso = m.torso.mass * lt * lt / 12.0;
    e += 0.5 * m.torso.mass * (cvx * cvx + cvz * cvz) + 0.5 * i_torso * wp * wp + m.torso.mass * g * cz;

    for leg in 0..2 {
        let (hip, knee) = (s.q[3 + 2 * leg], s.q[4 + 2 * leg]);
        let (dhip, dknee) = (s.qd[3 + 2 * leg], s.qd[4 + 2 * leg]);
        let links = m.legs[leg];
        let th_t = pitch + hip;
        let th_s = th_t + knee;
        let w_t = wp + dhip;
        let w_s = w_t + dknee;
        let (a, b) = (links.thigh.length, links.shin.length);

        let tz = z - 0.5 * a * th_t.cos();
        let tvx = vx + 0.5 * a * th_t.cos() * w_t;
        let tvz = vz + 0.5 * a * th_t.sin() * w_t;
        let mt = links.thigh.mass;
        e += 0.5 * mt * (tvx * tvx + tvz * tvz) + 0.5 * (mt * a * a / 12.0) * w_t * w_t + mt * g * tz;

        let kvx = vx + a * th_t.cos() * w_t;
        let kvz = vz + a * th_t.sin() * w_t;
        let sz = z - a * th_t.cos() - 0.5 * b * th_s.cos();
        let svx = kvx + 0.5 * b * th_s.cos() * w_s;
        let svz = kvz + 0.5 * b * th_s.sin() * w_s;
        let ms = links.shin.mass;
        e += 0.5 * ms * (svx * svx + svz * svz) + 0.5 * (ms * b * b / 12.0) * w_s * w_s + ms * g * sz;
    }
    e
}

#[test]
fn passive_double_pendulum_energy_drift_below_one_percent() {
    let m = model(0.31, 0.36);
    let opts = StepOptions {
        fixed_base: true,
        ..Default::default()
    };
    let mut s = SimState::standing(&m, [0.0; 4]);
    s.q[1] = 1.5;
    let mut rest = s;
    rest.q[3..].copy_from_slice(&[0.0; 4]);
    let rest_energy = energy_oracle(&m, &rest);
    s.q[3..].copy_from_slice(&[0.7, 0.4, -0.5, 0.2]);

    let e0 = energy_oracle(&m, &s);
    let swing = e0 - rest_energy;
    assert!(swing > 1.0);
    let dt = 1e-3;
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        s = step(&m, &s, &[0.0; 4], dt, &opts).unwrap();
        assert!(s.q[3..].iter().all(|q| q.abs() < 1.5), "hit a joint stop");
        worst = worst.max((energy_oracle(&m, &s) - e0).abs());
    }
    let drift = worst / swing;
    assert!(drift < 0.01, "relative drift {drift}");
}

#[test]
fn ballistic_horizontal_momentum_conserved() {
    let m = model(0.3, 0.3);
    let opts = StepOptions::default();
    let mut s = SimState::standing(&m, [0.3, -0.4, -0.2, 0.5]);
    s.q[1] += 20.0;
    s.qd = [0.7, 1.0, 0.8, -0.6, 0.9, 0.5, -0.4];
    let mut p = generalized_momentum(&m, &s)[0];
    for _ in 0..2000 {
        s = step(&m, &s, &[0.0; 4], 1e-3, &opts).unwrap();
        assert!(s.q[3..].iter().all(|q| q.abs() < 1.5), "hit a joint stop");
        let next = generalized_momentum(&m, &s)[0];
        assert!((next - p).abs() < 1e-9, "per-step change {}", next - p);
        p = next;
    }
}

#[test]
fn static_stance_supports_body_weight() {
    let m = model(0.3, 0.3);
    let opts = StepOptions::default();
    let stance = [0.15, 0.0, -0.15, 0.0];
    let gains = PdGains::default();
    let mut s = SimState::standing(&m, stance);
    for _ in 0..3000 {
        let tau = joint_torques(&m, &gains, &s, &stance);
        s = step(&m, &s, &tau, 1e-3, &opts).unwrap();
    }
    let normal: f64 = s.feet.iter().map(|f| f.force[1]).sum();
    let weight = m.total_mass * m.gravity;
    assert!(((normal - weight) / weight).abs() < 0.02, "{normal} vs {weight}");
    assert!(s.feet.iter().all(|f| f.in_contact));
}

#[test]
fn trajectories_are_bit_identical() {
    let m = model(0.25, 0.38);
    let run = || {
        let mut s = SimState::standing(&m, [0.15, 0.0, -0.15, 0.0]);
        let mut trace = Vec::new();
        for k in 0..1500 {
            let target = [0.3 * (k as f64 * 0.01).sin(), -0.2, -0.1, 0.3];
            let tau = joint_torques(&m, &PdGains::default(), &s, &target);
            s = step(&m, &s, &tau, 1e-3, &StepOptions::default()).unwrap();
            trace.push(s);
        }
        trace
    };
    assert_eq!(run(), run());
}
