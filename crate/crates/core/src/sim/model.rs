//! Walker morphology: leg lengths, link inertial properties and joint limits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a length sits on the 0.01 m lattice.
const GRID_EPS: f64 = 1e-9;

/// Box bounds and lattice resolution of the leg-length design space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSpace {
    pub thigh_range: (f64, f64),
    pub shin_range: (f64, f64),
    pub resolution: f64,
}

impl Default for DesignSpace {
    fn default() -> Self {
        Self {
            thigh_range: (0.2, 0.4),
            shin_range: (0.2, 0.4),
            resolution: 0.01,
        }
    }
}

impl DesignSpace {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("thigh_range", self.thigh_range), ("shin_range", self.shin_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
                return Err(Error::config(
                    format!("design.{name}"),
                    format!("expected 0 < min < max, got ({lo}, {hi})"),
                ));
            }
            if !on_lattice(lo, self.resolution) || !on_lattice(hi, self.resolution) {
                return Err(Error::config(
                    format!("design.{name}"),
                    "bounds must be multiples of the resolution",
                ));
            }
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::config("design.resolution", "must be positive"));
        }
        Ok(())
    }

    /// Snaps `value` to the lattice, exactly reproducible as `k * resolution`.
    pub fn snap(&self, value: f64) -> f64 {
        let k = (value / self.resolution).round();
        k * self.resolution
    }

    /// Every lattice value in `range`, ascending.
    pub fn lattice(&self, range: (f64, f64)) -> Vec<f64> {
        let lo = (range.0 / self.resolution).round() as i64;
        let hi = (range.1 / self.resolution).round() as i64;
        (lo..=hi).map(|k| k as f64 * self.resolution).collect()
    }
}

fn on_lattice(value: f64, resolution: f64) -> bool {
    let k = (value / resolution).round();
    (value - k * resolution).abs() < GRID_EPS
}

/// Thigh and shin lengths of one morphology, on the design lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegLengths {
    thigh_m: f64,
    shin_m: f64,
}

impl LegLengths {
    /// Validates against the default design space ([0.2, 0.4] m at 0.01 m).
    pub fn new(thigh_m: f64, shin_m: f64) -> Result<Self> {
        Self::new_in(&DesignSpace::default(), thigh_m, shin_m)
    }

    pub fn new_in(space: &DesignSpace, thigh_m: f64, shin_m: f64) -> Result<Self> {
        let check = |name: &str, v: f64, (lo, hi): (f64, f64)| -> Result<f64> {
            if !v.is_finite() || v < lo - GRID_EPS || v > hi + GRID_EPS {
                return Err(Error::Domain(format!(
                    "{name} length {v} m outside [{lo}, {hi}]"
                )));
            }
            if !on_lattice(v, space.resolution) {
                return Err(Error::Domain(format!(
                    "{name} length {v} m is not a multiple of {} m",
                    space.resolution
                )));
            }
            Ok(space.snap(v))
        };
        Ok(Self {
            thigh_m: check("thigh", thigh_m, space.thigh_range)?,
            shin_m: check("shin", shin_m, space.shin_range)?,
        })
    }

    pub fn thigh_m(&self) -> f64 {
        self.thigh_m
    }

    pub fn shin_m(&self) -> f64 {
        self.shin_m
    }

    /// Fully extended leg length (thigh + shin).
    pub fn leg_m(&self) -> f64 {
        self.thigh_m + self.shin_m
    }
}

impl std::fmt::Display for LegLengths {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(thigh {:.2} m, shin {:.2} m)", self.thigh_m, self.shin_m)
    }
}

/// A rigid rod. `inertia` is taken about the proximal end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub mass: f64,
    pub inertia: f64,
    pub length: f64,
}

impl Link {
    /// Uniform rod of the given mass and length.
    pub fn rod(mass: f64, length: f64) -> Self {
        Self {
            mass,
            inertia: mass * length * length / 3.0,
            length,
        }
    }

    /// Moment of inertia about the centre of mass.
    pub fn inertia_com(&self) -> f64 {
        self.inertia - self.mass * 0.25 * self.length * self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TorsoSpec {
    pub mass: f64,
    pub length: f64,
}

impl Default for TorsoSpec {
    fn default() -> Self {
        Self {
            mass: 6.0,
            length: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimit {
    pub lower: f64,
    pub upper: f64,
    pub velocity: f64,
    pub torque: f64,
}

impl JointLimit {
    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.lower, self.upper)
    }
}

/// Limits for the two joint types; both legs share them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointLimits {
    pub hip: JointLimit,
    pub knee: JointLimit,
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            hip: JointLimit {
                lower: -1.5,
                upper: 1.5,
                velocity: 21.0,
                torque: 33.5,
            },
            knee: JointLimit {
                lower: -1.5,
                upper: 1.5,
                velocity: 14.0,
                torque: 50.25,
            },
        }
    }
}

/// Number of actuated joints, ordered [hip L, knee L, hip R, knee R].
pub const NUM_JOINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegLinks {
    pub thigh: Link,
    pub shin: Link,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerModel {
    pub lengths: LegLengths,
    pub density: f64,
    pub torso: Link,
    /// Index 0 is the left leg.
    pub legs: [LegLinks; 2],
    pub joints: [JointLimit; NUM_JOINTS],
    pub total_mass: f64,
    pub gravity: f64,
}

pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Builds the rigid-body model for a morphology.
///
/// Leg links are uniform rods with mass `density * length`, so any length
/// increase raises both mass and inertia.
pub fn build_walker(
    lengths: LegLengths,
    density: f64,
    torso: TorsoSpec,
    limits: JointLimits,
) -> Result<WalkerModel> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::Domain(format!("density must be positive, got {density}")));
    }
    if !(torso.mass > 0.0 && torso.length > 0.0) {
        return Err(Error::Domain("torso mass and length must be positive".into()));
    }
    for (name, l) in [("hip", limits.hip), ("knee", limits.knee)] {
        if !(l.torque > 0.0 && l.velocity > 0.0 && l.lower < l.upper) {
            return Err(Error::Domain(format!("invalid {name} joint limits {l:?}")));
        }
    }
    let thigh = Link::rod(density * lengths.thigh_m(), lengths.thigh_m());
    let shin = Link::rod(density * lengths.shin_m(), lengths.shin_m());
    let torso_link = Link::rod(torso.mass, torso.length);
    let leg = LegLinks { thigh, shin };
    let total_mass = torso_link.mass + 2.0 * (thigh.mass + shin.mass);
    Ok(WalkerModel {
        lengths,
        density,
        torso: torso_link,
        legs: [leg, leg],
        joints: [limits.hip, limits.knee, limits.hip, limits.knee],
        total_mass,
        gravity: DEFAULT_GRAVITY,
    })
}

impl WalkerModel {
    /// Copy with the torso mass shifted by `offset` kg (domain randomization).
    pub fn with_torso_mass_offset(&self, offset: f64) -> Result<Self> {
        let mass = self.torso.mass + offset;
        if !(mass > 0.0) {
            return Err(Error::Domain(format!("torso mass would become {mass} kg")));
        }
        let mut out = self.clone();
        out.torso = Link::rod(mass, self.torso.length);
        out.total_mass += offset;
        Ok(out)
    }

    pub fn weight(&self) -> f64 {
        self.total_mass * self.gravity
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walker(t: f64, s: f64, density: f64) -> WalkerModel {
        build_walker(
            LegLengths::new(t, s).unwrap(),
            density,
            TorsoSpec::default(),
            JointLimits::default(),
        )
        .unwrap()
    }

    #[test]
    fn thigh_rod_properties() {
        let m = walker(0.3, 0.3, 2.0);
        assert!((m.legs[0].thigh.mass - 0.6).abs() < 1e-12);
        assert!((m.legs[0].thigh.inertia - 0.018).abs() < 1e-12);
        assert!((m.total_mass - 8.4).abs() < 1e-12);
    }

    #[test]
    fn optimized_lengths_build() {
        let m = walker(0.31, 0.36, 2.0);
        assert_eq!(m.lengths.thigh_m(), 0.31);
        assert_eq!(m.lengths.shin_m(), 0.36);
        assert!(m.joints.iter().all(|j| j.torque > 0.0));
    }

    #[test]
    fn doubling_shin_scales_mass_and_inertia() {
        let a = walker(0.3, 0.2, 2.0);
        let b = walker(0.3, 0.4, 2.0);
        let (sa, sb) = (a.legs[0].shin, b.legs[0].shin);
        assert!((sb.mass / sa.mass - 2.0).abs() < 1e-12);
        assert!((sb.inertia / sa.inertia - 8.0).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_lengths_rejected() {
        assert!(matches!(LegLengths::new(0.19, 0.3), Err(Error::Domain(_))));
        assert!(matches!(LegLengths::new(0.3, 0.41), Err(Error::Domain(_))));
        assert!(matches!(LegLengths::new(0.305, 0.3), Err(Error::Domain(_))));
        assert!(LegLengths::new(0.2, 0.4).is_ok());
    }

    #[test]
    fn total_mass_strictly_increasing() {
        let space = DesignSpace::default();
        let grid = space.lattice(space.thigh_range);
        for w in grid.windows(2) {
            assert!(walker(w[1], 0.3, 2.0).total_mass > walker(w[0], 0.3, 2.0).total_mass);
            assert!(walker(0.3, w[1], 2.0).total_mass > walker(0.3, w[0], 2.0).total_mass);
        }
    }

    #[test]
    fn build_is_deterministic() {
        assert_eq!(walker(0.27, 0.33, 2.0), walker(0.27, 0.33, 2.0));
    }

    #[test]
    fn bad_density_rejected() {
        let l = LegLengths::new(0.3, 0.3).unwrap();
        assert!(build_walker(l, 0.0, TorsoSpec::default(), JointLimits::default()).is_err());
    }
}
