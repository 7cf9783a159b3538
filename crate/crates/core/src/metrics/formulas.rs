//! Locomotion efficiency metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean velocities at or below this are treated as standing still.
pub const MIN_TRANSPORT_VELOCITY: f64 = 0.05;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `mean(P) / (m · g · mean(v))`.
pub fn cost_of_transport(power_trace: &[f64], mass: f64, velocity_trace: &[f64], g: f64) -> Result<f64> {
    if power_trace.is_empty() || velocity_trace.is_empty() {
        return Err(Error::MetricUndefined("cost of transport needs non-empty traces".into()));
    }
    if !(mass > 0.0 && g > 0.0) {
        return Err(Error::Domain(format!("mass and gravity must be positive, got m={mass} g={g}")));
    }
    let v = mean(velocity_trace);
    if !(v > MIN_TRANSPORT_VELOCITY) {
        return Err(Error::MetricUndefined(format!(
            "mean velocity {v} m/s is not above {MIN_TRANSPORT_VELOCITY} m/s"
        )));
    }
    let cot = mean(power_trace) / (mass * g * v);
    if !(cot >= 0.0 && cot.is_finite()) {
        return Err(Error::MetricUndefined(format!("cost of transport evaluated to {cot}")));
    }
    Ok(cot)
}

/// `v² / (g · l)`.
pub fn froude_number(v: f64, leg_length: f64, g: f64) -> Result<f64> {
    if !(leg_length > 0.0) {
        return Err(Error::Domain(format!("leg length must be positive, got {leg_length}")));
    }
    if !(g > 0.0) {
        return Err(Error::Domain(format!("gravity must be positive, got {g}")));
    }
    Ok(v * v / (g * leg_length))
}

/// Efficiency summary of one trajectory. `cot` is NaN when the trajectory
/// did not move far enough for it to be defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub mean_power: f64,
    pub mass: f64,
    pub mean_velocity: f64,
    pub cot: f64,
    pub froude: f64,
    pub leg_length: f64,
}

impl MetricsRecord {
    pub fn from_traces(power: &[f64], velocity: &[f64], mass: f64, leg_length: f64, g: f64) -> Result<Self> {
        if power.is_empty() || velocity.is_empty() {
            return Err(Error::Domain("metrics need at least one sample".into()));
        }
        let mean_velocity = mean(velocity);
        let cot = match cost_of_transport(power, mass, velocity, g) {
            Ok(c) => c,
            Err(Error::MetricUndefined(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        Ok(Self {
            mean_power: mean(power),
            mass,
            mean_velocity,
            cot,
            froude: froude_number(mean_velocity, leg_length, g)?,
            leg_length,
        })
    }

    pub fn cot_defined(&self) -> bool {
        self.cot.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cot_example_and_scaling() {
        let c = cost_of_transport(&[100.0; 5], 10.5, &[1.0; 5], 9.81).unwrap();
        assert!((c - 100.0 / 103.005).abs() < 1e-12);
        let c2 = cost_of_transport(&[200.0; 5], 10.5, &[1.0; 5], 9.81).unwrap();
        assert!((c2 - 2.0 * c).abs() < 1e-12);
        assert!(matches!(
            cost_of_transport(&[1.0], 1.0, &[0.05], 9.81),
            Err(Error::MetricUndefined(_))
        ));
    }

    #[test]
    fn froude_examples() {
        assert!((froude_number(3.2, 1.0, 9.81).unwrap() - 1.04).abs() < 0.01);
        assert!((froude_number(1.9, 0.8, 9.81).unwrap() - 0.46).abs() < 0.01);
        assert_eq!(froude_number(0.0, 0.6, 9.81).unwrap(), 0.0);
        assert!(froude_number(1.0, 0.0, 9.81).is_err());
    }

    #[test]
    fn stationary_record_has_nan_cot() {
        let r = MetricsRecord::from_traces(&[3.0, 5.0], &[0.0, 0.02], 8.0, 0.6, 9.81).unwrap();
        assert!(!r.cot_defined());
        assert_eq!(r.mean_power, 4.0);
        assert!((r.froude - 0.01f64.powi(2) / (9.81 * 0.6)).abs() < 1e-15);
    }
}
