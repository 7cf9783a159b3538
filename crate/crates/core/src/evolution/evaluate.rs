//! Fitness evaluation of morphologies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvSetup, SeedLedger};
use crate::error::{Error, Result};
use crate::rl::{train_policy, PolicyParams, TrainHyper};
use crate::sim::{build_walker, LegLengths};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Σ of the per-iteration rewards.
    pub total_reward: f64,
    pub reward_trace: Vec<f64>,
    pub params: Option<PolicyParams>,
}

/// Scores one morphology under a generation's ledger. Implementations must
/// be pure functions of their inputs so evaluation order cannot matter.
pub trait FitnessEvaluator: Sync {
    fn evaluate(&self, lengths: &LegLengths, ledger: &SeedLedger) -> Result<Evaluation>;
}

/// Closed-form landscape `−(l_t − a)² − (l_s − b)²` for testing the GA
/// without training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEvaluator {
    pub optimum: (f64, f64),
}

impl SyntheticEvaluator {
    pub fn reward(&self, lengths: &LegLengths) -> f64 {
        let dt = lengths.thigh_m() - self.optimum.0;
        let ds = lengths.shin_m() - self.optimum.1;
        -(dt * dt) - ds * ds
    }
}

impl FitnessEvaluator for SyntheticEvaluator {
    fn evaluate(&self, lengths: &LegLengths, _ledger: &SeedLedger) -> Result<Evaluation> {
        let r = self.reward(lengths);
        Ok(Evaluation {
            total_reward: r,
            reward_trace: vec![r],
            params: None,
        })
    }
}

/// Trains a warm-started policy on the morphology for a fixed number of
/// iterations; the fitness is the summed iteration reward.
#[derive(Debug, Clone, PartialEq)]
pub struct RlEvaluator {
    pub setup: EnvSetup,
    pub hyper: TrainHyper,
    pub iterations: usize,
    pub warm_start: PolicyParams,
}

impl FitnessEvaluator for RlEvaluator {
    fn evaluate(&self, lengths: &LegLengths, ledger: &SeedLedger) -> Result<Evaluation> {
        let sim = &self.setup.sim;
        let model = build_walker(*lengths, sim.density, sim.torso, sim.limits)?;
        let out = train_policy(&model, self.warm_start.clone(), self.iterations, ledger, &self.hyper, &self.setup)?;
        Ok(Evaluation {
            total_reward: out.reward_trace.iter().sum(),
            reward_trace: out.reward_trace,
            params: Some(out.params),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualOutcome {
    pub total_reward: f64,
    pub reward_trace: Vec<f64>,
    /// Failure message when training diverged; the reward is then the floor.
    pub failure: Option<String>,
}

fn is_training_failure(e: &Error) -> bool {
    matches!(e, Error::TrainingFailure(_) | Error::SimulationDiverged { .. })
}

/// Evaluates every morphology in parallel; results are keyed by position.
/// Failed individuals get the minimum reward among the successful ones. With
/// `reuse_identical`, repeated lengths are trained once and the result
/// shared, which is exact because evaluation is deterministic.
pub fn evaluate_population(
    lengths: &[LegLengths],
    evaluator: &dyn FitnessEvaluator,
    ledger: &SeedLedger,
    reuse_identical: bool,
) -> Result<Vec<IndividualOutcome>> {
    let mut slots: Vec<usize> = (0..lengths.len()).collect();
    let mut unique: Vec<LegLengths> = Vec::new();
    if reuse_identical {
        for (i, l) in lengths.iter().enumerate() {
            match unique.iter().position(|u| u == l) {
                Some(k) => slots[i] = k,
                None => {
                    slots[i] = unique.len();
                    unique.push(*l);
                }
            }
        }
    } else {
        unique = lengths.to_vec();
    }
    let results: Vec<Result<Evaluation>> = unique.par_iter().map(|l| evaluator.evaluate(l, ledger)).collect();
    let mut outcomes = Vec::with_capacity(unique.len());
    for r in results {
        match r {
            Ok(e) => outcomes.push(IndividualOutcome {
                total_reward: e.total_reward,
                reward_trace: e.reward_trace,
                failure: None,
            }),
            Err(e) if is_training_failure(&e) => outcomes.push(IndividualOutcome {
                total_reward: f64::NAN,
                reward_trace: Vec::new(),
                failure: Some(e.to_string()),
            }),
            Err(e) => return Err(e),
        }
    }
    let floor = outcomes
        .iter()
        .filter(|o| o.failure.is_none())
        .map(|o| o.total_reward)
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() && !outcomes.is_empty() {
        return Err(Error::TrainingFailure("every individual in the generation failed".into()));
    }
    for o in &mut outcomes {
        if o.failure.is_some() {
            o.total_reward = floor;
        }
    }
    Ok(slots.into_iter().map(|k| outcomes[k].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_fair_ledger;

    struct Flaky;

    impl FitnessEvaluator for Flaky {
        fn evaluate(&self, l: &LegLengths, _: &SeedLedger) -> Result<Evaluation> {
            if l.thigh_m() > 0.35 {
                return Err(Error::TrainingFailure("diverged".into()));
            }
            Ok(Evaluation {
                total_reward: l.thigh_m() * 10.0,
                reward_trace: vec![],
                params: None,
            })
        }
    }

    #[test]
    fn failures_get_the_floor() {
        let ls = [
            LegLengths::new(0.25, 0.3).unwrap(),
            LegLengths::new(0.38, 0.3).unwrap(),
            LegLengths::new(0.3, 0.3).unwrap(),
        ];
        let out = evaluate_population(&ls, &Flaky, &make_fair_ledger(0, 0), true).unwrap();
        assert_eq!(out[1].total_reward, out[0].total_reward);
        assert!(out[1].failure.is_some());
        let all_bad = [LegLengths::new(0.38, 0.3).unwrap()];
        assert!(evaluate_population(&all_bad, &Flaky, &make_fair_ledger(0, 0), true).is_err());
    }

    #[test]
    fn synthetic_peak() {
        let s = SyntheticEvaluator { optimum: (0.31, 0.36) };
        assert_eq!(s.reward(&LegLengths::new(0.31, 0.36).unwrap()), 0.0);
        assert!(s.reward(&LegLengths::new(0.30, 0.36).unwrap()) < 0.0);
    }

    #[test]
    fn reuse_matches_independent_evaluation() {
        let s = SyntheticEvaluator { optimum: (0.31, 0.36) };
        let ls = [
            LegLengths::new(0.25, 0.3).unwrap(),
            LegLengths::new(0.3, 0.3).unwrap(),
            LegLengths::new(0.25, 0.3).unwrap(),
        ];
        let led = make_fair_ledger(2, 9);
        assert_eq!(
            evaluate_population(&ls, &s, &led, true).unwrap(),
            evaluate_population(&ls, &s, &led, false).unwrap()
        );
    }
}
