//! Descriptive statistics over an evolution history.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::evolution::GenerationRecord;

/// Mean, population standard deviation and extent of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub mean_reward: f64,
    pub reward_variance: f64,
    pub max_fitness: f64,
    pub thigh: Spread,
    pub shin: Spread,
    /// (bin centre in m, count) on the given lattice, ascending.
    pub thigh_histogram: Vec<(f64, usize)>,
    pub shin_histogram: Vec<(f64, usize)>,
}

/// Counts values per lattice bin of width `resolution`.
pub fn lattice_histogram(values: &[f64], resolution: f64) -> Vec<(f64, usize)> {
    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for v in values {
        *bins.entry((v / resolution).round() as i64).or_default() += 1;
    }
    bins.into_iter().map(|(k, c)| (k as f64 * resolution, c)).collect()
}

pub fn population_stats(history: &[GenerationRecord], resolution: f64) -> Vec<GenerationStats> {
    history
        .iter()
        .filter(|g| !g.individuals.is_empty())
        .map(|g| {
            let rewards: Vec<f64> = g.individuals.iter().map(|i| i.total_reward).collect();
            let thighs: Vec<f64> = g.individuals.iter().map(|i| i.thigh_m).collect();
            let shins: Vec<f64> = g.individuals.iter().map(|i| i.shin_m).collect();
            let r = Spread::of(&rewards);
            GenerationStats {
                generation: g.generation,
                mean_reward: r.mean,
                reward_variance: r.std * r.std,
                max_fitness: g.individuals.iter().map(|i| i.shifted_fitness).fold(f64::NEG_INFINITY, f64::max),
                thigh: Spread::of(&thighs),
                shin: Spread::of(&shins),
                thigh_histogram: lattice_histogram(&thighs, resolution),
                shin_histogram: lattice_histogram(&shins, resolution),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spread_examples() {
        let s = Spread::of(&[0.25, 0.35]);
        assert!((s.mean - 0.30).abs() < 1e-15);
        assert!((s.range() - 0.10).abs() < 1e-15);
        let one = Spread::of(&[0.31]);
        assert_eq!((one.mean, one.std, one.range()), (0.31, 0.0, 0.0));
    }

    #[test]
    fn histogram_partitions() {
        let h = lattice_histogram(&[0.2, 0.21, 0.2, 0.4], 0.01);
        assert_eq!(h.iter().map(|(_, c)| c).sum::<usize>(), 4);
        assert_eq!(h[0].1, 2);
        assert_eq!(h.len(), 3);
    }
}
