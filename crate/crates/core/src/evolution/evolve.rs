//! The generational loop with resumable state.

use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate_population, FitnessEvaluator};
use super::genome::{decode_genome, MorphologyGenome};
use super::operators::{convergence_check, crossover, mutate, population_variance, roulette_select, shifted_fitness};
use crate::env::{make_fair_ledger, SeedLedger};
use crate::error::{Error, Result};
use crate::rl::PolicyParams;
use crate::rng::{stream, tag};
use crate::sim::{DesignSpace, LegLengths};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvoHyper {
    pub population_size: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    /// Maximum number of generations.
    pub generations: usize,
    /// Policy iterations per individual per generation.
    pub iterations_per_evolution: usize,
    pub fitness_epsilon: f64,
    /// Stop once the population reward variance drops below this.
    pub convergence_threshold: f64,
    /// Best individuals copied unchanged into the next generation.
    pub elitism: usize,
    /// Train one shared policy before evolving and start every individual from it.
    pub warm_start: bool,
    pub pretrain_iterations: usize,
    pub pretrain_resample_every: usize,
    /// Train repeated morphologies once per generation.
    pub reuse_identical: bool,
}

impl Default for EvoHyper {
    fn default() -> Self {
        Self {
            population_size: 250,
            crossover_prob: 0.8,
            mutation_prob: 0.03,
            generations: 50,
            iterations_per_evolution: 10,
            fitness_epsilon: 0.01,
            convergence_threshold: 0.0,
            elitism: 1,
            warm_start: true,
            pretrain_iterations: 500,
            pretrain_resample_every: 10,
            reuse_identical: true,
        }
    }
}

impl EvoHyper {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::config("evolution.population_size", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(Error::config("evolution.crossover_prob", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(Error::config("evolution.mutation_prob", "must lie in [0, 1]"));
        }
        if self.generations == 0 {
            return Err(Error::config("evolution.generations", "must be >= 1"));
        }
        if self.iterations_per_evolution == 0 {
            return Err(Error::config("evolution.iterations_per_evolution", "must be >= 1"));
        }
        if !(self.fitness_epsilon > 0.0 && self.fitness_epsilon.is_finite()) {
            return Err(Error::config("evolution.fitness_epsilon", "must be > 0"));
        }
        if !(self.convergence_threshold >= 0.0) {
            return Err(Error::config("evolution.convergence_threshold", "must be >= 0"));
        }
        if self.elitism > self.population_size {
            return Err(Error::config("evolution.elitism", "cannot exceed the population size"));
        }
        if self.pretrain_resample_every == 0 {
            return Err(Error::config("evolution.pretrain_resample_every", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    pub genome: MorphologyGenome,
    pub thigh_m: f64,
    pub shin_m: f64,
    pub total_reward: f64,
    pub shifted_fitness: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub individuals: Vec<IndividualRecord>,
    pub mean_reward: f64,
    pub reward_variance: f64,
    pub max_fitness: f64,
    pub best_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestIndividual {
    pub genome: MorphologyGenome,
    pub thigh_m: f64,
    pub shin_m: f64,
    pub total_reward: f64,
    pub generation: usize,
}

/// Everything needed to continue an evolution run from a generation boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub master_seed: u64,
    /// Index of the next generation to evaluate.
    pub next_generation: usize,
    pub population: Vec<MorphologyGenome>,
    pub history: Vec<GenerationRecord>,
    pub best: Option<BestIndividual>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub best: BestIndividual,
    /// Best individual's reward re-measured under the last generation's ledger.
    pub final_ledger_reward: f64,
    pub final_ledger: SeedLedger,
    pub params: Option<PolicyParams>,
    pub history: Vec<GenerationRecord>,
}

impl EvolutionState {
    pub fn new(hyper: &EvoHyper, master_seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut rng = stream(master_seed, &[tag("ga-init")]);
        Ok(Self {
            master_seed,
            next_generation: 0,
            population: (0..hyper.population_size)
                .map(|_| MorphologyGenome::random(&mut rng))
                .collect(),
            history: Vec::new(),
            best: None,
            converged: false,
        })
    }

    /// Whether no further generation should run.
    pub fn finished(&self, hyper: &EvoHyper) -> bool {
        self.converged || self.next_generation >= hyper.generations
    }

    /// Evaluates the current population, records it and breeds the next one.
    pub fn run_generation(
        &mut self,
        evaluator: &dyn FitnessEvaluator,
        hyper: &EvoHyper,
        space: &DesignSpace,
    ) -> Result<&GenerationRecord> {
        if self.finished(hyper) {
            return Err(Error::Domain("evolution already finished".into()));
        }
        let g = self.next_generation;
        let ledger = make_fair_ledger(g as u64, self.master_seed);
        let lengths = self
            .population
            .iter()
            .map(|x| decode_genome(x, space))
            .collect::<Result<Vec<LegLengths>>>()?;
        let outcomes = evaluate_population(&lengths, evaluator, &ledger, hyper.reuse_identical)?;
        let rewards: Vec<f64> = outcomes.iter().map(|o| o.total_reward).collect();
        let fitness = shifted_fitness(&rewards, hyper.fitness_epsilon)?;
        let mut best_index = 0;
        for (i, r) in rewards.iter().enumerate() {
            if *r > rewards[best_index] {
                best_index = i;
            }
        }
        let record = GenerationRecord {
            generation: g,
            individuals: self
                .population
                .iter()
                .zip(&lengths)
                .zip(outcomes.iter().zip(&fitness))
                .map(|((genome, l), (o, f))| IndividualRecord {
                    genome: genome.clone(),
                    thigh_m: l.thigh_m(),
                    shin_m: l.shin_m(),
                    total_reward: o.total_reward,
                    shifted_fitness: *f,
                    failed: o.failure.is_some(),
                })
                .collect(),
            mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
            reward_variance: population_variance(&rewards),
            max_fitness: fitness.iter().copied().fold(f64::MIN, f64::max),
            best_index,
        };
        if self.best.as_ref().is_none_or(|b| rewards[best_index] > b.total_reward) {
            self.best = Some(BestIndividual {
                genome: self.population[best_index].clone(),
                thigh_m: lengths[best_index].thigh_m(),
                shin_m: lengths[best_index].shin_m(),
                total_reward: rewards[best_index],
                generation: g,
            });
        }
        self.next_generation = g + 1;
        self.converged = convergence_check(&rewards, hyper.convergence_threshold, self.next_generation, hyper.generations);
        if !self.converged {
            self.population = breed(&self.population, &rewards, &fitness, hyper, self.master_seed, g)?;
        }
        self.history.push(record);
        Ok(self.history.last().expect("just pushed"))
    }
}

fn breed(
    population: &[MorphologyGenome],
    rewards: &[f64],
    fitness: &[f64],
    hyper: &EvoHyper,
    master_seed: u64,
    generation: usize,
) -> Result<Vec<MorphologyGenome>> {
    let mut rng = stream(master_seed, &[tag("ga-breed"), generation as u64]);
    let n = hyper.population_size;
    let mut order: Vec<usize> = (0..population.len()).collect();
    // Stable sort keeps the earliest index first among equal rewards.
    order.sort_by(|&a, &b| rewards[b].total_cmp(&rewards[a]));
    let mut next: Vec<MorphologyGenome> = order.iter().take(hyper.elitism).map(|&i| population[i].clone()).collect();
    let needed = n - next.len();
    let parents = roulette_select(fitness, needed + needed % 2, &mut rng)?;
    for pair in parents.chunks(2) {
        let (a, b) = crossover(&population[pair[0]], &population[pair[1]], hyper.crossover_prob, &mut rng);
        for child in [a, b] {
            let child = mutate(&child, hyper.mutation_prob, &mut rng);
            if next.len() < n {
                next.push(child);
            }
        }
    }
    Ok(next)
}

/// Runs generations until the cap, convergence or `stop_after` more
/// generations. `on_generation` sees each finished generation together with
/// the state that would resume after it.
pub fn evolve(
    evaluator: &dyn FitnessEvaluator,
    hyper: &EvoHyper,
    space: &DesignSpace,
    mut state: EvolutionState,
    stop_after: Option<usize>,
    mut on_generation: impl FnMut(&GenerationRecord, &EvolutionState) -> Result<()>,
) -> Result<EvolutionState> {
    hyper.validate()?;
    space.validate()?;
    let mut ran = 0;
    while !state.finished(hyper) && stop_after.is_none_or(|k| ran < k) {
        let record = state.run_generation(evaluator, hyper, space)?.clone();
        on_generation(&record, &state)?;
        ran += 1;
    }
    Ok(state)
}

/// Re-measures the best individual under the last generation's ledger and
/// packages the result.
pub fn finalize(state: &EvolutionState, evaluator: &dyn FitnessEvaluator, space: &DesignSpace) -> Result<EvolutionResult> {
    let best = state
        .best
        .clone()
        .ok_or_else(|| Error::Domain("no generation has been evaluated".into()))?;
    let last = state.next_generation.saturating_sub(1) as u64;
    let ledger = make_fair_ledger(last, state.master_seed);
    let lengths = decode_genome(&best.genome, space)?;
    let eval = evaluator.evaluate(&lengths, &ledger)?;
    Ok(EvolutionResult {
        best,
        final_ledger_reward: eval.total_reward,
        final_ledger: ledger,
        params: eval.params,
        history: state.history.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::SyntheticEvaluator;

    fn small() -> EvoHyper {
        EvoHyper {
            population_size: 8,
            generations: 4,
            ..EvoHyper::default()
        }
    }

    #[test]
    fn single_generation() {
        let hyper = EvoHyper { generations: 1, ..small() };
        let eval = SyntheticEvaluator { optimum: (0.31, 0.36) };
        let st = evolve(&eval, &hyper, &DesignSpace::default(), EvolutionState::new(&hyper, 1).unwrap(), None, |_, _| Ok(()))
            .unwrap();
        assert_eq!(st.history.len(), 1);
        let h = &st.history[0];
        assert_eq!(st.best.as_ref().unwrap().total_reward, h.individuals[h.best_index].total_reward);
    }

    #[test]
    fn best_is_global_max_and_elite_survives() {
        let hyper = small();
        let eval = SyntheticEvaluator { optimum: (0.31, 0.36) };
        let st = evolve(&eval, &hyper, &DesignSpace::default(), EvolutionState::new(&hyper, 3).unwrap(), None, |_, _| Ok(()))
            .unwrap();
        assert_eq!(st.history.len(), 4);
        let max = st
            .history
            .iter()
            .flat_map(|g| g.individuals.iter().map(|i| i.total_reward))
            .fold(f64::MIN, f64::max);
        assert_eq!(st.best.unwrap().total_reward, max);
        // The synthetic landscape ignores the ledger, so the per-generation best never drops.
        for w in st.history.windows(2) {
            let a = w[0].individuals[w[0].best_index].total_reward;
            let b = w[1].individuals[w[1].best_index].total_reward;
            assert!(b >= a);
        }
        for g in &st.history {
            assert_eq!(g.individuals.len(), 8);
            let min = g.individuals.iter().map(|i| i.shifted_fitness).fold(f64::MAX, f64::min);
            assert_eq!(min, 0.01);
        }
    }

    #[test]
    fn split_run_equals_full_run() {
        let hyper = small();
        let eval = SyntheticEvaluator { optimum: (0.31, 0.36) };
        let sp = DesignSpace::default();
        let full = evolve(&eval, &hyper, &sp, EvolutionState::new(&hyper, 5).unwrap(), None, |_, _| Ok(())).unwrap();
        let half = evolve(&eval, &hyper, &sp, EvolutionState::new(&hyper, 5).unwrap(), Some(2), |_, _| Ok(())).unwrap();
        assert_eq!(half.history.len(), 2);
        let resumed = evolve(&eval, &hyper, &sp, half, None, |_, _| Ok(())).unwrap();
        assert_eq!(resumed, full);
    }

    #[test]
    fn converges_on_zero_variance() {
        let hyper = EvoHyper {
            population_size: 1,
            generations: 10,
            convergence_threshold: 1e-12,
            ..EvoHyper::default()
        };
        let eval = SyntheticEvaluator { optimum: (0.31, 0.36) };
        let st = evolve(&eval, &hyper, &DesignSpace::default(), EvolutionState::new(&hyper, 0).unwrap(), None, |_, _| Ok(()))
            .unwrap();
        assert!(st.converged);
        assert_eq!(st.history.len(), 1);
        assert_eq!(st.history[0].individuals[0].shifted_fitness, 0.01);
    }
}
