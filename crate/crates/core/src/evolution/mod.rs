//! Genetic search over leg lengths with trained-policy fitness.

pub mod evaluate;
pub mod evolve;
pub mod genome;
pub mod operators;

pub use evaluate::{evaluate_population, Evaluation, FitnessEvaluator, IndividualOutcome, RlEvaluator, SyntheticEvaluator};
pub use evolve::{
    evolve, finalize, BestIndividual, EvoHyper, EvolutionResult, EvolutionState, GenerationRecord, IndividualRecord,
};
pub use genome::{decode_gene, decode_genome, encode_lengths, MorphologyGenome, GENE_BITS, GENE_MAX, GENOME_BITS};
pub use operators::{
    convergence_check, crossover, crossover_at, mutate, population_variance, roulette_select, shifted_fitness,
};
