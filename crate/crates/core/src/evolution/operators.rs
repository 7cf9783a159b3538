//! Fitness shaping, selection and variation operators.

use rand::Rng;

use super::genome::{MorphologyGenome, GENOME_BITS};
use crate::error::{Error, Result};

/// `fitness_i = reward_i − min_j reward_j + ε`.
pub fn shifted_fitness(rewards: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::Domain("cannot shift fitness of an empty population".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("fitness shift must be > 0, got {epsilon}")));
    }
    if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(Error::Domain(format!("non-finite reward {r}")));
    }
    let min = rewards.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(rewards.iter().map(|r| r - min + epsilon).collect())
}

/// `count` indices drawn i.i.d. with probability proportional to fitness.
pub fn roulette_select(fitness: &[f64], count: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if fitness.is_empty() || fitness.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
        return Err(Error::Domain("roulette selection needs positive finite fitness".into()));
    }
    let mut cumulative = Vec::with_capacity(fitness.len());
    let mut acc = 0.0;
    for f in fitness {
        acc += f;
        cumulative.push(acc);
    }
    Ok((0..count)
        .map(|_| {
            let u = rng.gen::<f64>() * acc;
            cumulative.partition_point(|&c| c <= u).min(fitness.len() - 1)
        })
        .collect())
}

/// Single-point crossover at `cut`: children swap every bit from `cut` on.
pub fn crossover_at(a: &MorphologyGenome, b: &MorphologyGenome, cut: usize) -> (MorphologyGenome, MorphologyGenome) {
    let mut ca = a.bits()[..cut].to_vec();
    ca.extend_from_slice(&b.bits()[cut..]);
    let mut cb = b.bits()[..cut].to_vec();
    cb.extend_from_slice(&a.bits()[cut..]);
    (
        MorphologyGenome::new(ca).expect("crossover preserves length"),
        MorphologyGenome::new(cb).expect("crossover preserves length"),
    )
}

/// With probability `p_c`, crossover at a cut drawn uniformly from
/// `[1, GENOME_BITS − 1]`; otherwise copies of the parents.
pub fn crossover(
    a: &MorphologyGenome,
    b: &MorphologyGenome,
    p_c: f64,
    rng: &mut impl Rng,
) -> (MorphologyGenome, MorphologyGenome) {
    if rng.gen::<f64>() < p_c {
        let cut = rng.gen_range(1..GENOME_BITS);
        crossover_at(a, b, cut)
    } else {
        (a.clone(), b.clone())
    }
}

/// Flips every bit independently with probability `p_m`.
pub fn mutate(g: &MorphologyGenome, p_m: f64, rng: &mut impl Rng) -> MorphologyGenome {
    let bits = g.bits().iter().map(|&b| if rng.gen::<f64>() < p_m { !b } else { b }).collect();
    MorphologyGenome::new(bits).expect("mutation preserves length")
}

/// Population variance (divide by n).
pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// True when the latest rewards' variance is below `threshold` or the
/// generation cap has been reached.
pub fn convergence_check(latest_rewards: &[f64], threshold: f64, generations_done: usize, max_generations: usize) -> bool {
    generations_done >= max_generations || population_variance(latest_rewards) < threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fitness_examples() {
        let f = shifted_fitness(&[5.0, 3.0, 9.0], 0.01).unwrap();
        assert_eq!(f, vec![2.01, 0.01, 6.01]);
        assert_eq!(shifted_fitness(&[4.0; 3], 0.01).unwrap(), vec![0.01; 3]);
        assert!(shifted_fitness(&[], 0.01).is_err());
        assert_eq!(shifted_fitness(&[-7.0], 0.01).unwrap(), vec![0.01]);
    }

    #[test]
    fn crossover_semantics() {
        let a = MorphologyGenome::from_genes(0b111111111, 0b000000000);
        let b = MorphologyGenome::from_genes(0b000000000, 0b111111111);
        let (ca, cb) = crossover_at(&a, &b, 9);
        assert_eq!(ca.genes(), (511, 511));
        assert_eq!(cb.genes(), (0, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (x, y) = crossover(&a, &b, 0.0, &mut rng);
        assert_eq!((x, y), (a, b));
    }

    #[test]
    fn mutation_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = MorphologyGenome::from_genes(123, 456);
        assert_eq!(mutate(&g, 0.0, &mut rng), g);
        let flipped = mutate(&g, 1.0, &mut rng);
        assert!(flipped.bits().iter().zip(g.bits()).all(|(a, b)| a != b));
    }

    #[test]
    fn convergence_examples() {
        assert!(convergence_check(&[2.0, 2.0], 1e-9, 1, 10));
        assert_eq!(population_variance(&[1.0, 3.0]), 1.0);
        assert!(!convergence_check(&[1.0, 3.0], 0.5, 1, 10));
        assert!(convergence_check(&[1.0, 3.0], 0.5, 10, 10));
    }

    proptest! {
        #[test]
        fn fitness_is_shift_invariant(r in prop::collection::vec(-1e3f64..1e3, 1..40), c in -1e3f64..1e3) {
            let f = shifted_fitness(&r, 0.01).unwrap();
            let shifted: Vec<f64> = r.iter().map(|x| x + c).collect();
            let g = shifted_fitness(&shifted, 0.01).unwrap();
            let min = f.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(min, 0.01);
            for (a, b) in f.iter().zip(&g) {
                prop_assert!((a - b).abs() < 1e-9);
                prop_assert!(*a >= 0.01);
            }
        }

        #[test]
        fn crossover_exchanges_bits(ga in 0u16..512, sa in 0u16..512, gb in 0u16..512, sb in 0u16..512, seed in any::<u64>()) {
            let a = MorphologyGenome::from_genes(ga, sa);
            let b = MorphologyGenome::from_genes(gb, sb);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (ca, cb) = crossover(&a, &b, 1.0, &mut rng);
            for j in 0..GENOME_BITS {
                let mut parents = [a.bits()[j], b.bits()[j]];
                let mut kids = [ca.bits()[j], cb.bits()[j]];
                parents.sort();
                kids.sort();
                prop_assert_eq!(parents, kids);
            }
        }

        #[test]
        fn selection_returns_valid_indices(f in prop::collection::vec(0.01f64..10.0, 1..20), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idx = roulette_select(&f, 50, &mut rng).unwrap();
            prop_assert!(idx.iter().all(|&i| i < f.len()));
        }
    }
}
