//! Bitstring encoding of leg lengths: one 9-bit unsigned gene per length,
//! most significant bit first, thigh then shin.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{DesignSpace, LegLengths};

pub const GENE_BITS: usize = 9;
pub const GENOME_BITS: usize = 2 * GENE_BITS;
pub const GENE_MAX: u16 = (1 << GENE_BITS) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MorphologyGenome {
    bits: Vec<bool>,
}

impl MorphologyGenome {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.len() != GENOME_BITS {
            return Err(Error::Codec(format!(
                "genome has {} bits, expected {GENOME_BITS}",
                bits.len()
            )));
        }
        Ok(Self { bits })
    }

    pub fn from_genes(thigh: u16, shin: u16) -> Self {
        let mut bits = Vec::with_capacity(GENOME_BITS);
        for g in [thigh, shin] {
            for k in (0..GENE_BITS).rev() {
                bits.push((g >> k) & 1 == 1);
            }
        }
        Self { bits }
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        Self {
            bits: (0..GENOME_BITS).map(|_| rng.gen::<bool>()).collect(),
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// (thigh, shin) gene integers.
    pub fn genes(&self) -> (u16, u16) {
        let read = |s: &[bool]| s.iter().fold(0u16, |acc, &b| (acc << 1) | b as u16);
        (read(&self.bits[..GENE_BITS]), read(&self.bits[GENE_BITS..]))
    }
}

impl std::fmt::Display for MorphologyGenome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for MorphologyGenome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Codec(format!("invalid genome character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(bits)
    }
}

/// Maps a gene integer linearly onto `range`, snapped to the lattice.
pub fn decode_gene(n: u16, range: (f64, f64), space: &DesignSpace) -> f64 {
    let raw = range.0 + (n.min(GENE_MAX) as f64 / GENE_MAX as f64) * (range.1 - range.0);
    space.snap(raw).clamp(space.snap(range.0), space.snap(range.1))
}

pub fn decode_genome(genome: &MorphologyGenome, space: &DesignSpace) -> Result<LegLengths> {
    if genome.bits.len() != GENOME_BITS {
        return Err(Error::Codec(format!(
            "genome has {} bits, expected {GENOME_BITS}",
            genome.bits.len()
        )));
    }
    let (t, s) = genome.genes();
    LegLengths::new_in(
        space,
        decode_gene(t, space.thigh_range, space),
        decode_gene(s, space.shin_range, space),
    )
}

fn encode_gene(value: f64, range: (f64, f64), space: &DesignSpace) -> Result<u16> {
    let guess = ((value - range.0) / (range.1 - range.0) * GENE_MAX as f64).round() as i64;
    // The linear guess can land one lattice step off after snapping; search outward.
    for d in 0..=GENE_MAX as i64 {
        for n in [guess - d, guess + d] {
            if (0..=GENE_MAX as i64).contains(&n) && decode_gene(n as u16, range, space) == space.snap(value) {
                return Ok(n as u16);
            }
        }
    }
    Err(Error::Codec(format!("no gene decodes to {value} m")))
}

/// A genome that decodes to `lengths`. Off-grid or out-of-range lengths are
/// rejected.
pub fn encode_lengths(lengths: &LegLengths, space: &DesignSpace) -> Result<MorphologyGenome> {
    let checked = LegLengths::new_in(space, lengths.thigh_m(), lengths.shin_m())
        .map_err(|e| Error::Codec(e.to_string()))?;
    Ok(MorphologyGenome::from_genes(
        encode_gene(checked.thigh_m(), space.thigh_range, space)?,
        encode_gene(checked.shin_m(), space.shin_range, space)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gene_bounds_and_midpoint() {
        let sp = DesignSpace::default();
        assert_eq!(decode_gene(0, sp.thigh_range, &sp), sp.snap(0.2));
        assert_eq!(decode_gene(511, sp.thigh_range, &sp), sp.snap(0.4));
        assert_eq!(decode_gene(256, sp.thigh_range, &sp), sp.snap(0.3));
    }

    #[test]
    fn paper_design_round_trips() {
        let sp = DesignSpace::default();
        let l = LegLengths::new(0.31, 0.36).unwrap();
        let g = encode_lengths(&l, &sp).unwrap();
        assert_eq!(decode_genome(&g, &sp).unwrap(), l);
        let lo = encode_lengths(&LegLengths::new(0.2, 0.2).unwrap(), &sp).unwrap();
        assert_eq!(lo.genes(), (0, 0));
    }

    #[test]
    fn wrong_length_is_codec_error() {
        assert!(matches!(MorphologyGenome::new(vec![true; 17]), Err(Error::Codec(_))));
        assert!("0101".parse::<MorphologyGenome>().is_err());
    }

    #[test]
    fn string_round_trip() {
        let g = MorphologyGenome::from_genes(300, 17);
        assert_eq!(g.to_string().parse::<MorphologyGenome>().unwrap(), g);
        assert_eq!(g.genes(), (300, 17));
    }
}
