//! Exhaustive evaluation of the design grid.

use serde::{Deserialize, Serialize};

use crate::env::SeedLedger;
use crate::error::{Error, Result};
use crate::evolution::{evaluate_population, FitnessEvaluator};
use crate::sim::{DesignSpace, LegLengths};
use crate::table::{num, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub thigh: Vec<f64>,
    pub shin: Vec<f64>,
}

impl SweepGrid {
    /// Lattice points from each range's lower end in steps of `spacing`,
    /// always including the upper end.
    pub fn from_space(space: &DesignSpace, spacing: f64) -> Result<Self> {
        space.validate()?;
        let k = (spacing / space.resolution).round();
        if !(k >= 1.0) || (k * space.resolution - spacing).abs() > 1e-9 {
            return Err(Error::config(
                "sweep.spacing",
                format!("{spacing} is not a positive multiple of the resolution {}", space.resolution),
            ));
        }
        let axis = |range: (f64, f64)| {
            let all = space.lattice(range);
            let mut pts: Vec<f64> = all.iter().step_by(k as usize).copied().collect();
            if pts.last() != all.last() {
                pts.push(*all.last().expect("validated range is non-empty"));
            }
            pts
        };
        Ok(Self {
            thigh: axis(space.thigh_range),
            shin: axis(space.shin_range),
        })
    }

    /// Explicit axes; every value must lie on the design lattice.
    pub fn from_axes(space: &DesignSpace, thigh: Vec<f64>, shin: Vec<f64>) -> Result<Self> {
        if thigh.is_empty() || shin.is_empty() {
            return Err(Error::config("sweep.thigh", "both sweep axes need at least one value"));
        }
        let g = Self { thigh, shin };
        g.cells(space)?;
        Ok(g)
    }

    /// Cells in thigh-major order.
    pub fn cells(&self, space: &DesignSpace) -> Result<Vec<LegLengths>> {
        let mut out = Vec::with_capacity(self.thigh.len() * self.shin.len());
        for &t in &self.thigh {
            for &s in &self.shin {
                out.push(LegLengths::new_in(space, t, s)?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub thigh_m: f64,
    pub shin_m: f64,
    pub reward: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSurface {
    pub grid: SweepGrid,
    /// Policy iterations each cell was trained for.
    pub iterations_per_cell: usize,
    pub ledger: SeedLedger,
    /// Thigh-major, matching `grid`.
    pub cells: Vec<SurfaceCell>,
    pub argmax: usize,
}

/// Index of the best reward; ties go to the smaller thigh, then the smaller shin.
pub fn argmax_cell(cells: &[SurfaceCell]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let o = &cells[b];
                let better = c.reward > o.reward
                    || (c.reward == o.reward
                        && (c.thigh_m < o.thigh_m || (c.thigh_m == o.thigh_m && c.shin_m < o.shin_m)));
                Some(if better { i } else { b })
            }
        };
    }
    best
}

/// Evaluates every grid cell under one ledger. Cells are independent and
/// keyed by position, so the result does not depend on evaluation order.
pub fn grid_sweep(
    grid: &SweepGrid,
    space: &DesignSpace,
    evaluator: &dyn FitnessEvaluator,
    ledger: &SeedLedger,
    iterations_per_cell: usize,
) -> Result<RewardSurface> {
    let lengths = grid.cells(space)?;
    if lengths.is_empty() {
        return Err(Error::Domain("empty sweep grid".into()));
    }
    let outcomes = evaluate_population(&lengths, evaluator, ledger, false)?;
    let cells: Vec<SurfaceCell> = lengths
        .iter()
        .zip(outcomes)
        .map(|(l, o)| SurfaceCell {
            thigh_m: l.thigh_m(),
            shin_m: l.shin_m(),
            reward: o.total_reward,
            failed: o.failure.is_some(),
        })
        .collect();
    let argmax = argmax_cell(&cells).expect("non-empty");
    Ok(RewardSurface {
        grid: grid.clone(),
        iterations_per_cell,
        ledger: *ledger,
        cells,
        argmax,
    })
}

pub const SURFACE_CSV_HEADER: [&str; 4] = ["thigh_m", "shin_m", "reward", "failed"];

impl RewardSurface {
    pub fn best(&self) -> &SurfaceCell {
        &self.cells[self.argmax]
    }

    /// Cell rewards sorted from best to worst.
    pub fn ranked_rewards(&self) -> Vec<f64> {
        let mut r: Vec<f64> = self.cells.iter().map(|c| c.reward).collect();
        r.sort_by(|a, b| b.total_cmp(a));
        r
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&SURFACE_CSV_HEADER);
        for c in &self.cells {
            t.push(vec![num(c.thigh_m), num(c.shin_m), num(c.reward), (c.failed as u8).to_string()]);
        }
        t
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Codec(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_fair_ledger;
    use crate::evolution::SyntheticEvaluator;

    fn cell(t: f64, s: f64, r: f64) -> SurfaceCell {
        SurfaceCell { thigh_m: t, shin_m: s, reward: r, failed: false }
    }

    #[test]
    fn tie_break() {
        let cells = [cell(0.3, 0.3, 1.0), cell(0.25, 0.4, 1.0), cell(0.25, 0.3, 1.0), cell(0.2, 0.2, 0.5)];
        assert_eq!(argmax_cell(&cells), Some(2));
    }

    #[test]
    fn default_desk_grid_is_four_by_four() {
        let sp = DesignSpace::default();
        let g = SweepGrid::from_space(&sp, 0.05).unwrap();
        assert_eq!(g.thigh.len(), 5);
        let g = SweepGrid::from_space(&sp, 0.2 / 3.0);
        assert!(g.is_err());
        let full = SweepGrid::from_space(&sp, 0.01).unwrap();
        assert_eq!(full.cells(&sp).unwrap().len(), 441);
    }

    #[test]
    fn synthetic_argmax_is_nearest_lattice_point() {
        let sp = DesignSpace::default();
        let grid = SweepGrid {
            thigh: vec![0.25, 0.3, 0.35, 0.4, 0.2],
            shin: vec![0.25, 0.3, 0.35, 0.4, 0.2],
        };
        let s = grid_sweep(&grid, &sp, &SyntheticEvaluator { optimum: (0.31, 0.36) }, &make_fair_ledger(0, 0), 1).unwrap();
        assert_eq!(s.cells.len(), 25);
        assert_eq!((s.best().thigh_m, s.best().shin_m), (sp.snap(0.3), sp.snap(0.35)));
        assert_eq!(s.to_table().len(), 25);
    }
}
