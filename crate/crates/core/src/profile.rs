//! Stage-1 strategy profiles: per bidder, a map from grid types to experiments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::Experiment;
use crate::grid::{TypeGrid, ValueGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    /// `maps[i][t]` is bidder `i`'s experiment at type index `t`.
    maps: Vec<Vec<Experiment>>,
}

impl StrategyProfile {
    pub fn new(maps: Vec<Vec<Experiment>>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::Config("profile has no bidders".into()));
        }
        let t = maps[0].len();
        if maps.iter().any(|m| m.len() != t) {
            return Err(Error::Config("profile maps cover different type grids".into()));
        }
        Ok(Self { maps })
    }

    /// Every bidder uses the same map.
    pub fn symmetric(map: Vec<Experiment>, n: usize) -> Self {
        Self {
            maps: vec![map; n],
        }
    }

    pub fn n(&self) -> usize {
        self.maps.len()
    }

    pub fn map(&self, i: usize) -> &[Experiment] {
        &self.maps[i]
    }

    pub fn maps(&self) -> &[Vec<Experiment>] {
        &self.maps
    }

    pub fn experiment(&self, i: usize, t: usize) -> &Experiment {
        &self.maps[i][t]
    }

    pub fn set_map(&mut self, i: usize, map: Vec<Experiment>) {
        self.maps[i] = map;
    }

    pub fn is_symmetric(&self) -> bool {
        self.maps.windows(2).all(|w| w[0] == w[1])
    }

    /// Profile with bidders reordered: bidder `k` takes the map of `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            maps: perm.iter().map(|&k| self.maps[k].clone()).collect(),
        }
    }

    /// Completeness and mean-constraint check: the experiment at type `(r, s)`
    /// must be centered at `z_s`.
    pub fn validate(&self, grid: &ValueGrid, types: &TypeGrid, mean_tol: f64) -> Result<()> {
        for (i, map) in self.maps.iter().enumerate() {
            if map.len() != types.len() {
                return Err(Error::Config(format!(
                    "bidder {i} assigns {} types, grid has {}",
                    map.len(),
                    types.len()
                )));
            }
            for cell in types.cells() {
                let f = &map[cell.index];
                f.validate(grid, mean_tol)
                    .map_err(|e| Error::Config(format!("bidder {i}, type {}: {e}", cell.index)))?;
                if (f.center() - grid.center(cell.s)).abs() > mean_tol {
                    return Err(Error::Config(format!(
                        "bidder {i}, type {}: center {} differs from z_s = {}",
                        cell.index,
                        f.center(),
                        grid.center(cell.s)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Type-marginalized value density of bidder `i`.
    pub fn mixture(&self, i: usize, types: &TypeGrid) -> Result<Vec<f64>> {
        let map = &self.maps[i];
        if map.len() != types.len() {
            return Err(Error::Config(format!(
                "bidder {i} has no assignment for some grid types"
            )));
        }
        let len = map.first().map(|f| f.len()).unwrap_or(0);
        let mut g = vec![0.0; len];
        for cell in types.cells() {
            for (acc, m) in g.iter_mut().zip(map[cell.index].mass()) {
                *acc += cell.weight * m;
            }
        }
        Ok(g)
    }

    pub fn mixtures(&self, types: &TypeGrid) -> Result<Vec<Vec<f64>>> {
        (0..self.n()).map(|i| self.mixture(i, types)).collect()
    }
}

/// Per-type average of the bidders' maps.
pub fn symmetrize(profile: &StrategyProfile) -> StrategyProfile {
    let types = profile.maps[0].len();
    let map: Vec<Experiment> = (0..types)
        .map(|t| {
            Experiment::average(profile.maps.iter().map(|m| &m[t])).expect("at least one bidder")
        })
        .collect();
    StrategyProfile::symmetric(map, profile.n())
}
