//! Experiments: probability vectors over the value grid with a declared center.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ValueGrid;

pub const MASS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    mass: Vec<f64>,
    center: f64,
}

/// Shape requested from [`make_mean_constrained`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Point mass at the center, or the bracketing two-point mixture when
    /// the center is off-grid.
    Degenerate,
    /// Two-point mixture of `a` and `b`.
    Extreme,
    /// Two-point mixture on the given grid indices.
    Pair { lo: usize, hi: usize },
}

impl Experiment {
    /// Builds an experiment and records its declared center; the mean
    /// constraint is checked separately by [`Experiment::validate`].
    pub fn new(mass: Vec<f64>, center: f64) -> Self {
        Self { mass, center }
    }

    pub fn delta(grid: &ValueGrid, j: usize) -> Self {
        let mut mass = vec![0.0; grid.len()];
        mass[j] = 1.0;
        Self {
            mass,
            center: grid.z(j),
        }
    }

    /// Mixture of two grid points with mean `center`. `lo == hi` gives a point mass.
    pub fn two_point(grid: &ValueGrid, lo: usize, hi: usize, center: f64) -> Self {
        let mut mass = vec![0.0; grid.len()];
        if lo == hi {
            mass[lo] = 1.0;
        } else {
            let (zl, zh) = (grid.z(lo), grid.z(hi));
            let w_hi = ((center - zl) / (zh - zl)).clamp(0.0, 1.0);
            mass[lo] = 1.0 - w_hi;
            mass[hi] += w_hi;
        }
        Self { mass, center }
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mean(&self, grid: &ValueGrid) -> f64 {
        self.mass.iter().zip(grid.points()).map(|(m, z)| m * z).sum()
    }

    /// Expectation of a per-grid-point quantity.
    pub fn expect(&self, values: &[f64]) -> f64 {
        self.mass.iter().zip(values).map(|(m, v)| m * v).sum()
    }

    /// Indices carrying positive mass.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(j, _)| j)
    }

    pub fn check_grid(&self, grid: &ValueGrid) -> Result<()> {
        if self.mass.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                got: self.mass.len(),
            });
        }
        Ok(())
    }

    /// Probability-vector and mean-constraint check.
    pub fn validate(&self, grid: &ValueGrid, mean_tol: f64) -> Result<()> {
        self.check_grid(grid)?;
        if self.mass.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::Domain("experiment has negative mass".into()));
        }
        let total: f64 = self.mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Domain(format!("experiment mass sums to {total}")));
        }
        let mean = self.mean(grid);
        if (mean - self.center).abs() > mean_tol {
            return Err(Error::Domain(format!(
                "experiment mean {mean} differs from center {}",
                self.center
            )));
        }
        Ok(())
    }

    /// `(1 - lambda) * self + lambda * other`; both must share a center for
    /// the result to stay in the same mean class.
    pub fn blend(&self, other: &Experiment, lambda: f64) -> Experiment {
        let mass = self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
            .collect();
        Experiment {
            mass,
            center: (1.0 - lambda) * self.center + lambda * other.center,
        }
    }

    /// Pointwise average of experiments.
    pub fn average<'a>(items: impl IntoIterator<Item = &'a Experiment>) -> Option<Experiment> {
        let mut it = items.into_iter();
        let first = it.next()?;
        let mut mass = first.mass.clone();
        let mut center = first.center;
        let mut count = 1usize;
        for e in it {
            for (m, x) in mass.iter_mut().zip(&e.mass) {
                *m += x;
            }
            center += e.center;
            count += 1;
        }
        let k = count as f64;
        mass.iter_mut().for_each(|m| *m /= k);
        Some(Experiment {
            mass,
            center: center / k,
        })
    }
}

/// Vertices of the mean-constrained simplex: the point mass at the center
/// when it is a grid point, and every straddling pair.
pub fn vertex_experiments(grid: &ValueGrid, center: f64, tol: f64) -> Vec<Experiment> {
    let z = grid.points();
    let mut out = Vec::new();
    if let Some(j) = grid.index_of(center, tol) {
        out.push(Experiment::delta(grid, j));
    }
    for lo in (0..z.len()).filter(|&l| z[l] < center - tol) {
        for hi in (0..z.len()).filter(|&h| z[h] > center + tol) {
            out.push(Experiment::two_point(grid, lo, hi, center));
        }
    }
    out
}

/// Experiment with center `z_alpha` of the requested shape.
pub fn make_mean_constrained(
    grid: &ValueGrid,
    alpha: f64,
    shape: Shape,
    mean_tol: f64,
) -> Result<Experiment> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let c = grid.center(alpha);
    let last = grid.len() - 1;
    let f = match shape {
        Shape::Degenerate => match grid.index_of(c, mean_tol) {
            Some(j) => Experiment::two_point(grid, j, j, c),
            None => {
                let hi = grid.points().iter().position(|&z| z > c).unwrap_or(last);
                Experiment::two_point(grid, hi - 1, hi, c)
            }
        },
        Shape::Extreme => {
            if let Some(j) = [0, last].into_iter().find(|&j| (grid.z(j) - c).abs() <= mean_tol) {
                Experiment::two_point(grid, j, j, c)
            } else {
                Experiment::two_point(grid, 0, last, c)
            }
        }
        Shape::Pair { lo, hi } => {
            if lo > hi || hi > last {
                return Err(Error::Domain(format!("invalid support pair ({lo}, {hi})")));
            }
            let (zl, zh) = (grid.z(lo), grid.z(hi));
            if c < zl - mean_tol || c > zh + mean_tol || (lo == hi && (c - zl).abs() > mean_tol) {
                return Err(Error::Infeasible(format!(
                    "center {c} outside support [{zl}, {zh}]"
                )));
            }
            Experiment::two_point(grid, lo, hi, c)
        }
    };
    f.validate(grid, mean_tol)
        .map_err(|e| Error::Infeasible(e.to_string()))?;
    Ok(f)
}
