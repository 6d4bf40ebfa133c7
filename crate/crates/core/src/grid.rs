//! Value and type grids.
//!
//! Values live on a uniform grid `a = z_0 < ... < z_m = b`; bidder types
//! `(r, s)` live on a product grid with independent marginal weights.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueGrid {
    a: f64,
    b: f64,
    points: Vec<f64>,
}

impl ValueGrid {
    /// Uniform grid over `[a, b]` with `intervals` cells (`intervals + 1` points).
    pub fn new(a: f64, b: f64, intervals: usize) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Config(format!("lower value bound must be > 0, got {a}")));
        }
        if !(b > a) || !b.is_finite() {
            return Err(Error::Config(format!("upper value bound must exceed {a}, got {b}")));
        }
        if intervals < 2 {
            return Err(Error::Config(format!(
                "value grid needs at least 2 intervals, got {intervals}"
            )));
        }
        let step = (b - a) / intervals as f64;
        let mut points: Vec<f64> = (0..=intervals).map(|j| a + step * j as f64).collect();
        points[intervals] = b;
        Ok(Self { a, b, points })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Number of grid points (`m + 1`).
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn z(&self, j: usize) -> f64 {
        self.points[j]
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    /// The declared mean `z_alpha = a + alpha (b - a)`.
    pub fn center(&self, alpha: f64) -> f64 {
        self.a + alpha * (self.b - self.a)
    }

    /// Index of the grid point equal to `z` within `tol`, if any.
    pub fn index_of(&self, z: f64, tol: f64) -> Option<usize> {
        self.points.iter().position(|&p| (p - z).abs() <= tol)
    }
}

/// How marginal type weights are produced from grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum WeightSpec {
    #[default]
    Uniform,
    /// Beta(alpha, beta) mass of the cell around each point.
    Beta { alpha: f64, beta: f64 },
    Custom(Vec<f64>),
}


impl WeightSpec {
    pub fn discretize(&self, points: &[f64]) -> Result<Vec<f64>> {
        let n = points.len();
        match self {
            WeightSpec::Uniform => Ok(vec![1.0 / n as f64; n]),
            WeightSpec::Custom(w) => {
                if w.len() != n {
                    return Err(Error::Config(format!(
                        "custom weights have {} entries for {n} points",
                        w.len()
                    )));
                }
                Ok(w.clone())
            }
            WeightSpec::Beta { alpha, beta } => {
                let dist = Beta::new(*alpha, *beta)
                    .map_err(|e| Error::Config(format!("beta weights: {e}")))?;
                let mut w = Vec::with_capacity(n);
                for i in 0..n {
                    let lo = if i == 0 { 0.0 } else { 0.5 * (points[i - 1] + points[i]) };
                    let hi = if i + 1 == n { 1.0 } else { 0.5 * (points[i] + points[i + 1]) };
                    w.push((dist.cdf(hi) - dist.cdf(lo)).max(0.0));
                }
                let total: f64 = w.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::Config("beta weights carry no mass".into()));
                }
                Ok(w.into_iter().map(|x| x / total).collect())
            }
        }
    }
}

/// One cell of the product type grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeCell {
    pub index: usize,
    pub ri: usize,
    pub si: usize,
    pub r: f64,
    pub s: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeGrid {
    r_points: Vec<f64>,
    s_points: Vec<f64>,
    r_weights: Vec<f64>,
    s_weights: Vec<f64>,
}

impl TypeGrid {
    pub fn new(
        r_points: Vec<f64>,
        r_weights: Vec<f64>,
        s_points: Vec<f64>,
        s_weights: Vec<f64>,
    ) -> Result<Self> {
        check_axis("r", &r_points, &r_weights)?;
        check_axis("s", &s_points, &s_weights)?;
        Ok(Self {
            r_points,
            s_points,
            r_weights,
            s_weights,
        })
    }

    pub fn uniform(r_points: Vec<f64>, s_points: Vec<f64>) -> Result<Self> {
        let rw = WeightSpec::Uniform.discretize(&r_points)?;
        let sw = WeightSpec::Uniform.discretize(&s_points)?;
        Self::new(r_points, rw, s_points, sw)
    }

    pub fn r_points(&self) -> &[f64] {
        &self.r_points
    }

    pub fn s_points(&self) -> &[f64] {
        &self.s_points
    }

    pub fn r_weights(&self) -> &[f64] {
        &self.r_weights
    }

    pub fn s_weights(&self) -> &[f64] {
        &self.s_weights
    }

    pub fn n_r(&self) -> usize {
        self.r_points.len()
    }

    pub fn n_s(&self) -> usize {
        self.s_points.len()
    }

    /// Number of `(r, s)` cells.
    pub fn len(&self) -> usize {
        self.n_r() * self.n_s()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ri: usize, si: usize) -> usize {
        ri * self.n_s() + si
    }

    pub fn cell(&self, index: usize) -> TypeCell {
        let ri = index / self.n_s();
        let si = index % self.n_s();
        TypeCell {
            index,
            ri,
            si,
            r: self.r_points[ri],
            s: self.s_points[si],
            weight: self.r_weights[ri] * self.s_weights[si],
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = TypeCell> + '_ {
        (0..self.len()).map(move |i| self.cell(i))
    }

    /// Index of the highest cost scale on the grid.
    pub fn top_r(&self) -> usize {
        self.n_r() - 1
    }

    /// The fee bound is taken at `r = 1` and the center grid must span the
    /// value interval, so both endpoints are required.
    pub fn require_endpoints(&self) -> Result<()> {
        if (self.r_points[self.top_r()] - 1.0).abs() > 1e-12 {
            return Err(Error::Config(
                "r grid must contain the top cost scale 1.0".into(),
            ));
        }
        for end in [0.0, 1.0] {
            if !self.s_points.iter().any(|&s| (s - end).abs() <= 1e-12) {
                return Err(Error::Config(format!("s grid must contain {end:.1}")));
            }
        }
        Ok(())
    }
}

fn check_axis(name: &str, points: &[f64], weights: &[f64]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Config(format!("{name} grid is empty")));
    }
    if points.len() != weights.len() {
        return Err(Error::Config(format!(
            "{name} grid has {} points but {} weights",
            points.len(),
            weights.len()
        )));
    }
    if points.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Config(format!("{name} grid points must lie in [0, 1]")));
    }
    if points.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("{name} grid must be strictly increasing")));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Config(format!("{name} weights must be nonnegative")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::Config(format!(
            "{name} weights sum to {total}, expected 1"
        )));
    }
    Ok(())
}
