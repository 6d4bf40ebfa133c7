//! Information processing costs `c_{r,s}(f) = r * sum_j k(|z_j - anchor|) f_j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::Experiment;
use crate::grid::ValueGrid;

/// Convex nondecreasing kernel with `k(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `scale * x^exponent`, `exponent >= 1`.
    Power { exponent: f64, scale: f64 },
    /// Piecewise-linear through `(x, y)`; the last slope extends past the table.
    Table { x: Vec<f64>, y: Vec<f64> },
}

impl Kernel {
    pub fn quadratic() -> Self {
        Kernel::Power {
            exponent: 2.0,
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Power { exponent, scale } => {
                if !(*exponent >= 1.0) || !exponent.is_finite() {
                    return Err(Error::Config(format!(
                        "kernel exponent must be >= 1, got {exponent}"
                    )));
                }
                if !(*scale >= 0.0) || !scale.is_finite() {
                    return Err(Error::Config(format!(
                        "kernel scale must be >= 0, got {scale}"
                    )));
                }
            }
            Kernel::Table { x, y } => {
                if x.len() < 2 || x.len() != y.len() {
                    return Err(Error::Config(
                        "kernel table needs matching x/y with at least 2 points".into(),
                    ));
                }
                if x[0] != 0.0 || y[0] != 0.0 {
                    return Err(Error::Config("kernel table must start at (0, 0)".into()));
                }
                if x.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config("kernel table x must increase".into()));
                }
                let slopes: Vec<f64> = (1..x.len())
                    .map(|i| (y[i] - y[i - 1]) / (x[i] - x[i - 1]))
                    .collect();
                if slopes.iter().any(|s| *s < 0.0) {
                    return Err(Error::Config("kernel table must be nondecreasing".into()));
                }
                if slopes.windows(2).any(|w| w[1] < w[0] - 1e-12) {
                    return Err(Error::Config("kernel table must be convex".into()));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.abs();
        match self {
            Kernel::Power { exponent, scale } => {
                if x == 0.0 {
                    0.0
                } else {
                    scale * x.powf(*exponent)
                }
            }
            Kernel::Table { x: xs, y: ys } => {
                let n = xs.len();
                let i = xs[1..n - 1].partition_point(|&p| p <= x) + 1;
                let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }
}

/// Where the cost kernel is centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// Distance to the type's own mean value `z_s`.
    #[default]
    Report,
    /// Distance to the experiment's realized mean `mu(f)`.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub kernel: Kernel,
    #[serde(default)]
    pub anchor: Anchor,
}

impl CostModel {
    pub fn new(kernel: Kernel, anchor: Anchor) -> Result<Self> {
        kernel.validate()?;
        Ok(Self { kernel, anchor })
    }

    /// Quadratic kernel anchored at the type's mean value.
    pub fn quadratic() -> Self {
        Self {
            kernel: Kernel::quadratic(),
            anchor: Anchor::Report,
        }
    }

    /// Anchor point for a type with own mean `z_s` running an experiment
    /// centered at `center`.
    pub fn anchor_point(&self, z_s: f64, center: f64) -> f64 {
        match self.anchor {
            Anchor::Report => z_s,
            Anchor::Mean => center,
        }
    }

    /// Per-grid-point cost weights `r * k(|z_j - anchor|)`.
    pub fn weights(&self, grid: &ValueGrid, r: f64, anchor: f64) -> Vec<f64> {
        grid.points()
            .iter()
            .map(|&z| r * self.kernel.eval(z - anchor))
            .collect()
    }

    pub fn cost(&self, grid: &ValueGrid, r: f64, s: f64, f: &Experiment) -> Result<f64> {
        f.check_grid(grid)?;
        if r == 0.0 {
            return Ok(0.0);
        }
        let anchor = self.anchor_point(grid.center(s), f.mean(grid));
        Ok(grid
            .points()
            .iter()
            .zip(f.mass())
            .map(|(&z, &m)| if m == 0.0 { 0.0 } else { m * self.kernel.eval(z - anchor) })
            .sum::<f64>()
            * r)
    }
}
