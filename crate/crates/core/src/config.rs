//! Mechanism configuration and its JSON file schema.

use serde::{Deserialize, Serialize};

use crate::audit::AuditCurve;
use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::grid::{TypeGrid, ValueGrid, WeightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub mean: f64,
    pub solver: f64,
    pub fee: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mean: 1e-9,
            solver: 1e-12,
            fee: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditCosts {
    pub experiment: AuditCurve,
    pub cost: AuditCurve,
}

impl Default for AuditCosts {
    fn default() -> Self {
        Self {
            experiment: AuditCurve::linear(0.05),
            cost: AuditCurve::linear(0.05),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub n: usize,
    pub value_grid: ValueGrid,
    pub type_grid: TypeGrid,
    pub cost_model: CostModel,
    pub tolerances: Tolerances,
    pub max_iters: usize,
    pub seed: u64,
    /// Per-bidder maximal punishment `P_i <= 0`.
    pub punishment: Vec<f64>,
    pub audit_costs: AuditCosts,
    pub runs: usize,
}

impl MechanismConfig {
    pub fn new(
        n: usize,
        value_grid: ValueGrid,
        type_grid: TypeGrid,
        cost_model: CostModel,
    ) -> Result<Self> {
        let cfg = Self {
            n,
            value_grid,
            type_grid,
            cost_model,
            tolerances: Tolerances::default(),
            max_iters: 1000,
            seed: 0,
            punishment: vec![-1.0; n],
            audit_costs: AuditCosts::default(),
            runs: 100_000,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The desk-scale reference instance: values on `[1, 2]` with four
    /// cells, a uniform 3x3 type grid and quadratic costs.
    pub fn desk(n: usize) -> Self {
        Self::new(
            n,
            ValueGrid::new(1.0, 2.0, 4).expect("static grid"),
            TypeGrid::uniform(vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 1.0]).expect("static grid"),
            CostModel::quadratic(),
        )
        .expect("static config")
    }

    pub fn with_punishment(mut self, p: f64) -> Result<Self> {
        self.punishment = vec![p; self.n];
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("n >= 2 required, got {}", self.n)));
        }
        let t = &self.tolerances;
        if !(t.mean > 0.0 && t.solver > 0.0 && t.fee > 0.0) {
            return Err(Error::Config("all tolerances must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if self.punishment.len() != self.n {
            return Err(Error::Config(format!(
                "punishment has {} entries for {} bidders",
                self.punishment.len(),
                self.n
            )));
        }
        if self.punishment.iter().any(|p| !(*p <= 0.0)) {
            return Err(Error::Config("punishments must satisfy P_i <= 0".into()));
        }
        self.cost_model.kernel.validate()?;
        self.audit_costs.experiment.validate()?;
        self.audit_costs.cost.validate()?;
        Ok(())
    }

    /// Parses and validates a JSON config. Errors carry the line of the
    /// offending entry.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        file.build().map_err(|(key, e)| {
            let line = key_line(text, key).unwrap_or(1);
            Error::Config(format!("line {line}: {}", strip_prefix(&e)))
        })
    }

    pub fn to_file(&self) -> ConfigFile {
        ConfigFile {
            n: self.n,
            values: ValuesSection {
                a: self.value_grid.a(),
                b: self.value_grid.b(),
                intervals: self.value_grid.len() - 1,
            },
            types: TypesSection {
                r_points: self.type_grid.r_points().to_vec(),
                s_points: self.type_grid.s_points().to_vec(),
                r_weights: WeightSpec::Custom(self.type_grid.r_weights().to_vec()),
                s_weights: WeightSpec::Custom(self.type_grid.s_weights().to_vec()),
            },
            cost: self.cost_model.clone(),
            tolerances: self.tolerances,
            solver: SolverSection {
                max_iters: self.max_iters,
            },
            seed: self.seed,
            punishment: Punishment::PerBidder(self.punishment.clone()),
            audit_costs: self.audit_costs.clone(),
            simulation: SimulationSection { runs: self.runs },
        }
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}

/// Line (1-based) of the first occurrence of `"key"` in `text`.
fn key_line(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuesSection {
    pub a: f64,
    pub b: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypesSection {
    pub r_points: Vec<f64>,
    pub s_points: Vec<f64>,
    #[serde(default)]
    pub r_weights: WeightSpec,
    #[serde(default)]
    pub s_weights: WeightSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub max_iters: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { max_iters: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub runs: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { runs: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Punishment {
    Uniform(f64),
    PerBidder(Vec<f64>),
}

impl Default for Punishment {
    fn default() -> Self {
        Punishment::Uniform(-1.0)
    }
}

/// On-disk configuration layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n: usize,
    pub values: ValuesSection,
    pub types: TypesSection,
    #[serde(default = "CostModel::quadratic")]
    pub cost: CostModel,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub punishment: Punishment,
    #[serde(default)]
    pub audit_costs: AuditCosts,
    #[serde(default)]
    pub simulation: SimulationSection,
}

impl ConfigFile {
    /// Validates the file contents; on failure returns the key to anchor the
    /// error message at.
    fn build(self) -> std::result::Result<MechanismConfig, (&'static str, Error)> {
        if self.n < 2 {
            return Err(("n", Error::Config(format!("n >= 2 required, got {}", self.n))));
        }
        let value_grid = ValueGrid::new(self.values.a, self.values.b, self.values.intervals)
            .map_err(|e| ("values", e))?;
        let t = self.types;
        let rw = t.r_weights.discretize(&t.r_points).map_err(|e| ("r_weights", e))?;
        let sw = t.s_weights.discretize(&t.s_points).map_err(|e| ("s_weights", e))?;
        let type_grid =
            TypeGrid::new(t.r_points, rw, t.s_points, sw).map_err(|e| ("types", e))?;
        type_grid.require_endpoints().map_err(|e| {
            let key = if e.to_string().contains("r grid") { "r_points" } else { "s_points" };
            (key, e)
        })?;
        self.cost.kernel.validate().map_err(|e| ("cost", e))?;
        let punishment = match self.punishment {
            Punishment::Uniform(p) => vec![p; self.n],
            Punishment::PerBidder(v) => v,
        };
        let cfg = MechanismConfig {
            n: self.n,
            value_grid,
            type_grid,
            cost_model: self.cost,
            tolerances: self.tolerances,
            max_iters: self.solver.max_iters,
            seed: self.seed,
            punishment,
            audit_costs: self.audit_costs,
            runs: self.simulation.runs,
        };
        cfg.validate().map_err(|e| {
            let msg = e.to_string();
            let key = if msg.contains("toleranc") {
                "tolerances"
            } else if msg.contains("punish") {
                "punishment"
            } else if msg.contains("max_iters") {
                "max_iters"
            } else {
                "audit_costs"
            };
            (key, e)
        })?;
        Ok(cfg)
    }
}
