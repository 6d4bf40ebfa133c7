use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: experiment has {got} points, grid has {expected}")]
    GridMismatch { expected: usize, got: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A cycle of misreport gaps with negative total weight: no fee schedule
    /// satisfies the incentive constraints and fee extraction is unbounded.
    #[error("unbounded fee extraction: negative gap cycle through node {node}")]
    NegativeCycle { node: usize },

    #[error("no deviation class: the center grid has a single point")]
    NoDeviationClass,

    #[error("infeasible mechanism: {0}")]
    InfeasibleMechanism(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
