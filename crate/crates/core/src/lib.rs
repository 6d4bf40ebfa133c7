//! Optimal two-stage auctions when bidders learn their values at a cost.
//!
//! Stage 1: each bidder reports a type `(r, s)` (cost scale and mean value),
//! pays a fee, and registers an experiment centered at her mean value.
//! Stage 2: values are realized from the experiments and a second-price rule
//! allocates the object. Under that rule expected welfare is an exact
//! potential of the experiment game, and the revenue-maximal fee schedule is a
//! shortest-path closure of the stage-1 IR/IC constraints.

pub mod audit;
pub mod config;
pub mod cost;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod export;
pub mod fees;
pub mod grid;
pub mod potential;
pub mod profile;
pub mod simulate;
pub mod vcg;
pub mod verify;

pub use config::MechanismConfig;
pub use cost::{Anchor, CostModel, Kernel};
pub use error::{Error, Result};
pub use experiment::{make_mean_constrained, Experiment, Shape};
pub use fees::{FeeSchedule, GapTable};
pub use grid::{TypeGrid, ValueGrid, WeightSpec};
pub use potential::{solve_equilibrium, Equilibrium, PotentialReport};
pub use profile::{symmetrize, StrategyProfile};
pub use vcg::{allocate, InterimCurve, Outcome};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
