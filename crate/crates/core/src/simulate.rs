//! Monte Carlo runs of the two-stage mechanism and the matching exact
//! grid sums.

use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::MechanismConfig;
use crate::dist::{expected_max, expected_second};
use crate::error::{Error, Result};
use crate::fees::FeeSchedule;
use crate::potential::{curves, expected_cost};
use crate::profile::StrategyProfile;

/// Stage-1 profile and fees under a second-price stage 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub profile: StrategyProfile,
    /// `fees[i][t]`: fee of bidder `i` at type index `t`.
    pub fees: Vec<Vec<f64>>,
}

impl Mechanism {
    pub fn new(profile: StrategyProfile, fees: Vec<Vec<f64>>) -> Result<Self> {
        if fees.len() != profile.n() || fees.iter().any(|f| f.len() != profile.map(0).len()) {
            return Err(Error::Config("fee table does not match the profile".into()));
        }
        Ok(Self { profile, fees })
    }

    /// Every bidder pays `schedule(s)` whatever her cost scale.
    pub fn with_center_fees(
        profile: StrategyProfile,
        cfg: &MechanismConfig,
        schedule: &FeeSchedule,
    ) -> Result<Self> {
        let row: Vec<f64> = cfg.type_grid.cells().map(|c| schedule.fees[c.si]).collect();
        Self::new(profile.clone(), vec![row; profile.n()])
    }

    pub fn zero_fees(profile: StrategyProfile) -> Self {
        let t = profile.map(0).len();
        let fees = vec![vec![0.0; t]; profile.n()];
        Self { profile, fees }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSummary {
    pub stage2_revenue: f64,
    pub fee_revenue: f64,
    pub revenue: f64,
    pub surplus: f64,
    pub info_cost: f64,
    pub welfare: f64,
    /// Expected net payoff per bidder.
    pub rents: Vec<f64>,
    pub total_rent: f64,
}

pub fn analytic_summary(mech: &Mechanism, cfg: &MechanismConfig) -> Result<AnalyticSummary> {
    let tg = &cfg.type_grid;
    let pts = cfg.value_grid.points();
    let mixtures = mech.profile.mixtures(tg)?;
    let cs = curves(&mech.profile, cfg)?;
    let surplus = expected_max(pts, &mixtures);
    let stage2_revenue = expected_second(pts, &mixtures);
    let mut fee_revenue = 0.0;
    let mut info_cost = 0.0;
    let mut rents = Vec::with_capacity(mech.profile.n());
    for i in 0..mech.profile.n() {
        let fee: f64 = tg.cells().map(|c| c.weight * mech.fees[i][c.index]).sum();
        let cost = expected_cost(&mech.profile, cfg, i)?;
        let gross: f64 = mixtures[i].iter().zip(&cs[i].pi).map(|(g, p)| g * p).sum();
        fee_revenue += fee;
        info_cost += cost;
        rents.push(gross - cost - fee);
    }
    Ok(AnalyticSummary {
        stage2_revenue,
        fee_revenue,
        revenue: stage2_revenue + fee_revenue,
        surplus,
        info_cost,
        welfare: surplus - info_cost,
        total_rent: rents.iter().sum(),
        rents,
    })
}

/// One simulated auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: u64,
    /// Type index per bidder; the registered experiment is the profile's
    /// entry at that index.
    pub types: Vec<usize>,
    pub fees: Vec<f64>,
    /// Realized value index per bidder.
    pub values: Vec<usize>,
    pub winner: usize,
    pub price: f64,
    pub surplus: f64,
    pub info_cost: f64,
    pub revenue: f64,
    /// Sum of realized net bidder payoffs.
    pub rents: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_samples(xs: impl Iterator<Item = f64> + Clone) -> Self {
        let n = xs.clone().count() as f64;
        let mean = xs.clone().sum::<f64>() / n;
        let var = if n > 1.0 {
            xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            se: (var / n).sqrt(),
        }
    }

    /// `|mean - target| <= k se`, with an absolute floor for zero-variance runs.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se + 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub runs: usize,
    pub seed: u64,
    pub revenue: Estimate,
    pub welfare: Estimate,
    pub rents: Estimate,
    pub surplus: Estimate,
    pub info_cost: Estimate,
}

struct Samplers {
    types: WeightedIndex<f64>,
    /// `values[i][t]`
    values: Vec<Vec<WeightedIndex<f64>>>,
    /// `costs[i][t]`
    costs: Vec<Vec<f64>>,
}

fn samplers(mech: &Mechanism, cfg: &MechanismConfig) -> Result<Samplers> {
    let tg = &cfg.type_grid;
    let weights: Vec<f64> = tg.cells().map(|c| c.weight).collect();
    let types = WeightedIndex::new(&weights)
        .map_err(|e| Error::Domain(format!("type weights: {e}")))?;
    let mut values = Vec::new();
    let mut costs = Vec::new();
    for i in 0..mech.profile.n() {
        let mut vi = Vec::new();
        let mut ci = Vec::new();
        for c in tg.cells() {
            let f = mech.profile.experiment(i, c.index);
            let mass: Vec<f64> = f.mass().iter().map(|m| m.max(0.0)).collect();
            vi.push(
                WeightedIndex::new(&mass)
                    .map_err(|e| Error::Domain(format!("experiment of bidder {i}: {e}")))?,
            );
            ci.push(cfg.cost_model.cost(&cfg.value_grid, c.r, c.s, f)?);
        }
        values.push(vi);
        costs.push(ci);
    }
    Ok(Samplers {
        types,
        values,
        costs,
    })
}

/// RNG of auction `index`: an independent stream of the batch seed.
pub fn auction_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn simulate_one(mech: &Mechanism, cfg: &MechanismConfig, s: &Samplers, seed: u64, index: u64) -> RunRecord {
    let n = mech.profile.n();
    let z = cfg.value_grid.points();
    let mut rng = auction_rng(seed, index);
    let types: Vec<usize> = (0..n).map(|_| s.types.sample(&mut rng)).collect();
    let values: Vec<usize> = (0..n).map(|i| s.values[i][types[i]].sample(&mut rng)).collect();
    let top = *values.iter().max().expect("n >= 2");
    let tied: Vec<usize> = (0..n).filter(|&i| values[i] == top).collect();
    let winner = tied[rng.gen_range(0..tied.len())];
    let price = (0..n)
        .filter(|&i| i != winner)
        .map(|i| z[values[i]])
        .fold(f64::NEG_INFINITY, f64::max);
    let fees: Vec<f64> = (0..n).map(|i| mech.fees[i][types[i]]).collect();
    let info_cost: f64 = (0..n).map(|i| s.costs[i][types[i]]).sum();
    let fee_sum: f64 = fees.iter().sum();
    let surplus = z[top];
    RunRecord {
        index,
        revenue: price + fee_sum,
        rents: (surplus - price) - info_cost - fee_sum,
        types,
        fees,
        values,
        winner,
        price,
        surplus,
        info_cost,
    }
}

/// Records of auctions `0..n_runs`, in index order whatever the thread count.
pub fn simulate_records(
    mech: &Mechanism,
    cfg: &MechanismConfig,
    n_runs: usize,
    seed: u64,
) -> Result<Vec<RunRecord>> {
    if n_runs == 0 {
        return Err(Error::Domain("n_runs must be positive".into()));
    }
    mech.profile.validate(&cfg.value_grid, &cfg.type_grid, cfg.tolerances.mean)?;
    let s = samplers(mech, cfg)?;
    Ok((0..n_runs as u64)
        .into_par_iter()
        .map(|k| simulate_one(mech, cfg, &s, seed, k))
        .collect())
}

pub fn summarize(records: &[RunRecord], seed: u64) -> BatchSummary {
    let welfare = records.iter().map(|r| r.surplus - r.info_cost);
    BatchSummary {
        runs: records.len(),
        seed,
        revenue: Estimate::from_samples(records.iter().map(|r| r.revenue)),
        welfare: Estimate::from_samples(welfare),
        rents: Estimate::from_samples(records.iter().map(|r| r.rents)),
        surplus: Estimate::from_samples(records.iter().map(|r| r.surplus)),
        info_cost: Estimate::from_samples(records.iter().map(|r| r.info_cost)),
    }
}

pub fn run_batch(
    mech: &Mechanism,
    cfg: &MechanismConfig,
    n_runs: usize,
    seed: u64,
) -> Result<BatchSummary> {
    Ok(summarize(&simulate_records(mech, cfg, n_runs, seed)?, seed))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Writes records as CSV, vector fields joined with `;`.
pub fn write_records<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "index", "types", "fees", "values", "winner", "price", "surplus", "info_cost", "revenue",
        "rents",
    ])?;
    for r in records {
        w.write_record([
            r.index.to_string(),
            join(&r.types),
            join(&r.fees),
            join(&r.values),
            r.winner.to_string(),
            r.price.to_string(),
            r.surplus.to_string(),
            r.info_cost.to_string(),
            r.revenue.to_string(),
            r.rents.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::Experiment;

    #[test]
    fn top_point_masses_pay_b() {
        let cfg = MechanismConfig::desk(2);
        let b = Experiment::delta(&cfg.value_grid, 4);
        // every type plays delta_b; only the s = 1 types are centered there
        let cfg = MechanismConfig::new(
            2,
            cfg.value_grid.clone(),
            crate::grid::TypeGrid::uniform(vec![0.0, 1.0], vec![1.0]).unwrap(),
            cfg.cost_model.clone(),
        )
        .unwrap();
        let mech = Mechanism::zero_fees(StrategyProfile::symmetric(vec![b; 2], 2));
        let sum = run_batch(&mech, &cfg, 500, 7).unwrap();
        assert_eq!(sum.revenue.mean, 2.0);
        assert_eq!(sum.revenue.se, 0.0);
    }

    #[test]
    fn zero_runs_rejected() {
        let cfg = MechanismConfig::desk(2);
        let map = crate::potential::initial_map(&cfg).unwrap();
        let mech = Mechanism::zero_fees(StrategyProfile::symmetric(map, 2));
        assert!(matches!(run_batch(&mech, &cfg, 0, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn replay_is_deterministic() {
        let cfg = MechanismConfig::desk(3);
        let eq = crate::potential::solve_equilibrium(&cfg).unwrap();
        let mech = Mechanism::zero_fees(eq.profile);
        let a = simulate_records(&mech, &cfg, 2000, 11).unwrap();
        let b = simulate_records(&mech, &cfg, 2000, 11).unwrap();
        assert_eq!(a, b);
        for r in &a {
            let w = r.surplus - r.info_cost;
            assert!((w - r.revenue - r.rents).abs() < 1e-12);
        }
    }
}
