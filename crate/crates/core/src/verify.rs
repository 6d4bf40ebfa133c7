//! Executable checks on tabulated two-stage mechanisms: the four
//! participation and truthfulness constraints, the switch to a second-price
//! stage 2 with compensating fees, and the optimality of the chain-closure
//! mechanism against a finite family of competitors.
//!
//! Stage-1 deviations follow menu semantics: a type reporting `t'` runs the
//! experiment the profile assigns to `t'`, pays `t'`'s fee and bears its own
//! true cost.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::MechanismConfig;
use crate::dist::{expected_max, expected_second};
use crate::error::{Error, Result};
use crate::experiment::Experiment;
pub use crate::experiment::vertex_experiments;
use crate::fees::{
    chain_closure, chain_closure_fee, random_feasible_fee, random_feasible_start, value_tables,
    FeeSchedule, GapTable,
};
use crate::grid::ValueGrid;
use crate::potential::{curve_for, initial_map, solve_equilibrium, Equilibrium};
use crate::profile::StrategyProfile;
use crate::vcg::allocate;

const MAX_PROFILES: usize = 1_000_000;
const SUPPORT_EPS: f64 = 1e-15;

/// Stage-2 rule tabulated over every bid profile on the grid. `x` is the
/// expected payment, not conditioned on winning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Table {
    pub n: usize,
    pub len: usize,
    /// `p[k * n + i]` at profile `k`
    pub p: Vec<f64>,
    pub x: Vec<f64>,
}

impl Stage2Table {
    pub fn profiles(&self) -> usize {
        self.len.pow(self.n as u32)
    }

    /// Bid indices of profile `k`, bidder 0 in the lowest digit.
    pub fn decode(&self, mut k: usize) -> Vec<usize> {
        let mut b = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            b.push(k % self.len);
            k /= self.len;
        }
        b
    }

    pub fn from_fn(
        n: usize,
        len: usize,
        f: impl Fn(&[usize]) -> (Vec<f64>, Vec<f64>),
    ) -> Result<Self> {
        let count = len
            .checked_pow(n as u32)
            .filter(|&c| c <= MAX_PROFILES)
            .ok_or_else(|| Error::Domain(format!("{len}^{n} bid profiles is too many to tabulate")))?;
        let mut t = Self {
            n,
            len,
            p: Vec::with_capacity(count * n),
            x: Vec::with_capacity(count * n),
        };
        for k in 0..count {
            let (p, x) = f(&t.decode(k));
            let total: f64 = p.iter().sum();
            if p.len() != n || x.len() != n || p.iter().any(|&v| v < -1e-12) || (total - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("allocation at profile {k} is not a distribution")));
            }
            t.p.extend(p);
            t.x.extend(x);
        }
        Ok(t)
    }

    pub fn vcg(grid: &ValueGrid, n: usize) -> Result<Self> {
        let z = grid.points();
        Self::from_fn(n, z.len(), |b| {
            let bids: Vec<f64> = b.iter().map(|&j| z[j]).collect();
            let o = allocate(&bids).expect("nonempty bids");
            let x = (0..n).map(|i| o.expected_payment(i)).collect();
            (o.win_prob, x)
        })
    }

    /// Object assigned uniformly at random, no payments.
    pub fn lottery(grid: &ValueGrid, n: usize) -> Result<Self> {
        Self::from_fn(n, grid.len(), |_| (vec![1.0 / n as f64; n], vec![0.0; n]))
    }

    /// Bidder `k` always receives the object for free.
    pub fn dictator(grid: &ValueGrid, n: usize, k: usize) -> Result<Self> {
        Self::from_fn(n, grid.len(), |_| {
            let mut p = vec![0.0; n];
            p[k] = 1.0;
            (p, vec![0.0; n])
        })
    }

    /// Highest bid wins and pays its own bid.
    pub fn first_price(grid: &ValueGrid, n: usize) -> Result<Self> {
        let z = grid.points();
        Self::from_fn(n, z.len(), |b| {
            let bids: Vec<f64> = b.iter().map(|&j| z[j]).collect();
            let o = allocate(&bids).expect("nonempty bids");
            let x = (0..n).map(|i| o.win_prob[i] * bids[i]).collect();
            (o.win_prob, x)
        })
    }

    pub fn mixture(parts: &[(f64, &Stage2Table)]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Domain("empty mixture".into()))?.1;
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if parts.iter().any(|(w, t)| *w < 0.0 || t.n != first.n || t.len != first.len)
            || (total - 1.0).abs() > 1e-12
        {
            return Err(Error::Domain("mixture weights or shapes are invalid".into()));
        }
        let mut p = vec![0.0; first.p.len()];
        let mut x = vec![0.0; first.x.len()];
        for (w, t) in parts {
            for (a, b) in p.iter_mut().zip(&t.p) {
                *a += w * b;
            }
            for (a, b) in x.iter_mut().zip(&t.x) {
                *a += w * b;
            }
        }
        Ok(Self {
            n: first.n,
            len: first.len,
            p,
            x,
        })
    }

    fn weight(&self, bids: &[usize], mixtures: &[Vec<f64>], skip: Option<usize>) -> f64 {
        bids.iter()
            .enumerate()
            .filter(|(k, _)| Some(*k) != skip)
            .map(|(k, &b)| mixtures[k][b])
            .product()
    }

    /// Interim allocation and payment of bidder `i` per own bid.
    pub fn interim(&self, i: usize, mixtures: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let mut pp = vec![0.0; self.len];
        let mut xx = vec![0.0; self.len];
        for k in 0..self.profiles() {
            let b = self.decode(k);
            let w = self.weight(&b, mixtures, Some(i));
            if w == 0.0 {
                continue;
            }
            pp[b[i]] += w * self.p[k * self.n + i];
            xx[b[i]] += w * self.x[k * self.n + i];
        }
        (pp, xx)
    }

    /// `E[sum_i p_i t_i]` and `E[sum_i x_i]` under truthful bids.
    pub fn totals(&self, grid: &ValueGrid, mixtures: &[Vec<f64>]) -> (f64, f64) {
        let z = grid.points();
        let (mut alloc, mut pay) = (0.0, 0.0);
        for k in 0..self.profiles() {
            let b = self.decode(k);
            let w = self.weight(&b, mixtures, None);
            if w == 0.0 {
                continue;
            }
            for i in 0..self.n {
                alloc += w * self.p[k * self.n + i] * z[b[i]];
                pay += w * self.x[k * self.n + i];
            }
        }
        (alloc, pay)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedMechanism {
    pub stage2: Stage2Table,
    pub profile: StrategyProfile,
    /// `fees[i][t]`
    pub fees: Vec<Vec<f64>>,
}

impl TabulatedMechanism {
    pub fn new(stage2: Stage2Table, profile: StrategyProfile, fees: Vec<Vec<f64>>) -> Result<Self> {
        if stage2.n != profile.n() || fees.len() != profile.n() {
            return Err(Error::Config("stage-2 table, profile and fees disagree on n".into()));
        }
        if fees.iter().any(|f| f.len() != profile.map(0).len()) {
            return Err(Error::Config("fee table does not cover the type grid".into()));
        }
        Ok(Self {
            stage2,
            profile,
            fees,
        })
    }

    /// Second-price stage 2 with fees depending on the reported center only.
    pub fn with_center_fees(
        cfg: &MechanismConfig,
        profile: StrategyProfile,
        schedule: &FeeSchedule,
    ) -> Result<Self> {
        let row: Vec<f64> = cfg.type_grid.cells().map(|c| schedule.fees[c.si]).collect();
        let n = profile.n();
        Self::new(Stage2Table::vcg(&cfg.value_grid, n)?, profile, vec![row; n])
    }
}

/// Per-bidder stage-2 and stage-1 payoff tables.
struct Payoffs {
    /// `u[i][t]`: truthful stage-2 payoff at value index `t`
    u: Vec<Vec<f64>>,
    /// `pp[i][b]`, `xx[i][b]`
    pp: Vec<Vec<f64>>,
    xx: Vec<Vec<f64>>,
    /// `a[i][t][t2]`: pre-fee value of type `t` reporting `t2`
    a: Vec<Vec<Vec<f64>>>,
    mixtures: Vec<Vec<f64>>,
}

fn payoffs(m: &TabulatedMechanism, cfg: &MechanismConfig) -> Result<Payoffs> {
    let tg = &cfg.type_grid;
    let z = cfg.value_grid.points();
    let mixtures = m.profile.mixtures(tg)?;
    let mut out = Payoffs {
        u: Vec::new(),
        pp: Vec::new(),
        xx: Vec::new(),
        a: Vec::new(),
        mixtures: Vec::new(),
    };
    for i in 0..m.profile.n() {
        let (pp, xx) = m.stage2.interim(i, &mixtures);
        let u: Vec<f64> = (0..z.len()).map(|t| z[t] * pp[t] - xx[t]).collect();
        let eu: Vec<f64> = m.profile.map(i).iter().map(|f| f.expect(&u)).collect();
        let mut a = vec![vec![0.0; tg.len()]; tg.len()];
        for c in tg.cells() {
            for c2 in tg.cells() {
                let f = m.profile.experiment(i, c2.index);
                a[c.index][c2.index] =
                    eu[c2.index] - cfg.cost_model.cost(&cfg.value_grid, c.r, c.s, f)?;
            }
        }
        out.u.push(u);
        out.pp.push(pp);
        out.xx.push(xx);
        out.a.push(a);
    }
    out.mixtures = mixtures;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Stage2Ir,
    Stage2Ic,
    Stage1Ir,
    Stage1Ic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub bidder: usize,
    /// Value index for stage-2 checks, type index for stage-1 checks.
    pub at: usize,
    /// Deviation target, same indexing.
    pub to: Option<usize>,
    /// Negative: by how much the constraint fails.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn count(&self, c: Constraint) -> usize {
        self.violations.iter().filter(|v| v.constraint == c).count()
    }

    pub fn passes(&self, c: Constraint) -> bool {
        self.count(c) == 0
    }
}

/// Stage-2 checks run over every value in a bidder's support against every
/// grid bid; stage-1 checks over every pair of grid types.
pub fn check_feasibility(m: &TabulatedMechanism, cfg: &MechanismConfig) -> Result<FeasibilityReport> {
    let tol = cfg.tolerances.fee;
    let z = cfg.value_grid.points();
    let pay = payoffs(m, cfg)?;
    let mut violations = Vec::new();
    let mut checked = 0;
    for i in 0..m.profile.n() {
        for t in (0..z.len()).filter(|&t| pay.mixtures[i][t] > SUPPORT_EPS) {
            let own = pay.u[i][t];
            checked += 1;
            if own < -tol {
                violations.push(Violation {
                    constraint: Constraint::Stage2Ir,
                    bidder: i,
                    at: t,
                    to: None,
                    slack: own,
                });
            }
            for b in (0..z.len()).filter(|&b| b != t) {
                checked += 1;
                let dev = z[t] * pay.pp[i][b] - pay.xx[i][b];
                if own < dev - tol {
                    violations.push(Violation {
                        constraint: Constraint::Stage2Ic,
                        bidder: i,
                        at: t,
                        to: Some(b),
                        slack: own - dev,
                    });
                }
            }
        }
        let a = &pay.a[i];
        let tau = &m.fees[i];
        for t in 0..a.len() {
            let v = a[t][t] - tau[t];
            checked += 1;
            if v < -tol {
                violations.push(Violation {
                    constraint: Constraint::Stage1Ir,
                    bidder: i,
                    at: t,
                    to: None,
                    slack: v,
                });
            }
            for t2 in (0..a.len()).filter(|&t2| t2 != t) {
                checked += 1;
                let dev = a[t][t2] - tau[t2];
                if v < dev - tol {
                    violations.push(Violation {
                        constraint: Constraint::Stage1Ic,
                        bidder: i,
                        at: t,
                        to: Some(t2),
                        slack: v - dev,
                    });
                }
            }
        }
    }
    Ok(FeasibilityReport {
        feasible: violations.is_empty(),
        checked,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismValues {
    pub revenue: f64,
    pub welfare: f64,
    /// `E[sum_i p_i t_i]`
    pub allocated_value: f64,
    pub info_cost: f64,
    /// Expected net payoff per bidder.
    pub rents: Vec<f64>,
    /// `type_values[i][t]`: net payoff of truthful type `t`.
    pub type_values: Vec<Vec<f64>>,
}

impl MechanismValues {
    pub fn total_rent(&self) -> f64 {
        self.rents.iter().sum()
    }
}

pub fn evaluate(m: &TabulatedMechanism, cfg: &MechanismConfig) -> Result<MechanismValues> {
    let tg = &cfg.type_grid;
    let pay = payoffs(m, cfg)?;
    let (allocated_value, payments) = m.stage2.totals(&cfg.value_grid, &pay.mixtures);
    let mut fee_rev = 0.0;
    let mut info_cost = 0.0;
    let mut rents = Vec::new();
    let mut type_values = Vec::new();
    for i in 0..m.profile.n() {
        let v: Vec<f64> = (0..tg.len()).map(|t| pay.a[i][t][t] - m.fees[i][t]).collect();
        let mut rent = 0.0;
        for c in tg.cells() {
            fee_rev += c.weight * m.fees[i][c.index];
            info_cost += c.weight
                * cfg
                    .cost_model
                    .cost(&cfg.value_grid, c.r, c.s, m.profile.experiment(i, c.index))?;
            rent += c.weight * v[c.index];
        }
        rents.push(rent);
        type_values.push(v);
    }
    Ok(MechanismValues {
        revenue: payments + fee_rev,
        welfare: allocated_value - info_cost,
        allocated_value,
        info_cost,
        rents,
        type_values,
    })
}

/// Largest type-indexed fees compatible with the stage-1 constraints of
/// bidder `i` for the given stage 2 and profile.
pub fn type_fee_closure(
    stage2: &Stage2Table,
    profile: &StrategyProfile,
    cfg: &MechanismConfig,
    i: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let zero = vec![vec![0.0; profile.map(0).len()]; profile.n()];
    let m = TabulatedMechanism::new(stage2.clone(), profile.clone(), zero)?;
    let a = payoffs(&m, cfg)?.a.swap_remove(i);
    let source: Vec<f64> = (0..a.len()).map(|t| a[t][t]).collect();
    let gap: Vec<Vec<f64>> = (0..a.len())
        .map(|t| (0..a.len()).map(|t2| a[t][t] - a[t][t2]).collect())
        .collect();
    let tau = chain_closure(&source, &gap, cfg.tolerances.fee)?;
    Ok((tau, gap))
}

/// Replaces stage 2 by the second-price rule and shifts each type's fee by
/// its stage-2 payoff gain, leaving every stage-1 payoff unchanged.
pub fn second_price_transform(m: &TabulatedMechanism, cfg: &MechanismConfig) -> Result<TabulatedMechanism> {
    let rep = check_feasibility(m, cfg)?;
    if let Some(v) = rep.violations.first() {
        return Err(Error::InfeasibleMechanism(format!(
            "{:?} fails for bidder {} at {} (slack {:.3e})",
            v.constraint, v.bidder, v.at, v.slack
        )));
    }
    let vcg = Stage2Table::vcg(&cfg.value_grid, m.profile.n())?;
    let mixtures = m.profile.mixtures(&cfg.type_grid)?;
    let z = cfg.value_grid.points();
    let mut fees = Vec::with_capacity(m.profile.n());
    for i in 0..m.profile.n() {
        let stage_u = |t: &Stage2Table| {
            let (pp, xx) = t.interim(i, &mixtures);
            (0..z.len()).map(|j| z[j] * pp[j] - xx[j]).collect::<Vec<f64>>()
        };
        let (old, new) = (stage_u(&m.stage2), stage_u(&vcg));
        let shifted = m.profile.map(i)
            .iter()
            .zip(&m.fees[i])
            .map(|(f, tau)| tau + f.expect(&new) - f.expect(&old))
            .collect();
        fees.push(shifted);
    }
    TabulatedMechanism::new(vcg, m.profile.clone(), fees)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformReport {
    pub before: MechanismValues,
    pub after: MechanismValues,
    pub feasible_after: bool,
    /// Largest change of any type's net payoff.
    pub max_value_change: f64,
}

pub fn transform_report(m: &TabulatedMechanism, cfg: &MechanismConfig) -> Result<TransformReport> {
    let out = second_price_transform(m, cfg)?;
    let before = evaluate(m, cfg)?;
    let after = evaluate(&out, cfg)?;
    let max_value_change = before
        .type_values
        .iter()
        .flatten()
        .zip(after.type_values.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(TransformReport {
        feasible_after: check_feasibility(&out, cfg)?.feasible,
        before,
        after,
        max_value_change,
    })
}

/// A feasible mechanism with a random non-VCG stage 2: a mixture of the
/// second-price rule (weight below 0.7), a uniform lottery and a fixed
/// dictator. Fees are the type-level closure, pushed down at random half the
/// time.
pub fn random_feasible_mechanism<R: Rng>(
    cfg: &MechanismConfig,
    profile: &StrategyProfile,
    rng: &mut R,
) -> Result<TabulatedMechanism> {
    let grid = &cfg.value_grid;
    let n = profile.n();
    let vcg = Stage2Table::vcg(grid, n)?;
    let lottery = Stage2Table::lottery(grid, n)?;
    let dict = Stage2Table::dictator(grid, n, rng.gen_range(0..n))?;
    let wv: f64 = rng.gen_range(0.0..0.7);
    let (l, d): (f64, f64) = (rng.gen_range(0.05..1.0), rng.gen_range(0.0..1.0));
    let scale = (1.0 - wv) / (l + d);
    let stage2 = Stage2Table::mixture(&[(wv, &vcg), (l * scale, &lottery), (d * scale, &dict)])?;
    let mut fees = Vec::with_capacity(n);
    for i in 0..n {
        let (tau, gap) = type_fee_closure(&stage2, profile, cfg, i)?;
        if rng.gen_bool(0.5) {
            fees.push(random_feasible_start(&tau, &gap, rng));
        } else {
            fees.push(tau);
        }
    }
    TabulatedMechanism::new(stage2, profile.clone(), fees)
}

/// Profiles for random mechanisms: the equilibrium, or point masses at the centers.
pub fn sample_profile<R: Rng>(cfg: &MechanismConfig, eq: &StrategyProfile, rng: &mut R) -> Result<StrategyProfile> {
    if rng.gen_bool(0.5) {
        Ok(eq.clone())
    } else {
        Ok(StrategyProfile::symmetric(initial_map(cfg)?, cfg.n))
    }
}

/// `(delta Pi_i, delta W)` when bidder `i` switches to `map` under a
/// second-price stage 2 and no fees.
pub fn potential_swap(
    cfg: &MechanismConfig,
    base: &StrategyProfile,
    i: usize,
    map: Vec<Experiment>,
) -> Result<(f64, f64)> {
    let vcg = Stage2Table::vcg(&cfg.value_grid, base.n())?;
    let zero = vec![vec![0.0; base.map(0).len()]; base.n()];
    let mut moved = base.clone();
    moved.set_map(i, map);
    let before = evaluate(&TabulatedMechanism::new(vcg.clone(), base.clone(), zero.clone())?, cfg)?;
    let after = evaluate(&TabulatedMechanism::new(vcg, moved, zero)?, cfg)?;
    Ok((after.rents[i] - before.rents[i], after.welfare - before.welfare))
}

/// The chain-closure mechanism: equilibrium profile, second-price stage 2,
/// center-indexed fees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalMechanism {
    pub equilibrium: Equilibrium,
    pub table: GapTable,
    pub fees: FeeSchedule,
    pub mechanism: TabulatedMechanism,
}

pub fn optimal_mechanism(cfg: &MechanismConfig) -> Result<OptimalMechanism> {
    let equilibrium = solve_equilibrium(cfg)?;
    let table = value_tables(&equilibrium.profile, cfg, 0)?;
    let fees = chain_closure_fee(&table, cfg.tolerances.fee)?;
    let mechanism = TabulatedMechanism::with_center_fees(cfg, equilibrium.profile.clone(), &fees)?;
    Ok(OptimalMechanism {
        equilibrium,
        table,
        fees,
        mechanism,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Competitor {
    /// Per bidder, per type: support `(lo, hi)` of the assigned vertex.
    pub supports: Vec<Vec<(usize, usize)>>,
    pub revenue: f64,
    pub welfare: f64,
    /// Best family fee per bidder.
    pub fees: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub optimal_feasible: bool,
    pub optimal_revenue: f64,
    pub optimal_welfare: f64,
    pub profiles: usize,
    pub feasible_profiles: usize,
    pub fee_family: usize,
    /// Every bidder enumerated independently, rather than symmetric maps only.
    pub asymmetric: bool,
    pub best_revenue: Competitor,
    pub best_welfare: Competitor,
    pub revenue_excess: f64,
    pub welfare_excess: f64,
    pub picks_coincide: bool,
    pub passed: bool,
}

struct MapData {
    choice: Vec<usize>,
    mixture: Vec<f64>,
    cost: f64,
}

/// Compares the chain-closure mechanism against every vertex assignment
/// paired with the fee family (the chain-closure fee, the flat fee at the
/// lowest bound and `fee_trials` random feasible schedules), each bidder
/// taking her best family fee that keeps the competitor feasible.
pub fn optimality_suite(cfg: &MechanismConfig, fee_trials: usize, seed: u64) -> Result<OptimalityReport> {
    let tol = cfg.tolerances.fee;
    let grid = &cfg.value_grid;
    let tg = &cfg.type_grid;
    let opt = optimal_mechanism(cfg)?;
    let optimal_feasible = check_feasibility(&opt.mechanism, cfg)?.feasible;
    let opt_vals = evaluate(&opt.mechanism, cfg)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let low = opt.table.top_phi().iter().copied().fold(f64::INFINITY, f64::min);
    let mut family = vec![opt.fees.fees.clone(), vec![low; tg.n_s()]];
    for _ in 0..fee_trials {
        family.push(random_feasible_fee(&opt.table, &mut rng).fees);
    }

    let options: Vec<Vec<Experiment>> = tg
        .cells()
        .map(|c| vertex_experiments(grid, grid.center(c.s), cfg.tolerances.mean))
        .collect();
    // cost[t][t2][o]: true type t running option o of type t2
    let mut cost = vec![Vec::new(); tg.len()];
    for c in tg.cells() {
        for opts in &options {
            let row = opts
                .iter()
                .map(|f| cfg.cost_model.cost(grid, c.r, c.s, f))
                .collect::<Result<Vec<_>>>()?;
            cost[c.index].push(row);
        }
    }
    let n_maps = options
        .iter()
        .try_fold(1usize, |acc, o| acc.checked_mul(o.len()))
        .filter(|&k| k <= MAX_PROFILES)
        .ok_or_else(|| Error::Domain("vertex family too large".into()))?;
    let maps: Vec<MapData> = (0..n_maps)
        .map(|mut k| {
            let mut choice = Vec::with_capacity(options.len());
            for o in &options {
                choice.push(k % o.len());
                k /= o.len();
            }
            let mut mixture = vec![0.0; grid.len()];
            let mut own = 0.0;
            for c in tg.cells() {
                let f = &options[c.index][choice[c.index]];
                for (m, v) in mixture.iter_mut().zip(f.mass()) {
                    *m += c.weight * v;
                }
                own += c.weight * cost[c.index][c.index][choice[c.index]];
            }
            MapData {
                choice,
                mixture,
                cost: own,
            }
        })
        .collect();

    let asymmetric = n_maps
        .checked_pow(cfg.n as u32)
        .is_some_and(|k| k <= MAX_PROFILES);
    let profiles = if asymmetric { n_maps.pow(cfg.n as u32) } else { n_maps };
    let decode = |k: usize| -> Vec<usize> {
        if asymmetric {
            let mut k = k;
            (0..cfg.n)
                .map(|_| {
                    let d = k % n_maps;
                    k /= n_maps;
                    d
                })
                .collect()
        } else {
            vec![k; cfg.n]
        }
    };

    let s_of: Vec<usize> = tg.cells().map(|c| c.si).collect();
    let weights: Vec<f64> = tg.cells().map(|c| c.weight).collect();
    let ns = tg.n_s();
    let evaluate_profile = |k: usize| -> Option<(f64, f64, Vec<usize>)> {
        let idx = decode(k);
        let mixtures: Vec<Vec<f64>> = idx.iter().map(|&m| maps[m].mixture.clone()).collect();
        let mut fee_pick = Vec::with_capacity(cfg.n);
        let mut fee_rev = 0.0;
        for (i, &mi) in idx.iter().enumerate() {
            let curve = curve_for(&mixtures, i, grid);
            let md = &maps[mi];
            let eu: Vec<f64> = (0..options.len())
                .map(|t| options[t][md.choice[t]].expect(&curve.pi))
                .collect();
            let a = |t: usize, t2: usize| eu[t2] - cost[t][t2][md.choice[t2]];
            let mut irb = vec![f64::INFINITY; ns];
            let mut gap = vec![vec![f64::INFINITY; ns]; ns];
            for t in 0..eu.len() {
                irb[s_of[t]] = irb[s_of[t]].min(a(t, t));
                for t2 in 0..eu.len() {
                    if t2 != t {
                        let g = &mut gap[s_of[t]][s_of[t2]];
                        *g = g.min(a(t, t) - a(t, t2));
                    }
                }
            }
            let best = family
                .iter()
                .enumerate()
                .filter(|(_, f)| {
                    (0..ns).all(|s| {
                        f[s] <= irb[s] + tol && (0..ns).all(|s2| f[s] - f[s2] <= gap[s][s2] + tol)
                    })
                })
                .map(|(j, f)| (j, (0..weights.len()).map(|t| weights[t] * f[s_of[t]]).sum::<f64>()))
                .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))?;
            fee_pick.push(best.0);
            fee_rev += best.1;
        }
        let pts = grid.points();
        let revenue = expected_second(pts, &mixtures) + fee_rev;
        let welfare = expected_max(pts, &mixtures) - idx.iter().map(|&m| maps[m].cost).sum::<f64>();
        Some((revenue, welfare, fee_pick))
    };

    type Best = (f64, usize, Vec<usize>);
    let pick = |a: Option<Best>, b: Option<Best>| match (a, b) {
        (Some(x), Some(y)) => {
            if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                Some(y)
            } else {
                Some(x)
            }
        }
        (x, None) => x,
        (None, y) => y,
    };
    let (feasible, best_r, best_w) = (0..profiles)
        .into_par_iter()
        .map(|k| match evaluate_profile(k) {
            Some((r, w, fp)) => (1usize, Some((r, k, fp.clone())), Some((w, k, fp))),
            None => (0, None, None),
        })
        .reduce(
            || (0, None, None),
            |a, b| (a.0 + b.0, pick(a.1, b.1), pick(a.2, b.2)),
        );

    let competitor = |best: Option<Best>| -> Result<Competitor> {
        let (_, k, fp) = best.ok_or_else(|| Error::Infeasible("no feasible competitor".into()))?;
        let (revenue, welfare, _) = evaluate_profile(k).expect("feasible profile");
        let supports = decode(k)
            .iter()
            .map(|&m| {
                maps[m]
                    .choice
                    .iter()
                    .enumerate()
                    .map(|(t, &o)| {
                        let mut sup = options[t][o].support();
                        let lo = sup.next().unwrap_or(0);
                        (lo, sup.last().unwrap_or(lo))
                    })
                    .collect()
            })
            .collect();
        Ok(Competitor {
            supports,
            revenue,
            welfare,
            fees: fp.iter().map(|&j| family[j].clone()).collect(),
        })
    };
    let best_revenue = competitor(best_r)?;
    let best_welfare = competitor(best_w)?;
    let revenue_excess = best_revenue.revenue - opt_vals.revenue;
    let welfare_excess = best_welfare.welfare - opt_vals.welfare;
    let picks_coincide = best_revenue.welfare >= best_welfare.welfare - tol
        && best_welfare.revenue >= best_revenue.revenue - tol;
    Ok(OptimalityReport {
        optimal_feasible,
        optimal_revenue: opt_vals.revenue,
        optimal_welfare: opt_vals.welfare,
        profiles,
        feasible_profiles: feasible,
        fee_family: family.len(),
        asymmetric,
        passed: optimal_feasible && revenue_excess <= tol && welfare_excess <= tol && picks_coincide,
        best_revenue,
        best_welfare,
        revenue_excess,
        welfare_excess,
        picks_coincide,
    })
}
