//! Stage-1 fee synthesis.
//!
//! `Phi(r, s)` is the best pre-fee payoff of a truthful type, `Phi(r, s' | r, s)`
//! the best pre-fee payoff of type `(r, s)` registering center `s'`, and
//! `H(s, s') = min_r Phi(r, s) - Phi(r, s' | r, s)` the smallest misreport gap.
//! Feasible fees satisfy `tau(s) <= Phi(1, s)` and `tau(s) <= tau(s') + H(s, s')`;
//! the largest such schedule is a shortest-path distance from a virtual
//! source with edges `source -> s` of weight `Phi(1, s)` and `s' -> s` of weight
//! `H(s, s')`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::MechanismConfig;
use crate::error::{Error, Result};
use crate::potential::{best_experiment, curves};
use crate::profile::StrategyProfile;
use crate::vcg::InterimCurve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub r_points: Vec<f64>,
    pub s_points: Vec<f64>,
    /// `phi[r][s]`
    pub phi: Vec<Vec<f64>>,
    /// `phi_mis[r][s][s2] = Phi(r, s2 | r, s)`
    pub phi_mis: Vec<Vec<Vec<f64>>>,
    /// `h[s][s2] = H(s, s2)`
    pub h: Vec<Vec<f64>>,
}

impl GapTable {
    /// Builds `phi` and `h` from the misreport tensor.
    pub fn from_misreports(
        r_points: Vec<f64>,
        s_points: Vec<f64>,
        phi_mis: Vec<Vec<Vec<f64>>>,
    ) -> Self {
        let ns = s_points.len();
        let phi: Vec<Vec<f64>> = phi_mis
            .iter()
            .map(|row| (0..ns).map(|s| row[s][s]).collect())
            .collect();
        let h = (0..ns)
            .map(|s| {
                (0..ns)
                    .map(|s2| {
                        if s == s2 {
                            0.0
                        } else {
                            (0..r_points.len())
                                .map(|r| phi[r][s] - phi_mis[r][s][s2])
                                .fold(f64::INFINITY, f64::min)
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            r_points,
            s_points,
            phi,
            phi_mis,
            h,
        }
    }

    pub fn n_s(&self) -> usize {
        self.s_points.len()
    }

    /// `Phi` at the highest cost scale on the grid.
    pub fn top_phi(&self) -> &[f64] {
        self.phi.last().expect("nonempty r grid")
    }

    /// Gaps for a fixed cost scale: `H(s, s2 | r) = Phi(r, s) - Phi(r, s2 | r, s)`.
    pub fn h_given_r(&self, ri: usize) -> Vec<Vec<f64>> {
        let ns = self.n_s();
        (0..ns)
            .map(|s| {
                (0..ns)
                    .map(|s2| {
                        if s == s2 {
                            0.0
                        } else {
                            self.phi[ri][s] - self.phi_mis[ri][s][s2]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Gap table of a bidder facing the interim curve `curve`.
pub fn value_tables_for_curve(cfg: &MechanismConfig, curve: &InterimCurve) -> Result<GapTable> {
    let tg = &cfg.type_grid;
    let (rs, ss) = (tg.r_points(), tg.s_points());
    let mut phi_mis = vec![vec![vec![0.0; ss.len()]; ss.len()]; rs.len()];
    for (ri, &r) in rs.iter().enumerate() {
        for (si, &s) in ss.iter().enumerate() {
            for (s2i, &s2) in ss.iter().enumerate() {
                phi_mis[ri][si][s2i] = best_experiment(cfg, curve, r, s, s2)?.1;
            }
        }
    }
    Ok(GapTable::from_misreports(rs.to_vec(), ss.to_vec(), phi_mis))
}

/// Gap table of bidder `i` against the other bidders' maps in `profile`.
pub fn value_tables(profile: &StrategyProfile, cfg: &MechanismConfig, i: usize) -> Result<GapTable> {
    let curve = curves(profile, cfg)?.swap_remove(i);
    value_tables_for_curve(cfg, &curve)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeSchedule {
    pub s_points: Vec<f64>,
    pub fees: Vec<f64>,
}

impl FeeSchedule {
    pub fn flat(s_points: &[f64], fee: f64) -> Self {
        Self {
            s_points: s_points.to_vec(),
            fees: vec![fee; s_points.len()],
        }
    }
}

/// Largest `tau` with `tau[v] <= source[v]` and `tau[v] <= tau[u] + gap[v][u]`.
///
/// Dijkstra when every gap is nonnegative, Bellman-Ford otherwise; a cycle
/// whose gaps sum below `-tol` has no solution.
pub fn chain_closure(source: &[f64], gap: &[Vec<f64>], tol: f64) -> Result<Vec<f64>> {
    let n = source.len();
    if gap.len() != n || gap.iter().any(|row| row.len() != n) {
        return Err(Error::Domain("gap matrix does not match the node count".into()));
    }
    if source.iter().chain(gap.iter().flatten()).any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite bound in chain closure".into()));
    }
    let nonneg = (0..n).all(|v| (0..n).all(|u| u == v || gap[v][u] >= 0.0));
    if nonneg {
        Ok(dijkstra(source, gap))
    } else {
        bellman_ford(source, gap, tol)
    }
}

fn dijkstra(source: &[f64], gap: &[Vec<f64>]) -> Vec<f64> {
    let n = source.len();
    let mut dist = source.to_vec();
    let mut done = vec![false; n];
    for _ in 0..n {
        let u = (0..n)
            .filter(|&u| !done[u])
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
            .expect("unsettled node");
        done[u] = true;
        for v in 0..n {
            if !done[v] {
                dist[v] = dist[v].min(dist[u] + gap[v][u]);
            }
        }
    }
    dist
}

fn bellman_ford(source: &[f64], gap: &[Vec<f64>], tol: f64) -> Result<Vec<f64>> {
    let n = source.len();
    let mut dist = source.to_vec();
    for _ in 1..n {
        let mut changed = false;
        for v in 0..n {
            for u in 0..n {
                if u != v && dist[u] + gap[v][u] < dist[v] {
                    dist[v] = dist[u] + gap[v][u];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for v in 0..n {
        for u in 0..n {
            if u != v && dist[u] + gap[v][u] < dist[v] - tol {
                return Err(Error::NegativeCycle { node: v });
            }
        }
    }
    Ok(dist)
}

/// Chain-closure fee from `Phi` at the top cost scale and the gaps `H`.
pub fn chain_closure_fee(table: &GapTable, tol: f64) -> Result<FeeSchedule> {
    Ok(FeeSchedule {
        s_points: table.s_points.clone(),
        fees: chain_closure(table.top_phi(), &table.h, tol)?,
    })
}

/// Fees indexed by `(r, s)` for the cost-audit regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostIndexedFees {
    pub r_points: Vec<f64>,
    pub s_points: Vec<f64>,
    /// `fees[r][s]`
    pub fees: Vec<Vec<f64>>,
}

/// Per cost scale `r`, the chain closure of `Phi(r, .)` under `H(., . | r)`.
pub fn chain_closure_by_cost(table: &GapTable, tol: f64) -> Result<CostIndexedFees> {
    let fees = (0..table.r_points.len())
        .map(|ri| chain_closure(&table.phi[ri], &table.h_given_r(ri), tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(CostIndexedFees {
        r_points: table.r_points.clone(),
        s_points: table.s_points.clone(),
        fees,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeeConstraint {
    IR,
    IC,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeeViolation {
    pub constraint: FeeConstraint,
    pub s: usize,
    pub s_other: Option<usize>,
    /// Bound minus fee; negative when violated.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub min_ir_slack: f64,
    pub min_ic_slack: f64,
    /// Tightest constraint, reported whether or not it is violated.
    pub worst: Option<FeeViolation>,
}

pub fn verify_feasible(tau: &FeeSchedule, table: &GapTable, tol: f64) -> FeasibilityReport {
    let ns = table.n_s();
    let top = table.top_phi();
    let mut worst: Option<FeeViolation> = None;
    let mut consider = |v: FeeViolation| {
        if worst.as_ref().is_none_or(|w| v.slack < w.slack) {
            worst = Some(v);
        }
    };
    let mut min_ir = f64::INFINITY;
    let mut min_ic = f64::INFINITY;
    for s in 0..ns {
        let slack = top[s] - tau.fees[s];
        min_ir = min_ir.min(slack);
        consider(FeeViolation {
            constraint: FeeConstraint::IR,
            s,
            s_other: None,
            slack,
        });
        for s2 in 0..ns {
            if s2 == s {
                continue;
            }
            let slack = tau.fees[s2] + table.h[s][s2] - tau.fees[s];
            min_ic = min_ic.min(slack);
            consider(FeeViolation {
                constraint: FeeConstraint::IC,
                s,
                s_other: Some(s2),
                slack,
            });
        }
    }
    FeasibilityReport {
        feasible: min_ir >= -tol && min_ic >= -tol,
        min_ir_slack: min_ir,
        min_ic_slack: if ns > 1 { min_ic } else { 0.0 },
        worst,
    }
}

/// Lowers `start` pointwise onto the feasible set by repeated
/// `tau[v] = min(tau[v], source[v], min_u tau[u] + gap[v][u])`.
pub fn project_feasible(start: &[f64], source: &[f64], gap: &[Vec<f64>]) -> Vec<f64> {
    let n = source.len();
    let mut tau: Vec<f64> = start.iter().zip(source).map(|(t, s)| t.min(*s)).collect();
    for _ in 0..=n {
        let mut changed = false;
        for v in 0..n {
            for u in 0..n {
                if u != v && tau[u] + gap[v][u] < tau[v] {
                    tau[v] = tau[u] + gap[v][u];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    tau
}

/// Random start above and below the IR bounds, projected onto the feasible set.
pub fn random_feasible_start<R: Rng>(source: &[f64], gap: &[Vec<f64>], rng: &mut R) -> Vec<f64> {
    let hi = source.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = source.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = (hi - lo).abs() + 1.0;
    let start: Vec<f64> = source
        .iter()
        .map(|_| rng.gen_range(lo - spread..=hi + spread))
        .collect();
    project_feasible(&start, source, gap)
}

pub fn random_feasible_fee<R: Rng>(table: &GapTable, rng: &mut R) -> FeeSchedule {
    FeeSchedule {
        s_points: table.s_points.clone(),
        fees: random_feasible_start(table.top_phi(), &table.h, rng),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub trials: usize,
    pub dominated: usize,
    /// Largest `candidate - tau` over all trials and points.
    pub max_excess: f64,
    pub passed: bool,
}

/// Draws random feasible schedules and checks that `tau` dominates each.
pub fn dominance_check(
    tau: &FeeSchedule,
    table: &GapTable,
    trials: usize,
    seed: u64,
    tol: f64,
) -> DominanceReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dominated = 0;
    let mut max_excess = f64::NEG_INFINITY;
    for _ in 0..trials {
        let cand = random_feasible_fee(table, &mut rng);
        let excess = cand
            .fees
            .iter()
            .zip(&tau.fees)
            .map(|(c, t)| c - t)
            .fold(f64::NEG_INFINITY, f64::max);
        max_excess = max_excess.max(excess);
        if excess <= tol {
            dominated += 1;
        }
    }
    DominanceReport {
        trials,
        dominated,
        max_excess,
        passed: dominated == trials,
    }
}
