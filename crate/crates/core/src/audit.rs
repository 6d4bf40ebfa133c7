//! Audit extensions: minimal detection probabilities that deter a bidder
//! from leaving her registered experiment class or misreporting her cost
//! scale, and the flat-fee regime used when nothing can be verified.

use serde::{Deserialize, Serialize};

use crate::config::MechanismConfig;
use crate::dist::expected_second;
use crate::error::{Error, Result};
use crate::fees::{CostIndexedFees, GapTable};
use crate::potential::{best_unconstrained, curves, solve, Equilibrium, Regime};

/// Monotone audit cost as a function of the audit probability, linear
/// between knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCurve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl AuditCurve {
    /// `k(q) = c q`
    pub fn linear(c: f64) -> Self {
        Self {
            x: vec![0.0, 1.0],
            y: vec![0.0, c],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (x, y) = (&self.x, &self.y);
        if x.len() < 2 || x.len() != y.len() {
            return Err(Error::Config("audit curve needs >= 2 matching knots".into()));
        }
        if x[0] != 0.0 || x[x.len() - 1] != 1.0 {
            return Err(Error::Config("audit curve knots must span [0, 1]".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("audit curve knots must increase".into()));
        }
        if y[0] < 0.0 || y.windows(2).any(|w| w[1] < w[0]) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("audit cost must be nonnegative and nondecreasing".into()));
        }
        Ok(())
    }

    pub fn eval(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        let k = self.x.partition_point(|&x| x < q).clamp(1, self.x.len() - 1);
        let (x0, x1) = (self.x[k - 1], self.x[k]);
        let w = (q - x0) / (x1 - x0);
        (1.0 - w) * self.y[k - 1] + w * self.y[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditRegime {
    Experiment,
    Cost,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditPlan {
    pub regime: AuditRegime,
    /// Reported parameter the probability is indexed by (`s`, or `r`).
    pub params: Vec<f64>,
    pub q: Vec<f64>,
    pub audit_cost: Vec<f64>,
    /// Per bidder, over the report distribution.
    pub expected_audit_cost: f64,
}

impl AuditPlan {
    fn build(regime: AuditRegime, params: &[f64], weights: &[f64], q: Vec<f64>, curve: &AuditCurve) -> Self {
        let audit_cost: Vec<f64> = q.iter().map(|&v| curve.eval(v)).collect();
        let expected_audit_cost = weights.iter().zip(&audit_cost).map(|(w, c)| w * c).sum();
        Self {
            regime,
            params: params.to_vec(),
            q,
            audit_cost,
            expected_audit_cost,
        }
    }
}

/// `[(psi - phi) / (psi - p)]^+`, clamped to `[0, 1]`.
pub fn deterrence_probability(phi: f64, psi: f64, p: f64) -> f64 {
    let num = psi - phi;
    if num <= 0.0 {
        return 0.0;
    }
    let den = psi - p;
    if den <= 0.0 {
        return 1.0;
    }
    (num / den).min(1.0)
}

/// `[(tau(r, s) - tau(r', s)) / (phi(r, s) - tau(r', s) - p)]^+`, clamped to `[0, 1]`.
pub fn cost_audit_ratio(tau_true: f64, tau_report: f64, phi_true: f64, p: f64) -> f64 {
    let num = tau_true - tau_report;
    if num <= 0.0 {
        return 0.0;
    }
    let den = phi_true - tau_report - p;
    if den <= 0.0 {
        return 1.0;
    }
    (num / den).min(1.0)
}

/// Best pre-fee payoff of type `(r, s)` from an experiment outside its own
/// center class, `psi[r][s]`.
pub fn noncompliant_values(table: &GapTable) -> Result<Vec<Vec<f64>>> {
    let ns = table.n_s();
    if ns < 2 {
        return Err(Error::NoDeviationClass);
    }
    Ok(table
        .phi_mis
        .iter()
        .map(|row| {
            (0..ns)
                .map(|s| {
                    (0..ns)
                        .filter(|&s2| s2 != s)
                        .map(|s2| row[s][s2])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect()
        })
        .collect())
}

/// Probability of auditing a bidder who reports `s`, for punishment `p`.
pub fn min_audit_experiments(
    cfg: &MechanismConfig,
    table: &GapTable,
    p: f64,
) -> Result<AuditPlan> {
    let psi = noncompliant_values(table)?;
    let q = (0..table.n_s())
        .map(|s| {
            (0..table.r_points.len())
                .map(|r| deterrence_probability(table.phi[r][s], psi[r][s], p))
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(AuditPlan::build(
        AuditRegime::Experiment,
        &table.s_points,
        cfg.type_grid.s_weights(),
        q,
        &cfg.audit_costs.experiment,
    ))
}

/// Probability of auditing a bidder who reports cost scale `r'`, given
/// `(r, s)`-indexed fees.
pub fn min_audit_costs(
    cfg: &MechanismConfig,
    table: &GapTable,
    fees: &CostIndexedFees,
    p: f64,
) -> AuditPlan {
    let (nr, ns) = (fees.r_points.len(), fees.s_points.len());
    let q = (0..nr)
        .map(|rp| {
            let mut q: f64 = 0.0;
            for r in 0..nr {
                for s in 0..ns {
                    let (t_true, t_rep) = (fees.fees[r][s], fees.fees[rp][s]);
                    if t_rep <= t_true {
                        q = q.max(cost_audit_ratio(t_true, t_rep, table.phi[r][s], p));
                    }
                }
            }
            q
        })
        .collect();
    AuditPlan::build(
        AuditRegime::Cost,
        &fees.r_points,
        cfg.type_grid.r_weights(),
        q,
        &cfg.audit_costs.cost,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoAuditRegime {
    pub equilibrium: Equilibrium,
    /// Best unconstrained pre-fee payoff of bidder 0, `phi[r][s]`.
    pub phi: Vec<Vec<f64>>,
    /// Flat fee per bidder.
    pub fees: Vec<f64>,
    pub stage2_revenue: f64,
    pub revenue: f64,
}

/// Equilibrium without the center constraint and the largest flat fee every
/// type accepts.
pub fn no_audit_regime(cfg: &MechanismConfig) -> Result<NoAuditRegime> {
    let equilibrium = solve(cfg, Regime::Unconstrained)?;
    let cs = curves(&equilibrium.profile, cfg)?;
    let tg = &cfg.type_grid;
    let mut fees = Vec::with_capacity(cfg.n);
    let mut phi0 = Vec::new();
    for (i, curve) in cs.iter().enumerate() {
        let phi: Vec<Vec<f64>> = tg
            .r_points()
            .iter()
            .map(|&r| {
                tg.s_points()
                    .iter()
                    .map(|&s| best_unconstrained(cfg, curve, r, s).1)
                    .collect()
            })
            .collect();
        let fee = tg
            .cells()
            .filter(|c| c.weight > 0.0)
            .map(|c| phi[c.ri][c.si])
            .fold(f64::INFINITY, f64::min);
        fees.push(fee);
        if i == 0 {
            phi0 = phi;
        }
    }
    let mixtures = equilibrium.profile.mixtures(tg)?;
    let stage2_revenue = expected_second(cfg.value_grid.points(), &mixtures);
    let revenue = stage2_revenue + fees.iter().sum::<f64>();
    Ok(NoAuditRegime {
        equilibrium,
        phi: phi0,
        fees,
        stage2_revenue,
        revenue,
    })
}

/// Revenues of the three verification regimes. `audited` is net of the
/// expected audit cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevenueComparison {
    pub full_verification: f64,
    pub audited: f64,
    pub total_audit_cost: f64,
    pub no_audit: f64,
    /// `no_audit <= audited + cost <= full + cost`
    pub ordering_holds: bool,
}

pub fn compare_revenues(
    full_verification: f64,
    plans: &[AuditPlan],
    no_audit: f64,
    tol: f64,
) -> RevenueComparison {
    let total_audit_cost = plans.iter().map(|p| p.expected_audit_cost).sum();
    let audited = full_verification - total_audit_cost;
    RevenueComparison {
        full_verification,
        audited,
        total_audit_cost,
        no_audit,
        ordering_holds: no_audit <= audited + total_audit_cost + tol
            && audited <= full_verification + tol,
    }
}
