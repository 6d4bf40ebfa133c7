//! Browser bindings: each call builds the desk-scale instance for the given
//! bidder count and cost scale and returns a JSON document for plotting.

use costly_auction::audit::min_audit_experiments;
use costly_auction::fees::{chain_closure_fee, value_tables, verify_feasible};
use costly_auction::potential::curves;
use costly_auction::verify::{evaluate, optimal_mechanism};
use costly_auction::{
    solve_equilibrium, CostModel, Kernel, MechanismConfig, TypeGrid, ValueGrid,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct CurveView {
    pub z: Vec<f64>,
    pub pi: Vec<f64>,
    pub opp_max_cdf: Vec<f64>,
    pub welfare: f64,
    pub info_cost: f64,
    pub epsilon: f64,
    pub iterations: usize,
}

#[derive(Debug, Serialize)]
pub struct FeeView {
    pub s: Vec<f64>,
    pub phi_top: Vec<f64>,
    pub fee: Vec<f64>,
    pub feasible: bool,
    pub revenue: f64,
    pub welfare: f64,
}

#[derive(Debug, Serialize)]
pub struct AuditView {
    pub s: Vec<f64>,
    pub punishment: Vec<f64>,
    /// `q[k][s]` at `punishment[k]`
    pub q: Vec<Vec<f64>>,
}

pub fn instance(n: usize, scale: f64) -> Result<MechanismConfig, String> {
    if !(2..=4).contains(&n) {
        return Err(format!("n must be 2, 3 or 4, got {n}"));
    }
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(format!("cost scale must be finite and >= 0, got {scale}"));
    }
    let kernel = Kernel::Power {
        exponent: 2.0,
        scale,
    };
    MechanismConfig::new(
        n,
        ValueGrid::new(1.0, 2.0, 4).map_err(|e| e.to_string())?,
        TypeGrid::uniform(vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 1.0]).map_err(|e| e.to_string())?,
        CostModel::new(kernel, CostModel::quadratic().anchor).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())
}

pub fn curve_view(n: usize, scale: f64) -> Result<CurveView, String> {
    let cfg = instance(n, scale)?;
    let eq = solve_equilibrium(&cfg).map_err(|e| e.to_string())?;
    let curve = curves(&eq.profile, &cfg).map_err(|e| e.to_string())?.swap_remove(0);
    Ok(CurveView {
        z: curve.z,
        pi: curve.pi,
        opp_max_cdf: curve.opp_max_cdf,
        welfare: eq.report.welfare,
        info_cost: eq.report.info_cost,
        epsilon: eq.epsilon,
        iterations: eq.iterations,
    })
}

pub fn fee_view(n: usize, scale: f64) -> Result<FeeView, String> {
    let cfg = instance(n, scale)?;
    let opt = optimal_mechanism(&cfg).map_err(|e| e.to_string())?;
    let values = evaluate(&opt.mechanism, &cfg).map_err(|e| e.to_string())?;
    Ok(FeeView {
        s: opt.table.s_points.clone(),
        phi_top: opt.table.top_phi().to_vec(),
        feasible: verify_feasible(&opt.fees, &opt.table, cfg.tolerances.fee).feasible,
        fee: opt.fees.fees,
        revenue: values.revenue,
        welfare: values.welfare,
    })
}

/// Minimal experiment-audit probabilities for punishments from 0 down to `p_min`.
pub fn audit_view(n: usize, scale: f64, p_min: f64, steps: usize) -> Result<AuditView, String> {
    if !(p_min.is_finite() && p_min < 0.0) || steps < 2 {
        return Err("need p_min < 0 and at least 2 steps".into());
    }
    let cfg = instance(n, scale)?;
    let eq = solve_equilibrium(&cfg).map_err(|e| e.to_string())?;
    let table = value_tables(&eq.profile, &cfg, 0).map_err(|e| e.to_string())?;
    chain_closure_fee(&table, cfg.tolerances.fee).map_err(|e| e.to_string())?;
    let punishment: Vec<f64> = (0..steps)
        .map(|k| p_min * k as f64 / (steps - 1) as f64)
        .collect();
    let q = punishment
        .iter()
        .map(|&p| {
            min_audit_experiments(&cfg, &table, p)
                .map(|plan| plan.q)
                .map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    Ok(AuditView {
        s: table.s_points,
        punishment,
        q,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

/// Interim payoff curve and potential of the symmetric equilibrium.
#[wasm_bindgen]
pub fn equilibrium(n: u32, scale: f64) -> Result<String, JsError> {
    to_json(curve_view(n as usize, scale))
}

/// Top-cost participation bound and chain-closure fee per center.
#[wasm_bindgen]
pub fn fees(n: u32, scale: f64) -> Result<String, JsError> {
    to_json(fee_view(n as usize, scale))
}

/// Audit probability per center over a punishment sweep.
#[wasm_bindgen]
pub fn audit(n: u32, scale: f64, p_min: f64, steps: u32) -> Result<String, JsError> {
    to_json(audit_view(n as usize, scale, p_min, steps as usize))
}
