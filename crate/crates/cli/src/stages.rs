use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use costly_auction::audit::{
    compare_revenues, min_audit_costs, min_audit_experiments, no_audit_regime, AuditPlan,
    RevenueComparison,
};
use costly_auction::export::{
    plot_series, profile_from_rows, read_cost_fees, read_fees, read_profile_rows, write_audit,
    write_cost_fees, write_curve, write_fees, write_plot, write_profile, PlotRow,
};
use costly_auction::fees::{
    chain_closure_by_cost, chain_closure_fee, dominance_check, value_tables, verify_feasible,
    DominanceReport, FeasibilityReport,
};
use costly_auction::potential::curves;
use costly_auction::simulate::{
    analytic_summary, simulate_records, summarize, write_records, AnalyticSummary, BatchSummary,
    Mechanism,
};
use costly_auction::verify::{
    check_feasibility, evaluate, transform_report, random_feasible_mechanism, optimality_suite,
    TabulatedMechanism,
};
use costly_auction::{
    solve_equilibrium, FeeSchedule, GapTable, MechanismConfig, PotentialReport, StrategyProfile,
};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

/// Random mechanisms drawn for the second-price transform check.
const TRANSFORM_TRIALS: usize = 20;
/// Random feasible fees drawn for dominance and competitor checks.
const FEE_TRIALS: usize = 100;

pub struct Context {
    pub cfg: MechanismConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub runs: usize,
    pub trace: bool,
    pub manifest: RunManifest,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub potential: PotentialReport,
    /// Largest type-level gain from a unilateral deviation.
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct FeeReport {
    feasibility: FeasibilityReport,
    dominance: DominanceReport,
    analytic: AnalyticSummary,
}

#[derive(Debug, Serialize)]
struct NoAuditSummary {
    revenue: f64,
    stage2_revenue: f64,
    fees: Vec<f64>,
    epsilon: f64,
    converged: bool,
}

#[derive(Debug, Serialize)]
struct AuditReport {
    experiment_plans: Vec<AuditPlan>,
    cost_plans: Vec<AuditPlan>,
    no_audit: NoAuditSummary,
    comparison: RevenueComparison,
}

#[derive(Debug, Serialize)]
struct SimulationReport {
    estimate: BatchSummary,
    analytic: AnalyticSummary,
    revenue_within_3se: bool,
    welfare_within_3se: bool,
    rents_within_3se: bool,
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub id: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
struct VerificationReport {
    passed: bool,
    checks: Vec<Check>,
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn open(dir: &Path, name: &str) -> CliResult<BufReader<File>> {
    Ok(BufReader::new(File::open(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<()> {
    fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn load_profile(ctx: &Context) -> CliResult<StrategyProfile> {
    let rows = read_profile_rows(open(&ctx.out_dir, "profile.csv")?)?;
    let profile = profile_from_rows(&rows, &ctx.cfg)?;
    if !profile.is_symmetric() {
        return Err(CliError::Input("profile.csv is not symmetric across bidders".into()));
    }
    Ok(profile)
}

fn load_fees(ctx: &Context) -> CliResult<FeeSchedule> {
    let fees = read_fees(open(&ctx.out_dir, "fees.csv")?)?;
    if fees.fees.len() != ctx.cfg.type_grid.n_s() {
        return Err(CliError::Input("fees.csv does not match the s grid".into()));
    }
    Ok(fees)
}

fn finish(ctx: &mut Context, stage: &str, outputs: &[&str], start: Instant) -> CliResult<()> {
    let outputs = outputs.iter().map(|s| s.to_string()).collect();
    ctx.manifest.record(stage, outputs, start.elapsed().as_secs_f64());
    ctx.manifest.save(&ctx.out_dir)
}

pub fn solve(ctx: &mut Context) -> CliResult<()> {
    let start = Instant::now();
    let cfg = &ctx.cfg;
    let eq = solve_equilibrium(cfg)?;
    info!(
        "solve: {} iterations, W = {:.9}, epsilon = {:.3e}",
        eq.iterations, eq.report.welfare, eq.epsilon
    );
    let dir = &ctx.out_dir;
    write_profile(&eq.profile, cfg, create(dir, "profile.csv")?)?;
    let curve = curves(&eq.profile, cfg)?.swap_remove(0);
    write_curve(&curve, create(dir, "curve.csv")?)?;
    let mut plot = plot_series("pi", &curve.z, &curve.pi);
    plot.extend(plot_series("opp_max_cdf", &curve.z, &curve.opp_max_cdf));
    write_plot(&plot, create(dir, "plot_pi.csv")?)?;
    let report = SolveReport {
        potential: eq.report,
        epsilon: eq.epsilon,
        iterations: eq.iterations,
        converged: eq.converged,
        history: eq.history,
    };
    write_json(dir, "potential.json", &report)?;
    println!(
        "solve: W = {:.9}, epsilon = {:.3e}, {} iterations",
        report.potential.welfare, report.epsilon, report.iterations
    );
    let outputs = ["profile.csv", "curve.csv", "plot_pi.csv", "potential.json"];
    finish(ctx, "solve", &outputs, start)?;
    if !report.converged {
        return Err(CliError::NotConverged(format!(
            "stopped at max_iters = {} with epsilon {:.3e}",
            ctx.cfg.max_iters, report.epsilon
        )));
    }
    Ok(())
}

fn gap_table(ctx: &Context, profile: &StrategyProfile) -> CliResult<GapTable> {
    Ok(value_tables(profile, &ctx.cfg, 0)?)
}

pub fn fees(ctx: &mut Context) -> CliResult<()> {
    ctx.manifest.require(&ctx.out_dir, "solve")?;
    let start = Instant::now();
    let cfg = &ctx.cfg;
    let profile = load_profile(ctx)?;
    let table = gap_table(ctx, &profile)?;
    let tol = cfg.tolerances.fee;
    let tau = chain_closure_fee(&table, tol)?;
    let by_cost = chain_closure_by_cost(&table, tol)?;
    let feasibility = verify_feasible(&tau, &table, tol);
    let dominance = dominance_check(&tau, &table, FEE_TRIALS, ctx.seed, tol);
    let mech = Mechanism::with_center_fees(profile, cfg, &tau)?;
    let analytic = analytic_summary(&mech, cfg)?;
    let dir = &ctx.out_dir;
    write_fees(&tau, create(dir, "fees.csv")?)?;
    write_cost_fees(&by_cost, create(dir, "cost_fees.csv")?)?;
    write_json(dir, "gap_table.json", &table)?;
    let mut plot = plot_series("phi_top", &table.s_points, table.top_phi());
    plot.extend(plot_series("fee", &tau.s_points, &tau.fees));
    write_plot(&plot, create(dir, "plot_fees.csv")?)?;
    println!(
        "fees: tau = {:?}, revenue = {:.9}, feasible = {}",
        tau.fees, analytic.revenue, feasibility.feasible
    );
    write_json(
        dir,
        "fees.json",
        &FeeReport {
            feasibility,
            dominance,
            analytic,
        },
    )?;
    let outputs = ["fees.csv", "cost_fees.csv", "gap_table.json", "plot_fees.csv", "fees.json"];
    finish(ctx, "fees", &outputs, start)
}

pub fn audit(ctx: &mut Context) -> CliResult<()> {
    ctx.manifest.require(&ctx.out_dir, "solve")?;
    ctx.manifest.require(&ctx.out_dir, "fees")?;
    let start = Instant::now();
    let cfg = &ctx.cfg;
    let dir = &ctx.out_dir;
    let table: GapTable = serde_json::from_reader(open(dir, "gap_table.json")?)?;
    let by_cost = read_cost_fees(open(dir, "cost_fees.csv")?)?;
    let profile = load_profile(ctx)?;
    let tau = load_fees(ctx)?;
    let full = analytic_summary(&Mechanism::with_center_fees(profile, cfg, &tau)?, cfg)?.revenue;

    let mut outputs = Vec::new();
    let mut plot: Vec<PlotRow> = Vec::new();
    let mut experiment_plans = Vec::new();
    let mut cost_plans = Vec::new();
    for (i, &p) in cfg.punishment.iter().enumerate() {
        let e = min_audit_experiments(cfg, &table, p)?;
        let c = min_audit_costs(cfg, &table, &by_cost, p);
        for (name, plan) in [("experiment", &e), ("cost", &c)] {
            let file = format!("audit_{name}_{i}.csv");
            write_audit(plan, create(dir, &file)?)?;
            plot.extend(plot_series(&format!("q_{name}_{i}"), &plan.params, &plan.q));
            outputs.push(file);
        }
        experiment_plans.push(e);
        cost_plans.push(c);
    }
    write_plot(&plot, create(dir, "plot_audit.csv")?)?;

    let na = no_audit_regime(cfg)?;
    let comparison = compare_revenues(full, &experiment_plans, na.revenue, cfg.tolerances.fee);
    if !comparison.ordering_holds {
        warn!(
            "audit: no-audit revenue {:.9} exceeds full verification {:.9}",
            na.revenue, full
        );
    }
    println!(
        "audit: q(s) = {:?}, no-audit revenue = {:.9}, ordering holds = {}",
        experiment_plans[0].q, na.revenue, comparison.ordering_holds
    );
    let report = AuditReport {
        experiment_plans,
        cost_plans,
        no_audit: NoAuditSummary {
            revenue: na.revenue,
            stage2_revenue: na.stage2_revenue,
            fees: na.fees,
            epsilon: na.equilibrium.epsilon,
            converged: na.equilibrium.converged,
        },
        comparison,
    };
    write_json(dir, "audit.json", &report)?;
    outputs.push("plot_audit.csv".into());
    outputs.push("audit.json".into());
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    finish(ctx, "audit", &names, start)
}

pub fn simulate(ctx: &mut Context) -> CliResult<()> {
    ctx.manifest.require(&ctx.out_dir, "solve")?;
    ctx.manifest.require(&ctx.out_dir, "fees")?;
    let start = Instant::now();
    let cfg = &ctx.cfg;
    let profile = load_profile(ctx)?;
    let tau = load_fees(ctx)?;
    let mech = Mechanism::with_center_fees(profile, cfg, &tau)?;
    let records = simulate_records(&mech, cfg, ctx.runs, ctx.seed)?;
    let estimate = summarize(&records, ctx.seed);
    let analytic = analytic_summary(&mech, cfg)?;
    let report = SimulationReport {
        revenue_within_3se: estimate.revenue.covers(analytic.revenue, 3.0),
        welfare_within_3se: estimate.welfare.covers(analytic.welfare, 3.0),
        rents_within_3se: estimate.rents.covers(analytic.total_rent, 3.0),
        estimate,
        analytic,
    };
    println!(
        "simulate: {} auctions, revenue {:.6} +- {:.1e} (exact {:.6}), welfare {:.6} +- {:.1e} (exact {:.6})",
        ctx.runs,
        report.estimate.revenue.mean,
        report.estimate.revenue.se,
        report.analytic.revenue,
        report.estimate.welfare.mean,
        report.estimate.welfare.se,
        report.analytic.welfare
    );
    let dir = &ctx.out_dir;
    write_json(dir, "summary.json", &report)?;
    let mut outputs = vec!["summary.json"];
    if ctx.trace {
        let mut w = create(dir, "records.csv")?;
        write_records(&records, &mut w)?;
        w.flush()?;
        outputs.push("records.csv");
    } else if dir.join("records.csv").exists() {
        fs::remove_file(dir.join("records.csv"))?;
    }
    finish(ctx, "simulate", &outputs, start)
}

fn verification_checks(ctx: &Context) -> CliResult<Vec<Check>> {
    let cfg = &ctx.cfg;
    let profile = load_profile(ctx)?;
    let tau = load_fees(ctx)?;
    let table = gap_table(ctx, &profile)?;
    let mech = TabulatedMechanism::with_center_fees(cfg, profile.clone(), &tau)?;
    let mut checks = Vec::new();

    let rep = check_feasibility(&mech, cfg)?;
    checks.push(Check {
        id: "constraints".into(),
        passed: rep.feasible,
        detail: format!(
            "{} stage-1/stage-2 IR and IC constraints, {} violated",
            rep.checked,
            rep.violations.len()
        ),
    });

    let v = evaluate(&mech, cfg)?;
    let gap = (v.welfare - v.revenue - v.total_rent()).abs();
    checks.push(Check {
        id: "decomposition".into(),
        passed: gap <= 1e-9,
        detail: format!("W = {:.9}, R = {:.9}, |W - R - rents| = {gap:.2e}", v.welfare, v.revenue),
    });

    let tol = cfg.tolerances.fee;
    let feas = verify_feasible(&tau, &table, tol);
    let dom = dominance_check(&tau, &table, FEE_TRIALS, ctx.seed, tol);
    checks.push(Check {
        id: "fee_maximality".into(),
        passed: feas.feasible && dom.passed,
        detail: format!(
            "IR slack {:.2e}, IC slack {:.2e}, {}/{} random feasible fees dominated",
            feas.min_ir_slack, feas.min_ic_slack, dom.dominated, dom.trials
        ),
    });

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut ok = true;
    let mut drift: f64 = 0.0;
    let mut min_gain = f64::INFINITY;
    for _ in 0..TRANSFORM_TRIALS {
        let m = random_feasible_mechanism(cfg, &profile, &mut rng)?;
        let rep = transform_report(&m, cfg)?;
        drift = drift.max(rep.max_value_change);
        let gain = rep.after.revenue - rep.before.revenue;
        min_gain = min_gain.min(gain);
        ok &= rep.feasible_after && rep.max_value_change <= 1e-9 && gain >= -1e-9;
    }
    checks.push(Check {
        id: "second_price_transform".into(),
        passed: ok,
        detail: format!(
            "{TRANSFORM_TRIALS} mechanisms, rent change {drift:.2e}, min revenue gain {min_gain:.3e}"
        ),
    });

    let suite = optimality_suite(cfg, FEE_TRIALS, ctx.seed)?;
    checks.push(Check {
        id: "competitors".into(),
        passed: suite.passed,
        detail: format!(
            "{} profiles ({} feasible) x {} fees, revenue excess {:.2e}, welfare excess {:.2e}, picks coincide {}",
            suite.profiles,
            suite.feasible_profiles,
            suite.fee_family,
            suite.revenue_excess,
            suite.welfare_excess,
            suite.picks_coincide
        ),
    });
    checks.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(checks)
}

pub fn verify(ctx: &mut Context) -> CliResult<()> {
    ctx.manifest.require(&ctx.out_dir, "solve")?;
    ctx.manifest.require(&ctx.out_dir, "fees")?;
    let start = Instant::now();
    let checks = verification_checks(ctx)?;
    let passed = checks.iter().all(|c| c.passed);
    let text: String = checks
        .iter()
        .map(|c| format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.id, c.detail))
        .collect();
    print!("{text}");
    let dir = &ctx.out_dir;
    fs::write(dir.join("verification.txt"), &text)?;
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.id.clone()).collect();
    write_json(dir, "verification.json", &VerificationReport { passed, checks })?;
    finish(ctx, "verify", &["verification.json", "verification.txt"], start)?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Failed(failed.join(", ")))
    }
}
