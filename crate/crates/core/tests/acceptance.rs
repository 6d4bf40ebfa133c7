//! Acceptance criteria on the desk-scale instance: `[a, b] = [1, 2]`, four
//! value cells, a uniform 3x3 type grid, quadratic cost anchored at the
//! declared center. Prints one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use costly_auction::audit::{cost_audit_ratio, deterrence_probability, min_audit_experiments};
use costly_auction::fees::{
    chain_closure, chain_closure_fee, dominance_check, value_tables, verify_feasible,
};
use costly_auction::potential::{best_experiment, potential};
use costly_auction::simulate::{analytic_summary, run_batch, simulate_records, Mechanism};
use costly_auction::vcg::{expected_bid_payoff, interim_curve, InterimCurve};
use costly_auction::verify::{
    check_feasibility, evaluate, transform_report, optimal_mechanism, potential_swap,
    random_feasible_mechanism, sample_profile, optimality_suite, vertex_experiments,
};
use costly_auction::{solve_equilibrium, Experiment, MechanismConfig, StrategyProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn random_pmf(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| rng.gen::<f64>().powi(2)).collect();
    let t: f64 = w.iter().sum();
    w.iter().map(|x| x / t).collect()
}

/// Random member of the mean-constrained class: a random mix of its vertices.
fn random_experiment(cfg: &MechanismConfig, s: f64, rng: &mut ChaCha8Rng) -> Experiment {
    let verts = vertex_experiments(&cfg.value_grid, cfg.value_grid.center(s), cfg.tolerances.mean);
    let w = random_pmf(rng, verts.len());
    let mut mass = vec![0.0; cfg.value_grid.len()];
    for (f, wk) in verts.iter().zip(&w) {
        for (m, v) in mass.iter_mut().zip(f.mass()) {
            *m += wk * v;
        }
    }
    Experiment::new(mass, cfg.value_grid.center(s))
}

fn random_map(cfg: &MechanismConfig, rng: &mut ChaCha8Rng) -> Vec<Experiment> {
    cfg.type_grid.cells().map(|c| random_experiment(cfg, c.s, rng)).collect()
}

fn exact_potential() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut trials = 0;
    for n in [2, 3] {
        let cfg = MechanismConfig::desk(n);
        for k in 0..60 {
            let maps = (0..n).map(|_| random_map(&cfg, &mut rng)).collect();
            let base = StrategyProfile::new(maps).unwrap();
            let i = rng.gen_range(0..n);
            let mut moved = base.clone();
            moved.set_map(i, random_map(&cfg, &mut rng));
            let (p0, p1) = (potential(&base, &cfg).unwrap(), potential(&moved, &cfg).unwrap());
            let d_pi = p1.net_payoffs[i] - p0.net_payoffs[i];
            let d_w = p1.welfare - p0.welfare;
            worst = worst.max((d_pi - d_w).abs());
            if k % 6 == 0 {
                // same identity through the tabulated stage-2 payoffs
                let (tp, tw) = potential_swap(&cfg, &base, i, moved.map(i).to_vec()).unwrap();
                worst = worst.max((tp - tw).abs()).max((tw - d_w).abs());
            }
            trials += 1;
        }
    }
    outcome(worst <= 1e-9, format!("{trials} swaps, max |dPi - dW| = {worst:.2e}"))
}

fn stage2_truthful() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cfg = MechanismConfig::desk(3);
    let g = &cfg.value_grid;
    let mut violations = 0;
    let mut pairs = 0;
    for k in 0..20 {
        let opp = if k % 2 == 0 { 1 } else { 2 };
        let mixes: Vec<Vec<f64>> = (0..opp).map(|_| random_pmf(&mut rng, g.len())).collect();
        for t in 0..g.len() {
            let truthful = expected_bid_payoff(g, &mixes, g.z(t), t);
            for b in 0..g.len() {
                pairs += 1;
                if expected_bid_payoff(g, &mixes, g.z(t), b) > truthful + 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    outcome(violations == 0, format!("{pairs} (value, bid) pairs over 20 mixtures, {violations} violations"))
}

fn oracle_value(points: &[f64], values: &[f64], c: f64, tol: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for l in 0..points.len() {
        if (points[l] - c).abs() <= tol {
            best = best.max(values[l]);
        }
        for h in l + 1..points.len() {
            if points[l] < c - tol && c + tol < points[h] {
                let w = (c - points[l]) / (points[h] - points[l]);
                best = best.max((1.0 - w) * values[l] + w * values[h]);
            }
        }
    }
    best
}

fn best_response_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let cfg = MechanismConfig::desk(2);
    let g = &cfg.value_grid;
    let mut worst: f64 = 0.0;
    let n = 520;
    for k in 0..n {
        let pi: Vec<f64> = if k % 2 == 0 {
            interim_curve(g, &[random_pmf(&mut rng, g.len())]).pi
        } else {
            (0..g.len()).map(|_| rng.gen_range(-0.5..1.0)).collect()
        };
        let curve = InterimCurve {
            z: g.points().to_vec(),
            pi,
            opp_max_cdf: vec![1.0; g.len()],
        };
        let r: f64 = rng.gen();
        let s = if k % 3 == 0 {
            cfg.type_grid.s_points()[rng.gen_range(0..3)]
        } else {
            rng.gen()
        };
        let (f, value) = best_experiment(&cfg, &curve, r, s, s).unwrap();
        let w = cfg.cost_model.weights(g, r, g.center(s));
        let net: Vec<f64> = curve.pi.iter().zip(&w).map(|(p, c)| p - c).collect();
        let oracle = oracle_value(g.points(), &net, g.center(s), cfg.tolerances.mean);
        let support = f.support().count();
        worst = worst.max((value - oracle).abs()).max((f.expect(&net) - value).abs());
        if support > 2 {
            worst = f64::INFINITY;
        }
    }
    outcome(worst <= 1e-9, format!("{n} instances, max objective gap {worst:.2e}"))
}

/// Minimum over simple chains ending at `target`.
fn chain_oracle(source: &[f64], gap: &[Vec<f64>], target: usize) -> f64 {
    fn walk(source: &[f64], gap: &[Vec<f64>], node: usize, acc: f64, used: &mut Vec<bool>, best: &mut f64) {
        *best = best.min(acc + source[node]);
        for prev in 0..source.len() {
            if !used[prev] {
                used[prev] = true;
                walk(source, gap, prev, acc + gap[node][prev], used, best);
                used[prev] = false;
            }
        }
    }
    let mut used = vec![false; source.len()];
    used[target] = true;
    let mut best = f64::INFINITY;
    walk(source, gap, target, 0.0, &mut used, &mut best);
    best
}

fn chain_closure_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    let mut tables = 0;
    for size in 1..=6 {
        for k in 0..10 {
            let source: Vec<f64> = (0..size).map(|_| rng.gen_range(0.0..2.0)).collect();
            // odd k: mixed-sign gaps built from a potential, so no negative cycles
            let pot: Vec<f64> = (0..size).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let gap: Vec<Vec<f64>> = (0..size)
                .map(|v| {
                    (0..size)
                        .map(|u| {
                            if u == v {
                                0.0
                            } else if k % 2 == 0 {
                                rng.gen_range(0.0..1.0)
                            } else {
                                pot[u] - pot[v] + rng.gen_range(0.0..0.5)
                            }
                        })
                        .collect()
                })
                .collect();
            let tau = chain_closure(&source, &gap, 1e-12).unwrap();
            for s in 0..size {
                worst = worst.max((tau[s] - chain_oracle(&source, &gap, s)).abs());
            }
            tables += 1;
        }
    }
    outcome(worst <= 1e-9, format!("{tables} tables of 1..=6 points, max deviation {worst:.2e}"))
}

fn fee_feasibility() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for n in [2, 3] {
        let cfg = MechanismConfig::desk(n);
        let eq = solve_equilibrium(&cfg).unwrap();
        let table = value_tables(&eq.profile, &cfg, 0).unwrap();
        let tau = chain_closure_fee(&table, cfg.tolerances.fee).unwrap();
        let rep = verify_feasible(&tau, &table, cfg.tolerances.fee);
        let dom = dominance_check(&tau, &table, 100, 55 + n as u64, 1e-8);
        ok &= rep.feasible && dom.passed;
        detail.push(format!(
            "n={n}: IR/IC slack {:.1e}/{:.1e}, {}/{} dominated",
            rep.min_ir_slack, rep.min_ic_slack, dom.dominated, dom.trials
        ));
    }
    outcome(ok, detail.join("; "))
}

fn transform_gain() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let cfg = MechanismConfig::desk(2);
    let eq = solve_equilibrium(&cfg).unwrap();
    let mut ok = true;
    let mut min_gain = f64::INFINITY;
    let mut worst_rent: f64 = 0.0;
    for _ in 0..20 {
        let profile = sample_profile(&cfg, &eq.profile, &mut rng).unwrap();
        let m = random_feasible_mechanism(&cfg, &profile, &mut rng).unwrap();
        let rep = transform_report(&m, &cfg).unwrap();
        let rent_gap = (rep.after.total_rent() - rep.before.total_rent()).abs();
        worst_rent = worst_rent.max(rent_gap).max(rep.max_value_change);
        min_gain = min_gain.min(rep.after.revenue - rep.before.revenue);
        ok &= rep.feasible_after && rep.after.welfare >= rep.before.welfare - 1e-8;
    }
    ok &= worst_rent <= 1e-9 && min_gain >= -1e-9;
    outcome(
        ok,
        format!("20 mechanisms, rent change {worst_rent:.1e}, min revenue gain {min_gain:.3e}"),
    )
}

fn competitor_optimality() -> Outcome {
    let cfg = MechanismConfig::desk(2);
    let r = optimality_suite(&cfg, 100, 7).unwrap();
    outcome(
        r.passed,
        format!(
            "{} profiles ({} feasible) x {} fees: revenue excess {:.1e}, welfare excess {:.1e}, picks coincide {}",
            r.profiles, r.feasible_profiles, r.fee_family, r.revenue_excess, r.welfare_excess, r.picks_coincide
        ),
    )
}

fn monte_carlo() -> Outcome {
    let cfg = MechanismConfig::desk(2);
    let opt = optimal_mechanism(&cfg).unwrap();
    let mech = Mechanism::with_center_fees(opt.equilibrium.profile.clone(), &cfg, &opt.fees).unwrap();
    let exact = analytic_summary(&mech, &cfg).unwrap();
    let sum = run_batch(&mech, &cfg, 100_000, 2024).unwrap();
    let again = run_batch(&mech, &cfg, 100_000, 2024).unwrap();
    let replay = serde_json::to_string(&sum).unwrap() == serde_json::to_string(&again).unwrap()
        && simulate_records(&mech, &cfg, 500, 9).unwrap() == simulate_records(&mech, &cfg, 500, 9).unwrap();
    let ok = sum.revenue.covers(exact.revenue, 3.0) && sum.welfare.covers(exact.welfare, 3.0) && replay;
    outcome(
        ok,
        format!(
            "R {:.4} vs {:.4} (se {:.1e}), W {:.4} vs {:.4} (se {:.1e}), replay {}",
            sum.revenue.mean, exact.revenue, sum.revenue.se, sum.welfare.mean, exact.welfare, sum.welfare.se, replay
        ),
    )
}

fn audit_formulas() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut ok = deterrence_probability(0.0, 1.0, -1.0) == 0.5
        && (cost_audit_ratio(3.0, 1.0, 5.0, -1.0) - 0.4).abs() < 1e-15;
    for _ in 0..2000 {
        let phi = rng.gen_range(0.0..2.0);
        let psi = rng.gen_range(0.0..2.0);
        let p = -rng.gen_range(0.0..5.0);
        let q = deterrence_probability(phi, psi, p);
        let q2 = deterrence_probability(phi, psi, p * 2.0 - 1.0);
        let c = cost_audit_ratio(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), phi, p);
        ok &= (0.0..=1.0).contains(&q) && (0.0..=1.0).contains(&c) && q2 <= q;
    }
    let cfg = MechanismConfig::desk(2);
    let eq = solve_equilibrium(&cfg).unwrap();
    let table = value_tables(&eq.profile, &cfg, 0).unwrap();
    let plans: Vec<_> = [-1.0, -10.0, -100.0]
        .iter()
        .map(|&p| min_audit_experiments(&cfg, &table, p).unwrap())
        .collect();
    for w in plans.windows(2) {
        ok &= w[1].q.iter().zip(&w[0].q).all(|(a, b)| a <= b);
    }
    ok &= plans.iter().flat_map(|p| &p.q).all(|q| (0.0..=1.0).contains(q));
    outcome(ok, format!("desk q at P=-1: {:?}", plans[0].q))
}

fn decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst: f64 = 0.0;
    for n in [2, 3] {
        let cfg = MechanismConfig::desk(n);
        let eq = solve_equilibrium(&cfg).unwrap();
        for _ in 0..25 {
            let profile = sample_profile(&cfg, &eq.profile, &mut rng).unwrap();
            let m = random_feasible_mechanism(&cfg, &profile, &mut rng).unwrap();
            assert!(check_feasibility(&m, &cfg).unwrap().feasible);
            let v = evaluate(&m, &cfg).unwrap();
            worst = worst.max((v.welfare - v.revenue - v.total_rent()).abs());
            let a = analytic_summary(&Mechanism::zero_fees(m.profile.clone()), &cfg).unwrap();
            worst = worst.max((a.welfare - a.revenue - a.total_rent).abs());
        }
    }
    outcome(worst <= 1e-9, format!("50 mechanisms, max |W - R - rents| = {worst:.2e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("exact potential identity", Duration::from_secs(10), exact_potential),
        ("stage-2 truthfulness", Duration::from_secs(5), stage2_truthful),
        ("best-response oracle", Duration::from_secs(10), best_response_oracle),
        ("chain-closure oracle", Duration::from_secs(30), chain_closure_oracle),
        ("fee feasibility and maximality", Duration::from_secs(10), fee_feasibility),
        ("second-price transform", Duration::from_secs(30), transform_gain),
        ("optimality against competitors", Duration::from_secs(120), competitor_optimality),
        ("Monte Carlo consistency", Duration::from_secs(30), monte_carlo),
        ("audit formulas", Duration::from_secs(5), audit_formulas),
        ("welfare decomposition", Duration::from_secs(10), decomposition),
    ];
    let mut failed = 0;
    for (k, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let ok = out.ok && took <= *limit;
        failed += usize::from(!ok);
        println!(
            "{} criterion {:>2} {name}: {} [{:.2}s / {}s]",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            out.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
