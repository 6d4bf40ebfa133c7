use costly_auction::audit::{
    compare_revenues, min_audit_costs, min_audit_experiments, no_audit_regime, noncompliant_values,
};
use costly_auction::fees::{
    chain_closure_by_cost, chain_closure_fee, dominance_check, value_tables, value_tables_for_curve,
    verify_feasible, FeeSchedule,
};
use costly_auction::potential::best_experiment;
use costly_auction::vcg::interim_curve;
use costly_auction::verify::{evaluate, optimal_mechanism, vertex_experiments};
use costly_auction::{
    solve_equilibrium, Anchor, CostModel, Error, Kernel, MechanismConfig, TypeGrid, ValueGrid,
};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

fn cfg_with(scale: f64, r: Vec<f64>, s: Vec<f64>, n: usize) -> MechanismConfig {
    MechanismConfig::new(
        n,
        ValueGrid::new(1.0, 2.0, 4).unwrap(),
        TypeGrid::uniform(r, s).unwrap(),
        CostModel::new(Kernel::Power { exponent: 2.0, scale }, Anchor::Report).unwrap(),
    )
    .unwrap()
}

#[test]
fn desk_chain_closure_fee() {
    let cfg = MechanismConfig::desk(2);
    let opt = optimal_mechanism(&cfg).unwrap();
    let want = [-1.0 / 18.0, 7.0 / 36.0, 4.0 / 9.0];
    for (f, w) in opt.fees.fees.iter().zip(want) {
        assert!(close(*f, w), "{:?}", opt.fees.fees);
    }
    let v = evaluate(&opt.mechanism, &cfg).unwrap();
    assert!(close(v.revenue, 535.0 / 324.0));
    assert!(close(v.welfare, 563.0 / 324.0));
    // net payoffs stay nonnegative at every grid type
    let t = &opt.table;
    for r in 0..3 {
        for s in 0..3 {
            assert!(t.phi[r][s] - opt.fees.fees[s] >= -cfg.tolerances.fee);
        }
    }
}

#[test]
fn diagonal_of_misreport_table_is_phi() {
    let cfg = MechanismConfig::desk(3);
    let eq = solve_equilibrium(&cfg).unwrap();
    let t = value_tables(&eq.profile, &cfg, 1).unwrap();
    for r in 0..3 {
        for s in 0..3 {
            assert_eq!(t.phi_mis[r][s][s], t.phi[r][s]);
        }
    }
}

#[test]
fn gaps_match_exhaustive_support_search() {
    let cfg = cfg_with(1.0, vec![0.0, 0.5, 1.0], vec![0.0, 1.0], 2);
    let g = &cfg.value_grid;
    let curve = interim_curve(g, &[vec![0.1, 0.3, 0.2, 0.3, 0.1]]);
    let t = value_tables_for_curve(&cfg, &curve).unwrap();
    let brute = |r: f64, s_true: f64, s_rep: f64| {
        vertex_experiments(g, g.center(s_rep), 1e-9)
            .iter()
            .map(|f| f.expect(&curve.pi) - cfg.cost_model.cost(g, r, s_true, f).unwrap())
            .fold(f64::NEG_INFINITY, f64::max)
    };
    for (a, b) in [(0, 1), (1, 0)] {
        let (sa, sb) = (cfg.type_grid.s_points()[a], cfg.type_grid.s_points()[b]);
        let h = [0.0, 0.5, 1.0]
            .iter()
            .map(|&r| brute(r, sa, sa) - brute(r, sa, sb))
            .fold(f64::INFINITY, f64::min);
        assert!(close(t.h[a][b], h));
    }
}

#[test]
fn single_center_fee_is_top_phi() {
    let cfg = cfg_with(1.0, vec![0.0, 1.0], vec![0.5], 2);
    let eq = solve_equilibrium(&cfg).unwrap();
    let t = value_tables(&eq.profile, &cfg, 0).unwrap();
    let tau = chain_closure_fee(&t, 1e-8).unwrap();
    assert_eq!(tau.fees, t.top_phi().to_vec());
}

#[test]
fn closure_fee_is_feasible_and_flat_fee_is_not() {
    let cfg = MechanismConfig::desk(2);
    let opt = optimal_mechanism(&cfg).unwrap();
    let t = &opt.table;
    assert!(verify_feasible(&opt.fees, t, 1e-8).feasible);
    let self_check = dominance_check(&opt.fees, t, 0, 1, 1e-8);
    assert!(self_check.passed);
    // negative center gaps: a flat fee meets IR but not every IC pair
    assert!(t.h.iter().flatten().any(|&h| h < 0.0));
    let low = t.top_phi().iter().copied().fold(f64::INFINITY, f64::min);
    let flat = verify_feasible(&FeeSchedule::flat(&t.s_points, low), t, 1e-8);
    assert!(flat.min_ir_slack >= 0.0);
    assert!(!flat.feasible);
}

#[test]
fn dominance_on_five_centers() {
    let cfg = cfg_with(1.0, vec![0.0, 0.5, 1.0], vec![0.0, 0.25, 0.5, 0.75, 1.0], 2);
    let eq = solve_equilibrium(&cfg).unwrap();
    let t = value_tables(&eq.profile, &cfg, 0).unwrap();
    match chain_closure_fee(&t, 1e-8) {
        Ok(tau) => {
            assert!(verify_feasible(&tau, &t, 1e-8).feasible);
            assert!(dominance_check(&tau, &t, 100, 5, 1e-8).passed);
        }
        // gap cycles below zero: no center-only fee satisfies every IC pair
        Err(e) => assert!(matches!(e, Error::NegativeCycle { .. })),
    }
}

#[test]
fn off_desk_centers_can_break_the_gap_premise() {
    let cfg = cfg_with(1.0, vec![0.0, 0.5, 1.0], vec![0.0, 0.25, 1.0], 2);
    let eq = solve_equilibrium(&cfg).unwrap();
    let t = value_tables(&eq.profile, &cfg, 0).unwrap();
    assert!(matches!(chain_closure_fee(&t, 1e-8), Err(Error::NegativeCycle { .. })));
}

#[test]
fn mean_anchor_reports_negative_cycle() {
    let mut cfg = MechanismConfig::desk(2);
    cfg.cost_model.anchor = Anchor::Mean;
    let eq = solve_equilibrium(&cfg).unwrap();
    let t = value_tables(&eq.profile, &cfg, 0).unwrap();
    assert!(matches!(chain_closure_fee(&t, 1e-8), Err(Error::NegativeCycle { .. })));
}

#[test]
fn desk_audit_probabilities() {
    let cfg = MechanismConfig::desk(2);
    let opt = optimal_mechanism(&cfg).unwrap();
    let plan = min_audit_experiments(&cfg, &opt.table, -1.0).unwrap();
    assert!(close(plan.q[0], 1.0 / 3.0) && close(plan.q[1], 1.0 / 6.0) && plan.q[2] == 0.0);
    assert!(close(plan.expected_audit_cost, 0.05 * 0.5 / 3.0));
    let psi = noncompliant_values(&opt.table).unwrap();
    for r in 0..3 {
        for s in 0..3 {
            for s2 in (0..3).filter(|&s2| s2 != s) {
                assert!(psi[r][s] >= opt.table.phi_mis[r][s][s2]);
            }
        }
    }
}

#[test]
fn free_information_deviation_value() {
    // r = 0 and increasing pi: the best other class is the extremal pair at the top center
    let cfg = cfg_with(1.0, vec![0.0, 1.0], vec![0.0, 0.5, 1.0], 2);
    let g = &cfg.value_grid;
    let curve = interim_curve(g, &[vec![0.2; 5]]);
    let t = value_tables_for_curve(&cfg, &curve).unwrap();
    let psi = noncompliant_values(&t).unwrap();
    let extremal = |s: f64| best_experiment(&cfg, &curve, 0.0, 0.0, s).unwrap().1;
    assert!(close(psi[0][0], extremal(0.5).max(extremal(1.0))));
    assert!(close(psi[0][0], curve.pi[4]));
}

#[test]
fn prohibitive_cost_needs_no_audit() {
    let cfg = cfg_with(1e6, vec![0.5, 1.0], vec![0.0, 0.5, 1.0], 2);
    let eq = solve_equilibrium(&cfg).unwrap();
    let t = value_tables(&eq.profile, &cfg, 0).unwrap();
    let psi = noncompliant_values(&t).unwrap();
    for r in 0..2 {
        for s in 0..3 {
            assert!(psi[r][s] <= t.phi[r][s]);
        }
    }
    assert!(min_audit_experiments(&cfg, &t, -1.0).unwrap().q.iter().all(|&q| q == 0.0));
}

#[test]
fn cost_audit_on_desk() {
    let cfg = MechanismConfig::desk(2);
    let opt = optimal_mechanism(&cfg).unwrap();
    let fees = chain_closure_by_cost(&opt.table, 1e-8).unwrap();
    let plan = min_audit_costs(&cfg, &opt.table, &fees, -1.0);
    assert!(plan.q.iter().all(|q| (0.0..=1.0).contains(q)));
    // the cheapest type pays the most; reports of a higher r save fees
    assert_eq!(plan.q[0], 0.0);
    assert!(plan.q[1] > 0.0);
    let flat = costly_auction::fees::CostIndexedFees {
        fees: vec![fees.fees[2].clone(); 3],
        ..fees
    };
    assert!(min_audit_costs(&cfg, &opt.table, &flat, -1.0).q.iter().all(|&q| q == 0.0));
}

#[test]
fn zero_cost_no_audit_regime_is_top_point_mass() {
    let cfg = cfg_with(0.0, vec![0.0, 1.0], vec![0.0, 0.5, 1.0], 2);
    let na = no_audit_regime(&cfg).unwrap();
    for f in na.equilibrium.profile.map(0) {
        assert!(f.mass()[4] > 1.0 - 1e-6);
    }
    assert!((na.stage2_revenue - 2.0).abs() < 1e-6);
    assert!(na.fees.iter().all(|f| f.abs() < 1e-6));
    assert!((na.revenue - 2.0).abs() < 1e-6);
}

#[test]
fn prohibitive_cost_no_audit_stays_at_centers() {
    let cfg = cfg_with(1e6, vec![0.5, 1.0], vec![0.0, 0.5, 1.0], 2);
    let na = no_audit_regime(&cfg).unwrap();
    for c in cfg.type_grid.cells() {
        let j = cfg.value_grid.index_of(cfg.value_grid.center(c.s), 1e-12).unwrap();
        assert_eq!(na.equilibrium.profile.experiment(0, c.index).mass()[j], 1.0);
    }
    let lowest = (0..3).map(|s| na.phi[0][s].min(na.phi[1][s])).fold(f64::INFINITY, f64::min);
    assert!(close(na.fees[0], lowest));
}

#[test]
fn desk_revenue_comparison() {
    let cfg = MechanismConfig::desk(2);
    let opt = optimal_mechanism(&cfg).unwrap();
    let full = evaluate(&opt.mechanism, &cfg).unwrap().revenue;
    let plan = min_audit_experiments(&cfg, &opt.table, -1.0).unwrap();
    let na = no_audit_regime(&cfg).unwrap();
    assert!(na.equilibrium.epsilon < 1e-8);
    assert!((na.revenue - 1.5809220511621513).abs() < 1e-8);
    let cmp = compare_revenues(full, &[plan.clone(), plan], na.revenue, 1e-9);
    assert!(cmp.ordering_holds);
    assert!(close(cmp.audited + cmp.total_audit_cost, full));
}

#[test]
fn no_audit_can_out_earn_full_verification() {
    // three bidders: dropping the center constraint raises stage-2 revenue by more than the lost fees
    let cfg = MechanismConfig::desk(3);
    let opt = optimal_mechanism(&cfg).unwrap();
    let full = evaluate(&opt.mechanism, &cfg).unwrap().revenue;
    let na = no_audit_regime(&cfg).unwrap();
    assert!(close(full, 1.7268518518518519));
    assert!((na.revenue - 1.760_994_545_765_192).abs() < 1e-8);
    let plan = min_audit_experiments(&cfg, &opt.table, -1.0).unwrap();
    assert!(!compare_revenues(full, &vec![plan; 3], na.revenue, 1e-9).ordering_holds);
}
