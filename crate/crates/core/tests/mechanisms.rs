use costly_auction::fees::value_tables;
use costly_auction::verify::{
    check_feasibility, evaluate, transform_report, optimal_mechanism, random_feasible_mechanism,
    optimality_suite, type_fee_closure, Constraint, Stage2Table, TabulatedMechanism,
};
use costly_auction::{
    solve_equilibrium, Anchor, CostModel, Kernel, MechanismConfig, TypeGrid, ValueGrid,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(scale: f64, intervals: usize, n: usize) -> MechanismConfig {
    MechanismConfig::new(
        n,
        ValueGrid::new(1.0, 2.0, intervals).unwrap(),
        TypeGrid::uniform(vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 1.0]).unwrap(),
        CostModel::new(Kernel::Power { exponent: 2.0, scale }, Anchor::Report).unwrap(),
    )
    .unwrap()
}

#[test]
fn optimal_mechanism_is_feasible_and_decomposes() {
    for n in [2, 3] {
        let c = MechanismConfig::desk(n);
        let opt = optimal_mechanism(&c).unwrap();
        assert!(check_feasibility(&opt.mechanism, &c).unwrap().feasible);
        let v = evaluate(&opt.mechanism, &c).unwrap();
        assert!((v.welfare - v.revenue - v.total_rent()).abs() < 1e-12);
    }
}

#[test]
fn transform_leaves_second_price_mechanism_alone() {
    let c = MechanismConfig::desk(2);
    let opt = optimal_mechanism(&c).unwrap();
    let rep = transform_report(&opt.mechanism, &c).unwrap();
    assert!(rep.feasible_after);
    assert!(rep.max_value_change < 1e-12);
    assert!((rep.after.revenue - rep.before.revenue).abs() < 1e-12);
}

#[test]
fn lottery_mix_gains_revenue_under_transform() {
    let c = cfg(1.0, 3, 2);
    let eq = solve_equilibrium(&c).unwrap();
    let vcg = Stage2Table::vcg(&c.value_grid, 2).unwrap();
    let lottery = Stage2Table::lottery(&c.value_grid, 2).unwrap();
    let stage2 = Stage2Table::mixture(&[(0.5, &vcg), (0.5, &lottery)]).unwrap();
    let fees = (0..2)
        .map(|i| type_fee_closure(&stage2, &eq.profile, &c, i).unwrap().0)
        .collect();
    let m = TabulatedMechanism::new(stage2, eq.profile.clone(), fees).unwrap();
    assert!(check_feasibility(&m, &c).unwrap().feasible);
    let rep = transform_report(&m, &c).unwrap();
    assert!(rep.feasible_after);
    assert!(rep.max_value_change < 1e-12);
    assert!(rep.after.revenue > rep.before.revenue + 1e-3);
    assert!(rep.after.welfare > rep.before.welfare + 1e-3);
}

#[test]
fn random_mechanisms_never_lose_under_transform() {
    let c = MechanismConfig::desk(2);
    let eq = solve_equilibrium(&c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let m = random_feasible_mechanism(&c, &eq.profile, &mut rng).unwrap();
        let rep = transform_report(&m, &c).unwrap();
        assert!(rep.feasible_after);
        assert!(rep.after.revenue >= rep.before.revenue - 1e-12);
    }
}

#[test]
fn first_price_stage_two_is_not_truthful() {
    let c = MechanismConfig::desk(2);
    let eq = solve_equilibrium(&c).unwrap();
    let fp = Stage2Table::first_price(&c.value_grid, 2).unwrap();
    let zero = vec![vec![0.0; c.type_grid.len()]; 2];
    let m = TabulatedMechanism::new(fp, eq.profile, zero).unwrap();
    let rep = check_feasibility(&m, &c).unwrap();
    assert!(!rep.passes(Constraint::Stage2Ic));
    assert!(transform_report(&m, &c).is_err());
}

#[test]
fn fee_above_top_cost_value_breaks_participation() {
    let c = MechanismConfig::desk(2);
    let opt = optimal_mechanism(&c).unwrap();
    let table = value_tables(&opt.equilibrium.profile, &c, 0).unwrap();
    let mut fees = opt.fees.clone();
    fees.fees[1] = table.top_phi()[1] + 0.01;
    let m = TabulatedMechanism::with_center_fees(&c, opt.equilibrium.profile.clone(), &fees).unwrap();
    let rep = check_feasibility(&m, &c).unwrap();
    assert!(!rep.passes(Constraint::Stage1Ir));
    let top = c.type_grid.index(c.type_grid.top_r(), 1);
    assert!(rep
        .violations
        .iter()
        .any(|v| v.constraint == Constraint::Stage1Ir && v.at == top));
}

#[test]
fn zero_cost_suite_passes() {
    let rep = optimality_suite(&cfg(0.0, 4, 2), 20, 1).unwrap();
    assert!(rep.optimal_feasible && rep.passed);
    assert!((rep.optimal_revenue - 1.75).abs() < 1e-12);
}

#[test]
fn prohibitive_cost_keeps_centers_and_passes() {
    let c = cfg(1e6, 4, 2);
    let eq = solve_equilibrium(&c).unwrap();
    for cell in c.type_grid.cells().filter(|cell| cell.r > 0.0) {
        let j = c.value_grid.index_of(c.value_grid.center(cell.s), 1e-12).unwrap();
        assert_eq!(eq.profile.experiment(0, cell.index).mass()[j], 1.0);
    }
    let rep = optimality_suite(&c, 20, 1).unwrap();
    assert!(rep.passed);
    assert_eq!(rep.feasible_profiles, 1);
}

#[test]
fn mid_cost_revenue_is_not_exceeded() {
    for (scale, intervals) in [(0.2, 4), (0.5, 3), (0.5, 4), (2.0, 3)] {
        let rep = optimality_suite(&cfg(scale, intervals, 2), 50, 7).unwrap();
        assert!(rep.optimal_feasible);
        assert!(rep.revenue_excess <= 1e-9, "scale {scale}: {}", rep.revenue_excess);
    }
}

#[test]
fn asymmetric_vertex_profile_can_beat_the_symmetric_optimum() {
    // low cost, off-grid middle center: splitting one type's spread across
    // bidders raises both welfare and revenue above the symmetric maximizer
    let c = cfg(0.05, 3, 2);
    let eq = solve_equilibrium(&c).unwrap();
    assert!(eq.epsilon < 1e-8);
    let rep = optimality_suite(&c, 50, 7).unwrap();
    assert!(rep.optimal_feasible);
    assert!(rep.revenue_excess > 1e-5);
    assert!(rep.welfare_excess > 1e-3);
    let sup = &rep.best_revenue.supports;
    assert_ne!(sup[0], sup[1]);
    assert!((rep.best_revenue.revenue - 1.7257716049382719).abs() < 1e-12);
}
