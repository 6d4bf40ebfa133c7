use costly_auction::audit::min_audit_experiments;
use costly_auction::export::{
    profile_from_rows, profile_rows, read_audit, read_cost_fees, read_curve, read_fees,
    read_profile_rows, write_audit, write_cost_fees, write_curve, write_fees, write_profile,
};
use costly_auction::fees::chain_closure_by_cost;
use costly_auction::potential::curves;
use costly_auction::verify::optimal_mechanism;
use costly_auction::MechanismConfig;

#[test]
fn desk_artifacts_round_trip() {
    let cfg = MechanismConfig::desk(3);
    let opt = optimal_mechanism(&cfg).unwrap();
    let profile = &opt.equilibrium.profile;

    let mut buf = Vec::new();
    write_profile(profile, &cfg, &mut buf).unwrap();
    let rows = read_profile_rows(buf.as_slice()).unwrap();
    assert_eq!(rows, profile_rows(profile, &cfg));
    assert_eq!(&profile_from_rows(&rows, &cfg).unwrap(), profile);

    let curve = curves(profile, &cfg).unwrap().swap_remove(0);
    let mut buf = Vec::new();
    write_curve(&curve, &mut buf).unwrap();
    assert_eq!(read_curve(buf.as_slice()).unwrap(), curve);

    let mut buf = Vec::new();
    write_fees(&opt.fees, &mut buf).unwrap();
    assert_eq!(read_fees(buf.as_slice()).unwrap(), opt.fees);

    let cost_fees = chain_closure_by_cost(&opt.table, 1e-8).unwrap();
    let mut buf = Vec::new();
    write_cost_fees(&cost_fees, &mut buf).unwrap();
    assert_eq!(read_cost_fees(buf.as_slice()).unwrap(), cost_fees);

    let plan = min_audit_experiments(&cfg, &opt.table, -1.0).unwrap();
    let mut buf = Vec::new();
    write_audit(&plan, &mut buf).unwrap();
    let (params, q, cost) = read_audit(buf.as_slice()).unwrap();
    assert_eq!((params, q, cost), (plan.params, plan.q, plan.audit_cost));
}

#[test]
fn profile_rows_must_match_the_config() {
    let cfg = MechanismConfig::desk(2);
    let opt = optimal_mechanism(&cfg).unwrap();
    let mut rows = profile_rows(&opt.equilibrium.profile, &cfg);
    assert!(profile_from_rows(&rows, &MechanismConfig::desk(3)).is_err());
    rows[0].z = 1.1;
    assert!(profile_from_rows(&rows, &cfg).is_err());
}
