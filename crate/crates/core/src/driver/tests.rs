use super::*;
use crate::case::{
    build_instance, parse_case, Branch, Bus, Cost, Generator, Load, LoadProfile, LowerLevelModel, Network, StorageSpec,
};
use crate::data;
use crate::reduce::TechniqueKind;

fn two_bus(c2: f64) -> BilevelInstance {
    let net = Network {
        name: "two".into(),
        base_mva: 100.0,
        buses: vec![
            Bus { id: 1, vmin: 0.9, vmax: 1.1, gs: 0.0, bs: 0.0 },
            Bus { id: 2, vmin: 0.9, vmax: 1.1, gs: 0.0, bs: 0.0 },
        ],
        generators: vec![Generator {
            bus: 1,
            pmin: 0.0,
            pmax: 10.0,
            qmin: -10.0,
            qmax: 10.0,
            cost: Cost { c2, c1: 20.0, c0: 0.0 },
        }],
        branches: vec![Branch { from: 1, to: 2, r: 0.0, x: 0.1, b: 0.0, rate: None, tap: 1.0, shift: 0.0 }],
        loads: vec![Load { bus: 2, pd: 1.0, qd: 0.0 }],
    };
    let mut storage = StorageSpec::new(2);
    storage.initial_fraction = 0.0;
    build_instance(net, &LoadProfile::flat(4), storage, LowerLevelModel::Dc, 0.85).unwrap()
}

fn three_bus_dc(hours: usize) -> BilevelInstance {
    let profile = LoadProfile::new(data_profile()[..hours].to_vec()).unwrap();
    build_instance(parse_case(data::CASE3).unwrap(), &profile, StorageSpec::new(3), LowerLevelModel::Dc, 0.85).unwrap()
}

fn data_profile() -> Vec<f64> {
    LoadProfile::winter_weekday().factors().to_vec()
}

fn opts() -> SolveOptions {
    SolveOptions { starts: 2, ..SolveOptions::default() }
}

#[test]
fn flat_prices_leave_the_storage_idle() {
    let inst = two_bus(0.0);
    let run = run_sequential(&inst, &TechniqueSpec::new(TechniqueKind::Sm1), &opts(), 1).unwrap();
    let r = run.last();
    assert!(r.computed_profit.abs() < 1e-6, "{}", r.computed_profit);
    assert!(r.actual_profit.abs() < 1e-6, "{}", r.actual_profit);
    assert!(run.p_bids.iter().all(|p| p.abs() < 1e-6), "{:?}", run.p_bids);
}

#[test]
fn zero_bids_reproduce_the_idle_market() {
    let inst = three_bus_dc(4);
    let t = inst.horizon();
    let v = verify(&inst, &vec![0.0; t], &[], &opts()).unwrap();
    let (_, _, op) = screen_limits(&inst, &Screen::none(), &vec![0.0; t], &vec![0.0; t], &opts()).unwrap();
    assert_eq!(v.actual_profit, 0.0);
    assert!((v.actual_expenses - op.primal_objective).abs() <= 1e-9 * op.primal_objective.abs());
    assert!(v.violations.is_empty());
}

#[test]
fn bids_beyond_the_rating_are_rejected() {
    let inst = three_bus_dc(2);
    let err = verify(&inst, &[5.0, 0.0], &[], &opts()).unwrap_err();
    assert!(matches!(err, DriverError::Bids(_)), "{err}");
}

#[test]
fn outer_iterations_are_reported_in_order() {
    let inst = three_bus_dc(6);
    let spec = TechniqueSpec::new(TechniqueKind::Sm2).with_eps(1e-3);
    let run = run_sequential(&inst, &spec, &opts(), 2).unwrap();
    assert_eq!(run.reports.iter().map(|r| r.outer_iteration).collect::<Vec<_>>(), vec![1, 2]);
    for r in &run.reports {
        assert!(r.violations.is_empty());
        assert!(r.duality_gap_pct.abs() <= 1e-5, "{}", r.duality_gap_pct);
        assert!(r.profit_diff_pct.is_finite());
    }
}

#[test]
fn failures_stay_in_the_table() {
    let inst = two_bus(0.0);
    let specs = [TechniqueSpec::new(TechniqueKind::Pd), TechniqueSpec::new(TechniqueKind::PdS)];
    let rows = compare_techniques(&inst, &specs, &opts()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].status, "Optimal");
    assert!(rows[1].status.contains("strengthening"), "{}", rows[1].status);
    assert!(rows[1].computed_profit.is_nan());
}

#[test]
fn reactive_study_needs_reactive_prices() {
    let inst = two_bus(0.0);
    let err = reactive_benefit_study(&inst, &TechniqueSpec::new(TechniqueKind::Sm1), &opts()).unwrap_err();
    assert!(matches!(err, DriverError::Case(_)));
}

#[test]
fn diff_pct_edges() {
    assert_eq!(diff_pct(0.0, 0.0), 0.0);
    assert!(diff_pct(1.0, 0.0).is_nan());
    assert!((diff_pct(110.0, 100.0) - 10.0).abs() < 1e-12);
    assert!((diff_pct(90.0, -100.0) - 190.0).abs() < 1e-12);
}
