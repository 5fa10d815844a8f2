use regime_coupling::analytic::survival_no_drift;
use regime_coupling::coupling::{CostFunction, VolatilityMap};
use regime_coupling::ctmc::ChainSpec;
use regime_coupling::hjb::{
    coupling_monotone, fields_ordered, solve_coupling_value, solve_tracking_value, verify_hjb_extremality,
    FieldKind, GridSpec, GridValue, HjbError, DEFAULT_TAIL,
};

fn two_state() -> (ChainSpec, VolatilityMap) {
    (ChainSpec::symmetric_two_state(1.0), VolatilityMap::new(vec![1.0, 2.0], vec![2.0, 1.0]))
}

#[test]
fn quadratic_fields_are_exact_on_single_state() {
    let (chain, vol) = (ChainSpec::single(), VolatilityMap::constant(1.0, 2.0));
    let grid = GridSpec::tracking(16.0, 0.05, 0.5, &chain, &vol);
    for (kind, rate) in [(FieldKind::TrackingI, 1.0), (FieldKind::TrackingII, 9.0)] {
        let f = solve_tracking_value(&chain, &vol, &CostFunction::Quadratic, &grid, kind).unwrap();
        for r in [-1.0, 0.0, 0.5, 2.0] {
            let expected = r * r + rate * 0.5;
            assert!((f.probe(r, 0) - expected).abs() < 1e-6, "{kind:?} at {r}: {}", f.probe(r, 0));
        }
    }
}

#[test]
fn coupling_fields_match_survival_formula() {
    let (chain, vol) = (ChainSpec::single(), VolatilityMap::constant(1.0, 2.0));
    let grid = GridSpec::coupling(0.02, 1.0, DEFAULT_TAIL, &chain, &vol);
    for (kind, rate) in [(FieldKind::CouplingI, 1.0), (FieldKind::CouplingII, 9.0)] {
        let f = solve_coupling_value(&chain, &vol, &grid, kind).unwrap();
        for r in [-0.5, -1.0, -2.0] {
            let exact = survival_no_drift(r, rate).unwrap();
            assert!((f.probe(r, 0) - exact).abs() < 2e-3, "{kind:?} at {r}: {} vs {exact}", f.probe(r, 0));
        }
        assert!(coupling_monotone(&f, 1e-9));
    }
}

#[test]
fn two_state_fields_are_ordered_and_extremal() {
    let (chain, vol) = two_state();
    let grid = GridSpec::tracking(6.0, 0.1, 0.25, &chain, &vol);
    let phi = CostFunction::CallOnDifference(1.0);
    let one = solve_tracking_value(&chain, &vol, &phi, &grid, FieldKind::TrackingI).unwrap();
    let two = solve_tracking_value(&chain, &vol, &phi, &grid, FieldKind::TrackingII).unwrap();
    assert!(fields_ordered(&one, &two, 1e-9));
    for f in [&one, &two] {
        let rep = verify_hjb_extremality(f, &chain, &vol, 21);
        assert!(rep.passed, "{rep:?}");
        assert!(rep.nodes_checked > 0);
    }
}

#[test]
fn unstable_grid_is_rejected() {
    let (chain, vol) = two_state();
    let mut grid = GridSpec::tracking(4.0, 0.1, 1.0, &chain, &vol);
    grid.n_t /= 2;
    let err = solve_tracking_value(&chain, &vol, &CostFunction::Quadratic, &grid, FieldKind::TrackingI).unwrap_err();
    assert!(matches!(err, HjbError::UnstableGrid { .. }));
}

#[test]
fn equal_volatilities_have_no_kind_one_coupling_field() {
    let (chain, vol) = (ChainSpec::single(), VolatilityMap::constant(1.5, 1.5));
    let grid = GridSpec::coupling(0.05, 1.0, DEFAULT_TAIL, &chain, &vol);
    let err = solve_coupling_value(&chain, &vol, &grid, FieldKind::CouplingI).unwrap_err();
    assert!(matches!(err, HjbError::DegenerateKindI { state: 0 }));
}

#[test]
fn binary_dump_round_trips() {
    let (chain, vol) = two_state();
    let grid = GridSpec::tracking(3.0, 0.2, 0.1, &chain, &vol);
    let f: GridValue = solve_tracking_value(&chain, &vol, &CostFunction::Power(4.0), &grid, FieldKind::TrackingII).unwrap();
    let mut buf = Vec::new();
    f.write_binary(&mut buf).unwrap();
    let (kind, n_r, n_states, levels, values) = GridValue::read_binary(&buf).unwrap();
    assert_eq!(kind, FieldKind::TrackingII);
    assert_eq!((n_r, n_states, levels), (grid.n_r, 2, grid.n_t + 1));
    assert_eq!(values[0], f.value(0, 0, 0));
    assert_eq!(*values.last().unwrap(), f.value(n_r - 1, 1, grid.n_t));
    assert!(GridValue::read_binary(b"nope").is_err());
}

#[test]
fn sparse_csv_has_requested_levels() {
    let (chain, vol) = two_state();
    let grid = GridSpec::tracking(2.0, 0.2, 0.1, &chain, &vol);
    let f = solve_tracking_value(&chain, &vol, &CostFunction::Quadratic, &grid, FieldKind::TrackingI).unwrap();
    let levels = f.sparse_levels(4);
    assert_eq!(levels.first(), Some(&0));
    assert_eq!(levels.last(), Some(&grid.n_t));
    let mut buf = Vec::new();
    f.write_csv_levels(&chain, &levels, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("r,state_id,t,value"));
    assert_eq!(text.lines().count(), 1 + levels.len() * 2 * grid.n_r);
}
