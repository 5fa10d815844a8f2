use regime_coupling::coupling::{CostFunction, VolatilityMap};
use regime_coupling::ctmc::ChainSpec;
use regime_coupling::hjb::{solve_coupling_value, solve_tracking_value, verify_hjb_extremality, FieldKind, GridSpec, DEFAULT_TAIL};

fn main() {
    let chain = ChainSpec::symmetric_two_state(1.0);
    let vol = VolatilityMap::new(vec![1.0, 2.0], vec![2.0, 1.0]);
    let phi = CostFunction::CallOnDifference(1.0);
    let grid = GridSpec::tracking(10.0, 0.05, 1.0, &chain, &vol);
    for kind in [FieldKind::TrackingI, FieldKind::TrackingII] {
        let f = solve_tracking_value(&chain, &vol, &phi, &grid, kind).unwrap();
        let rep = verify_hjb_extremality(&f, &chain, &vol, 21);
        println!("{}: value at r = 1 is {:.5}, extremality {}", kind.label(), f.probe(1.0, 0), rep.passed);
    }
    let grid = GridSpec::coupling(0.05, 1.0, DEFAULT_TAIL, &chain, &vol);
    for kind in [FieldKind::CouplingI, FieldKind::CouplingII] {
        let f = solve_coupling_value(&chain, &vol, &grid, kind).unwrap();
        let rep = verify_hjb_extremality(&f, &chain, &vol, 21);
        println!("{}: survival from r = -1 is {:.5}, extremality {}", kind.label(), f.probe(-1.0, 0), rep.passed);
    }
}
