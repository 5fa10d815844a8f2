use regime_coupling::analytic::{normal_cdf, survival_no_drift};
use regime_coupling::coupling::{AdaptedRule, CorrelationStrategy, CostFunction, VolatilityMap};
use regime_coupling::ctmc::ChainSpec;
use regime_coupling::simulate::{
    estimate_coupling_prob, estimate_tracking, estimate_tracking_conditional, exact_quadratic_tracking,
    sample_terminal, write_estimate_rows, CouplingMethod, EstimateRow, McOptions,
};
use regime_coupling::stats::{ks_critical_01, ks_statistic};

fn two_state() -> (ChainSpec, VolatilityMap) {
    (ChainSpec::symmetric_two_state(1.0), VolatilityMap::new(vec![1.0, 2.0], vec![2.0, 1.0]))
}

#[test]
fn constant_strategies_have_gaussian_terminal_law() {
    let (chain, vol) = two_state();
    for c in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let s = CorrelationStrategy::Constant(c);
        let r = sample_terminal(&chain, &vol, &s, 1.0, 1.0, &McOptions::new(5000, 3)).unwrap();
        let sd = (5.0 - 4.0 * c).sqrt();
        let d = ks_statistic(&r, |x| normal_cdf((x - 1.0) / sd));
        assert!(d < ks_critical_01(5000), "c = {c}: D = {d}");
    }
}

#[test]
fn quadratic_tracking_matches_exact_value() {
    let (chain, vol) = two_state();
    let mc = McOptions::new(50_000, 4);
    for s in [
        CorrelationStrategy::Synchronous,
        CorrelationStrategy::Mirror,
        CorrelationStrategy::StateFeedback(vec![0.3, -0.7]),
    ] {
        let exact = exact_quadratic_tracking(&chain, &vol, &s, 1.0, 1.0).unwrap();
        let est = estimate_tracking(&chain, &vol, &s, &CostFunction::Quadratic, 1.0, 1.0, &mc).unwrap();
        assert!(est.agrees_with(exact, 4.0), "{}: {est:?} vs {exact}", s.label());
        let cond = estimate_tracking_conditional(&chain, &vol, &s, &CostFunction::Quadratic, 1.0, 1.0, &mc).unwrap();
        assert!(cond.agrees_with(exact, 4.0), "{}: {cond:?} vs {exact}", s.label());
    }
}

#[test]
fn adapted_strategy_lies_between_extremes() {
    let (chain, vol) = two_state();
    let mc = McOptions::new(20_000, 5);
    let phi = CostFunction::Power(4.0);
    let est = |s: CorrelationStrategy| estimate_tracking(&chain, &vol, &s, &phi, 1.0, 1.0, &mc).unwrap().mean;
    let adapted = est(CorrelationStrategy::Adapted(AdaptedRule::builtin("drawdown").unwrap()));
    assert!(est(CorrelationStrategy::Synchronous) < adapted);
    assert!(adapted < est(CorrelationStrategy::Mirror));
}

#[test]
fn estimates_do_not_depend_on_workers() {
    let (chain, vol) = two_state();
    let s = CorrelationStrategy::Adapted(AdaptedRule::builtin("tanh_r").unwrap());
    let run = |w: usize| {
        let mc = McOptions::new(3000, 8).with_workers(w);
        (
            estimate_tracking(&chain, &vol, &s, &CostFunction::Quadratic, 1.0, 1.0, &mc).unwrap(),
            estimate_coupling_prob(&chain, &vol, &CorrelationStrategy::Mirror, -1.0, 1.0, &mc, CouplingMethod::Bridge)
                .unwrap(),
        )
    };
    assert_eq!(run(1), run(3));
    assert_eq!(run(1), run(8));
}

#[test]
fn bridge_survival_matches_driftless_formula() {
    let (chain, vol) = (ChainSpec::single(), VolatilityMap::constant(1.0, 2.0));
    let mc = McOptions::new(40_000, 9).with_step(1.0 / 64.0);
    for (s, rate) in [(CorrelationStrategy::Synchronous, 1.0), (CorrelationStrategy::Mirror, 9.0)] {
        let est = estimate_coupling_prob(&chain, &vol, &s, -1.0, 1.0, &mc, CouplingMethod::Bridge).unwrap();
        let exact = survival_no_drift(-1.0, rate).unwrap();
        assert!(est.agrees_with(exact, 4.0), "{}: {est:?} vs {exact}", s.label());
    }
}

#[test]
fn naive_monitoring_overstates_survival() {
    let (chain, vol) = (ChainSpec::single(), VolatilityMap::constant(1.0, 2.0));
    let mc = McOptions::new(40_000, 10).with_step(1.0 / 16.0);
    let s = CorrelationStrategy::Mirror;
    let naive = estimate_coupling_prob(&chain, &vol, &s, -1.0, 1.0, &mc, CouplingMethod::Naive).unwrap();
    assert!(naive.mean - survival_no_drift(-1.0, 9.0).unwrap() > 5.0 * naive.std_error);
}

#[test]
fn estimate_csv_layout() {
    let (chain, vol) = two_state();
    let mc = McOptions::new(500, 1);
    let s = CorrelationStrategy::Constant(0.5);
    let est = estimate_tracking(&chain, &vol, &s, &CostFunction::Quadratic, 1.0, 1.0, &mc).unwrap();
    let row = EstimateRow::new("tracking", &s, "quadratic", 1.0, 1.0, &est, "direct", 1);
    let mut buf = Vec::new();
    write_estimate_rows(&[row], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario_id,strategy,phi,r0,horizon,n_paths,mean,std_error,ci_low,ci_high,method,seed"
    );
    assert!(lines.next().unwrap().starts_with("tracking,constant(0.5),quadratic,1.0,1.0,500,"));
}
