use regime_coupling::coupling::{AdaptedRule, CorrelationStrategy, CostFunction, VolatilityMap};
use regime_coupling::ctmc::ChainSpec;
use regime_coupling::simulate::{estimate_tracking_many, McOptions};

fn main() {
    let chain = ChainSpec::symmetric_two_state(1.0);
    let vol = VolatilityMap::new(vec![1.0, 2.0], vec![2.0, 1.0]);
    let phis = [CostFunction::Quadratic, CostFunction::Power(4.0), CostFunction::CallOnDifference(1.0)];
    let strategies = [
        CorrelationStrategy::Synchronous,
        CorrelationStrategy::Constant(0.5),
        CorrelationStrategy::Constant(0.0),
        CorrelationStrategy::Adapted(AdaptedRule::builtin("tanh_r").unwrap()),
        CorrelationStrategy::Mirror,
    ];
    let mc = McOptions::new(50_000, 7);
    println!("{:<18}{:>14}{:>14}{:>14}", "strategy", "quadratic", "power(4)", "call(1)");
    for s in &strategies {
        let ests = estimate_tracking_many(&chain, &vol, s, &phis, 1.0, 1.0, &mc).unwrap();
        print!("{:<18}", s.label());
        for e in ests {
            print!("{:>14}", format!("{:.3}±{:.3}", e.mean, e.std_error));
        }
        println!();
    }
}
