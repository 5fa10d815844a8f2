use regime_coupling::analytic::survival_no_drift;
use regime_coupling::coupling::{CorrelationStrategy, VolatilityMap};
use regime_coupling::ctmc::ChainSpec;
use regime_coupling::simulate::{estimate_coupling_prob, CouplingMethod, McOptions};

fn main() {
    let chain = ChainSpec::single();
    let vol = VolatilityMap::constant(1.0, 2.0);
    let mc = McOptions::new(100_000, 3).with_step(1.0 / 256.0);
    for (s, rate) in [(CorrelationStrategy::Synchronous, 1.0), (CorrelationStrategy::Mirror, 9.0)] {
        let exact = survival_no_drift(-1.0, rate).unwrap();
        println!("{} (exact survival {exact:.5})", s.label());
        for m in [CouplingMethod::Conditional, CouplingMethod::Bridge, CouplingMethod::Naive] {
            let e = estimate_coupling_prob(&chain, &vol, &s, -1.0, 1.0, &mc, m).unwrap();
            println!("  {:<12} {:.5} ± {:.5}", m.label(), e.mean, e.std_error);
        }
    }
}
