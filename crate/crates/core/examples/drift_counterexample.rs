use regime_coupling::counterexamples::{run_drift_counterexample, DriftScenario};
use regime_coupling::simulate::McOptions;

fn main() {
    let mc = McOptions::new(50_000, 5);
    for mu in [1.0, 3.0] {
        let scenario = DriftScenario::new(-1.0, mu, 2.0, 1.0).unwrap();
        print!("{}", run_drift_counterexample(&scenario, &mc).unwrap().to_text());
    }
}
