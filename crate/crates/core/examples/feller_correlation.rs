use regime_coupling::counterexamples::{run_independent_feller_counterexample, FellerConfig};
use regime_coupling::simulate::McOptions;

fn main() {
    let report = run_independent_feller_counterexample(&FellerConfig::default(), &McOptions::new(50_000, 4)).unwrap();
    print!("{}", report.to_text());
}
