use regime_coupling::counterexamples::{run_gbm_counterexample, GbmConfig};
use regime_coupling::simulate::McOptions;

fn main() {
    let report = run_gbm_counterexample(&GbmConfig::new(0.0, 0.0, 1.0, 1.0), &McOptions::new(20_000, 5)).unwrap();
    print!("{}", report.to_text());
}
