use regime_coupling::counterexamples::{
    build_semi_markov_chain, run_semi_markov_counterexample, sample_exit_skeleton, unit_exit_cdf, SemiMarkovConfig,
};
use regime_coupling::rng::rng_stream;
use regime_coupling::simulate::McOptions;

fn main() {
    for t in [0.25, 0.5, 1.0, 2.0] {
        println!("P(exit of [-1, 1] before {t}) = {:.5}", unit_exit_cdf(t));
    }
    let mut s = rng_stream(1, 0);
    let skeleton = sample_exit_skeleton(0.1, 1.0, 1.0, &mut s).unwrap();
    println!("{} exits on [0, 1], Z_1 = {:.4}", skeleton.n_exits(), skeleton.z_at(1.0));
    let path = build_semi_markov_chain(0.1, 1.0, 1.0, 64, &mut s).unwrap();
    println!("sandwich holds on one path: {}", path.sandwich_holds());
    let report = run_semi_markov_counterexample(&SemiMarkovConfig::default(), &McOptions::new(2000, 2)).unwrap();
    print!("{}", report.to_text());
}
