use regime_coupling::ctmc::{sample_chain_path, transition_matrix, ChainSpec};
use regime_coupling::simulate::run_paths;

fn main() {
    let chain = ChainSpec::symmetric_two_state(1.0);
    let t = 0.75;
    let p = transition_matrix(&chain, t);
    let finals = run_paths(100_000, 1, None, |_, s| sample_chain_path(&chain, t, s).final_state());
    let freq = finals.iter().filter(|&&z| z == 0).count() as f64 / finals.len() as f64;
    println!("P(Z_t = 0 | Z_0 = 0): expm {:.5}, simulated {freq:.5}", p[(0, 0)]);

    let path = sample_chain_path(&chain, 3.0, &mut regime_coupling::rng::rng_stream(1, 0));
    for (a, b, z) in path.segments() {
        println!("  [{a:.3}, {b:.3})  state {}", chain.states[z].id);
    }
}
