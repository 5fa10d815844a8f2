use regime_coupling::counterexamples::{build_poisson_sampled_chain, distance_study, MarkRule, PoissonConfig};
use regime_coupling::rng::rng_stream;
use regime_coupling::simulate::McOptions;

fn main() {
    let p = build_poisson_sampled_chain(0.2, 1.0, 1.0, MarkRule::Positive, 256, &mut rng_stream(3, 0)).unwrap();
    println!(
        "{} base points, {} retained, Z_1 = {:.4}, Z^eps_1 = {:.4}",
        p.base_times.len(),
        p.retained_times.len(),
        p.z.last().unwrap(),
        p.z_eps.last().unwrap()
    );
    let study = distance_study(&PoissonConfig::default(), &McOptions::new(20_000, 3)).unwrap();
    for row in &study.rows {
        println!("eps {:<5} integrated squared distance {:.4} ± {:.4}", row.epsilon, row.distance.mean, row.distance.std_error);
    }
    for s in &study.steps {
        println!("paired step {:.4} ± {:.4}", s.mean, s.std_error);
    }
}
