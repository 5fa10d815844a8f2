use regime_coupling::rng::rng_stream;
use regime_coupling::simulate::run_paths;

fn main() {
    let draw = |workers| run_paths(8, 42, Some(workers), |i, s| (i, s.normal()));
    let one = draw(1);
    let four = draw(4);
    assert_eq!(one, four);
    for (i, x) in &one {
        println!("path {i}: {x:+.6}");
    }
    let mut a = rng_stream(42, 3);
    println!("stream (42, 3) again: {:+.6}", a.normal());
}
