use std::path::Path;

use regime_coupling::battery::tracking_battery;
use regime_coupling::config::load_config;

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/two_state.json");
    let mut cfg = load_config(&path).unwrap();
    cfg.monte_carlo.n_paths = 20_000;
    let out = tracking_battery(&cfg, &cfg.mc_options()).unwrap();
    print!("{}", out.report.to_text());
    println!("{} estimate rows", out.rows.len());
}
