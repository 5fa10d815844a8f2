use regime_coupling::analytic::{drift_survival_f, psi_c, psi_c_derivative_at_zero, survival_no_drift, DriftConfig};

fn main() {
    println!("G(-1, 1) = {:.6}", survival_no_drift(-1.0, 1.0).unwrap());
    println!("G(-1, 9) = {:.6}", survival_no_drift(-1.0, 9.0).unwrap());

    let cfg = DriftConfig::new(-1.0, 1.0, 2.0, 1.0).unwrap();
    for v in [cfg.v_sync(), cfg.v_mirror()] {
        let f = drift_survival_f(v, &cfg).unwrap();
        println!("F({v:.4}): literal {:.5}, reflection {:.5}", f.printed, f.reflection);
    }

    for c in [-0.3, 0.0, 0.3] {
        println!("psi_c(1, 1, 1) at c = {c:+.1}: {:.5}", psi_c(1.0, 1.0, 1.0, c).unwrap());
    }
    println!("d psi_c / dc at c = 0: {}", psi_c_derivative_at_zero(1.0, 1.0, 1.0));
}
