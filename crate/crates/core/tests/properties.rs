use proptest::prelude::*;
use regime_coupling::analytic::{normal_cdf, normal_quantile, psi_c_pde_residual, survival_no_drift};
use regime_coupling::ctmc::{sample_chain_path, transition_matrix, validate_chain, ChainSpec};
use regime_coupling::rng::rng_stream;
use regime_coupling::simulate::run_paths;

fn generator() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..5).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec(0.05f64..3.0, n), n).prop_map(|mut rows| {
            for (i, row) in rows.iter_mut().enumerate() {
                row[i] = 0.0;
                row[i] = -row.iter().sum::<f64>();
            }
            rows
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transition_rows_are_distributions(q in generator(), t in 0.0f64..3.0) {
        let chain = validate_chain(ChainSpec::from_generator(q, 0)).unwrap();
        let p = transition_matrix(&chain, t);
        for i in 0..chain.n_states() {
            let row = p.row(i);
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&x| x > -1e-12));
        }
    }

    #[test]
    fn sampled_paths_are_consistent(q in generator(), seed in any::<u64>(), horizon in 0.1f64..5.0) {
        let chain = validate_chain(ChainSpec::from_generator(q, 0)).unwrap();
        let path = sample_chain_path(&chain, horizon, &mut rng_stream(seed, 0));
        let total: f64 = (0..chain.n_states()).map(|z| path.time_in(z)).sum();
        prop_assert!((total - horizon).abs() < 1e-9);
        prop_assert_eq!(path.initial_state(), 0);
        prop_assert_eq!(path.state_at(horizon), path.final_state());
    }

    #[test]
    fn survival_is_a_probability_decreasing_in_variance(r in -5.0f64..-0.01, a in 0.01f64..20.0) {
        let g = survival_no_drift(r, a).unwrap();
        prop_assert!((0.0..=1.0).contains(&g));
        prop_assert!(survival_no_drift(r, 2.0 * a).unwrap() <= g + 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf(p in 1e-10f64..(1.0 - 1e-10)) {
        prop_assert!((normal_cdf(normal_quantile(p)) - p).abs() < 1e-9 * p.min(1.0 - p) + 1e-15);
    }

    #[test]
    fn fourth_moment_solves_its_pde(r in -2.0f64..2.0, z in -2.0f64..2.0, t in 0.05f64..2.0, c in -0.9f64..0.9) {
        prop_assert!(psi_c_pde_residual(r, z, t, c).unwrap().abs() < 1e-6);
    }

    #[test]
    fn paths_do_not_depend_on_workers(seed in any::<u64>(), n in 1usize..200, workers in 1usize..8) {
        let f = |_: u64, s: &mut regime_coupling::rng::RandomStream| s.normal();
        prop_assert_eq!(run_paths(n, seed, Some(1), f), run_paths(n, seed, Some(workers), f));
    }
}
