use brox::eigen::eigenvalue_count;
use brox::green::build_kernel;
use brox::operator::apply_l;
use brox::oracle::{discretize, oracle_count};
use brox::{sample_environment, Environment, GridFunction};
use proptest::prelude::*;

fn environment(seed: u64, n: usize) -> Environment {
    sample_environment(0.0, 1.0, n, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kernel_is_symmetric_and_nonpositive(seed in 0u64..1000, x in 0.0f64..1.0, xi in 0.0f64..1.0) {
        let k = build_kernel(&environment(seed, 400));
        let g = k.eval(x, xi).unwrap();
        prop_assert!(g <= 0.0);
        prop_assert!((g - k.eval(xi, x).unwrap()).abs() <= 1e-12 * g.abs().max(1e-300));
    }

    #[test]
    fn discrete_generator_inverts_the_kernel(seed in 0u64..1000, c in proptest::collection::vec(-2.0f64..2.0, 4)) {
        let env = environment(seed, 300);
        let h = GridFunction::from_fn(&env, |x| c[0] + c[1] * x + c[2] * (5.0 * x).sin() + c[3] * x * x);
        let th = build_kernel(&env).apply(&h).unwrap();
        let back = apply_l(&env, &th).unwrap().sub(&h).interior_sup_norm();
        prop_assert!(back <= 1e-6 * (1.0 + h.sup_norm()));
        prop_assert!(th.values()[0].abs() < 1e-12 && th.values()[env.len() - 1].abs() < 1e-12);
    }

    #[test]
    fn scale_inverse_round_trips(seed in 0u64..1000, x in 0.0f64..1.0) {
        let env = environment(seed, 500);
        let y = env.scale(x).unwrap();
        prop_assert!((env.scale_inverse(y).unwrap() - x).abs() <= 1e-10);
    }

    #[test]
    fn counts_are_monotone(seed in 0u64..1000, l1 in 0.0f64..150.0, dl in 0.0f64..50.0) {
        let env = environment(seed, 800);
        let lo = eigenvalue_count(&env, l1).unwrap();
        let hi = eigenvalue_count(&env, l1 + dl).unwrap();
        prop_assert!(lo <= hi);
        let sys = discretize(&env);
        prop_assert!(oracle_count(&sys, l1) <= oracle_count(&sys, l1 + dl));
    }

    #[test]
    fn json_round_trip_is_exact(seed in 0u64..1000, n in 10usize..400) {
        let env = environment(seed, n);
        let back = Environment::from_json(&env.to_json()).unwrap();
        prop_assert_eq!(back.w(), env.w());
        prop_assert_eq!(back.grid(), env.grid());
        prop_assert_eq!(back.seed(), seed);
    }

    #[test]
    fn gauge_shift_leaves_counts_unchanged(seed in 0u64..1000, c in -3.0f64..3.0, lambda in 1.0f64..100.0) {
        let env = environment(seed, 400);
        let shifted = env.shifted(c).unwrap();
        prop_assert_eq!(eigenvalue_count(&env, lambda).unwrap(), eigenvalue_count(&shifted, lambda).unwrap());
    }
}
