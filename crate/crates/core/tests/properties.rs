//! Invariants over randomly generated instances.

use bessel_two_weight::dyadic::{weak_11_check, WhitneyMode};
use bessel_two_weight::geometry::tilde;
use bessel_two_weight::harness::{
    build_levels, check_max_principle, decompose_energy, gen_instance, run_equivalence_suite, EnergyConfig,
    ExperimentConfig, MpConstantMode,
};
use bessel_two_weight::{DiscreteMeasure2D, PreparedInstance};
use proptest::prelude::*;

fn small_config(seed: u64, n: usize) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        n_sigma: n,
        n_mu: n,
        ..Default::default()
    }
}

fn lambda() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.5), Just(1.0), Just(2.0), 0.3f64..3.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn identical_configs_give_identical_reports(seed in any::<u64>(), l in lambda()) {
        let cfg = ExperimentConfig {
            instance_count: 2,
            lambda_set: vec![l],
            kernel_samples: 50,
            ..small_config(seed, 5)
        };
        let a = serde_json::to_string(&run_equivalence_suite(&cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&run_equivalence_suite(&cfg).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn energy_pieces_reproduce_the_level_sum(seed in any::<u64>(), index in 0u64..1000, l in lambda(), n in 1usize..10) {
        let cfg = small_config(seed, n);
        let g = gen_instance(&cfg, index, l).unwrap();
        let ecfg = EnergyConfig {
            delta: 0.25,
            m: cfg.level_shift(l),
            whitney_mode: WhitneyMode::Repaired,
            grid_refinement: 6,
            comparability_samples: 0,
        };
        let p = PreparedInstance::new(g.instance).unwrap();
        let r = decompose_energy(&p, &g.phi, &ecfg).unwrap();
        let parts = r.a_term + r.b_term + r.unassigned;
        prop_assert!((parts - r.shifted_sum).abs() <= 1e-10 * r.shifted_sum.max(f64::MIN_POSITIVE));
        // each σ-atom's value² lies in [4^band, 4^{band+1})
        prop_assert!(r.riemann_sum < r.total && r.total <= 4.0 * r.riemann_sum * (1.0 + 1e-12));
        prop_assert!(r.conservation_ok && r.bracket_ok);
        prop_assert!(r.qualifying_max <= 4);
    }

    #[test]
    fn repaired_maximum_principle_holds(seed in any::<u64>(), index in 0u64..1000, l in lambda()) {
        let cfg = small_config(seed, 8);
        let g = gen_instance(&cfg, index, l).unwrap();
        let p = PreparedInstance::new(g.instance).unwrap();
        let c = MpConstantMode::Repaired33.constant(l);
        let levels = build_levels(&p, &g.phi, cfg.level_shift(l), WhitneyMode::Repaired, 6).unwrap();
        for (&k, w) in &levels.whitney {
            let r = check_max_principle(&p, &g.phi, k, w, c);
            prop_assert!(r.violations.is_empty(), "level {}: {:?}", k, r.violations);
        }
    }

    #[test]
    fn weak_type_bound_with_constant_one(
        atoms in prop::collection::vec((0.01f64..20.0, 0.01f64..5.0, 0.01f64..10.0, 0.0f64..10.0), 1..15),
        alpha in 0.01f64..20.0,
    ) {
        let triples: Vec<(f64, f64, f64)> = atoms.iter().map(|&(x, t, w, _)| (x, t, w)).collect();
        let psi: Vec<f64> = atoms.iter().map(|a| a.3).collect();
        let mu_tilde = tilde(&DiscreteMeasure2D::from_triples(&triples).unwrap());
        let r = weak_11_check(&mu_tilde, &psi, alpha).unwrap();
        prop_assert!(r.holds && r.cover_contains_level_set, "{:?}", r);
        prop_assert!(r.level_set_mass <= r.bound * (1.0 + 1e-12));
    }
}
