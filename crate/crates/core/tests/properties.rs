use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use tracerflow_core::chain::{self, BoundedFn};
use tracerflow_core::ergodic::occupation_from_distances;
use tracerflow_core::ergodic::stats::ks_two_sample;
use tracerflow_core::field::{ou_exact_step, sample_stationary, y_flow_step};
use tracerflow_core::rng;
use tracerflow_core::tracer::shift_field;
use tracerflow_core::{build_power_law_spectrum, FourierField, OUState, PowerLawParams, SpectrumModel};

fn small_model() -> Arc<SpectrumModel> {
    static MODEL: OnceLock<Arc<SpectrumModel>> = OnceLock::new();
    MODEL
        .get_or_init(|| {
            Arc::new(
                build_power_law_spectrum(&PowerLawParams {
                    truncation: 4,
                    ..Default::default()
                })
                .unwrap(),
            )
        })
        .clone()
}

fn field(seed: u64) -> FourierField {
    sample_stationary(&small_model(), &mut rng::stream(seed))
}

fn chain_start() -> impl Strategy<Value = f64> {
    prop_oneof![-30.0..-0.01f64, 0.01..30.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_preserves_every_norm(seed in any::<u64>(), a in -20.0..20.0f64, b in -20.0..20.0f64, r in 0.0..4.0f64) {
        let f = field(seed);
        let g = shift_field(&f, &[a, b]).unwrap();
        prop_assert!((g.norm() - f.norm()).abs() <= 1e-12 * f.norm().max(1.0));
        prop_assert!((g.sobolev_norm(r) - f.sobolev_norm(r)).abs() <= 1e-12 * f.sobolev_norm(r).max(1.0));
        prop_assert!(g.symmetry_defect() <= 1e-15);
    }

    #[test]
    fn shifts_compose(seed in any::<u64>(), a in prop::array::uniform2(-5.0..5.0f64), b in prop::array::uniform2(-5.0..5.0f64)) {
        let f = field(seed);
        let two = shift_field(&shift_field(&f, &a).unwrap(), &b).unwrap();
        let one = shift_field(&f, &[a[0] + b[0], a[1] + b[1]]).unwrap();
        prop_assert!(two.distance(&one).unwrap() <= 1e-12 * f.norm().max(1.0));
    }

    #[test]
    fn shift_moves_the_evaluation_point(seed in any::<u64>(), a in prop::array::uniform2(-3.0..3.0f64)) {
        let f = field(seed);
        let direct = f.evaluate(&a).unwrap();
        let shifted = shift_field(&f, &a).unwrap().value_at_origin();
        for (x, y) in direct.iter().zip(&shifted) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn noiseless_flow_contracts(seed in any::<u64>(), radius in 0.1..3.0f64) {
        let f = field(seed);
        let y0 = f.scaled(radius / f.norm());
        let mut y = y0.clone();
        for _ in 0..20 {
            y = y_flow_step(&y, 1e-3).unwrap();
        }
        prop_assert!(y.norm() <= (-0.02f64).exp() * y0.norm() + 1e-12);
        prop_assert_eq!(y.symmetry_defect(), 0.0);
    }

    #[test]
    fn telescoping_sums_to_one(x in 1.0..50.0f64, n in 0usize..=60) {
        let (h, g) = chain::h_g_values(x, n).unwrap();
        prop_assert!((g.iter().sum::<f64>() + h[n] - 1.0).abs() <= 1e-12);
        prop_assert!(h.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(h[n] >= chain::h_infinity(x).unwrap() - 1e-15);
    }

    #[test]
    fn chain_laws_are_probability_measures(x in chain_start(), n in 0usize..=30) {
        let d = chain::distribution(x, n).unwrap();
        prop_assert!((d.total_mass() - 1.0).abs() <= 1e-12);
        prop_assert!(d.atoms().iter().all(|a| a.prob >= 0.0));
        prop_assert!(d.ladder_mass() <= d.total_mass() + 1e-15);
        let v = d.expectation(&BoundedFn::tanh());
        prop_assert!(v.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn poisson_semigroup_of_constants(x in chain_start(), t in 0.0..20.0f64, c in -3.0..3.0f64) {
        let v = chain::pt_poisson(x, t, &BoundedFn::constant(c), 1e-12).unwrap();
        prop_assert!((v - c).abs() <= 1e-10);
    }

    #[test]
    fn occupation_is_a_fraction(distances in prop::collection::vec(0.0..10.0f64, 1..200), delta in 0.01..12.0f64) {
        let occ = occupation_from_distances(&distances, delta).unwrap();
        prop_assert!((0.0..=1.0).contains(&occ.fraction));
        prop_assert!((0.0..=1.0).contains(&occ.window_min));
        if distances.iter().all(|&r| r < delta) {
            prop_assert_eq!(occ.fraction, 1.0);
        }
    }

    #[test]
    fn ks_statistic_is_bounded(a in prop::collection::vec(-5.0..5.0f64, 1..100), b in prop::collection::vec(-5.0..5.0f64, 1..100)) {
        let (d, p) = ks_two_sample(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(ks_two_sample(&a, &a).0, 0.0);
    }

    #[test]
    fn derived_seeds_do_not_depend_on_order(master in any::<u64>(), i in 0u64..1_000_000) {
        let forward: Vec<u64> = (0..=i.min(64)).map(|j| rng::derive_seed(master, j)).collect();
        let backward: Vec<u64> = (0..=i.min(64)).rev().map(|j| rng::derive_seed(master, j)).collect();
        prop_assert!(forward.iter().eq(backward.iter().rev()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn poisson_semigroup_composes(x in prop_oneof![1.0..3.0f64, -3.0..-1.0f64], s in 0.1..1.0f64, t in 0.1..1.0f64) {
        let f = BoundedFn::tanh();
        let tol = 1e-12;
        let inner = f.clone();
        let ps_f = BoundedFn::new("P_s tanh", 1.0, move |y| chain::pt_poisson(y, s, &inner, tol).unwrap());
        let composed = chain::pt_poisson(x, t, &ps_f, tol).unwrap();
        let direct = chain::pt_poisson(x, s + t, &f, tol).unwrap();
        prop_assert!((composed - direct).abs() <= 1e-9, "{composed} vs {direct}");
    }

    #[test]
    fn silent_ou_is_the_semigroup(seed in any::<u64>(), s in 0.0..2.0f64, t in 0.01..2.0f64) {
        let silent = Arc::new(small_model().with_energy_scaled(0.0).unwrap());
        let f = field(seed);
        let start = FourierField::from_representatives(&silent, |i, _| f.coeff(i).to_vec()).unwrap();
        let mut stream = rng::stream(seed);
        let two = ou_exact_step(&ou_exact_step(&OUState::new(start.clone()), s, &mut stream).unwrap(), t, &mut stream).unwrap();
        let one = start.apply_semigroup(s + t).unwrap();
        prop_assert!(two.field.distance(&one).unwrap() <= 1e-12 * start.norm().max(1.0));
        prop_assert!((two.time - (s + t)).abs() <= 1e-12);
    }
}
