use drikit::config::{DensityConfig, ExperimentConfig};
use drikit::convolution::convolve;
use drikit::density::DensitySpec;
use drikit::grid::{GridFunction, DEFAULT_MAX_POINTS};
use drikit::renewal::renewal_density;
use drikit::riemann::{block_sums, mesh_inequality_check, StepFunction};
use proptest::prelude::*;

/// Dyadic step functions: breaks on a 1/16 lattice, values on a 1/8 lattice.
fn step_function() -> impl Strategy<Value = StepFunction> {
    (-128i32..=64, prop::collection::vec((1i32..=32, 0i32..=64), 1..=24)).prop_map(|(start, pieces)| {
        let mut breaks = vec![start as f64 / 16.0];
        let mut values = Vec::new();
        for (w, v) in pieces {
            let last = *breaks.last().unwrap();
            breaks.push(last + w as f64 / 16.0);
            values.push(v as f64 / 8.0);
        }
        StepFunction::new(breaks, values).unwrap()
    })
}

fn mesh() -> impl Strategy<Value = f64> {
    (4i32..=64).prop_map(|k| k as f64 / 16.0)
}

fn shift() -> impl Strategy<Value = f64> {
    (-256i32..=256).prop_map(|k| k as f64 / 64.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mesh_inequalities_hold(f in step_function(), d in mesh(), dp in mesh(), x in shift(), xp in shift()) {
        let c = mesh_inequality_check(&f, d, dp, x, xp).unwrap();
        prop_assert!(c.pass, "{c:?}");
    }

    #[test]
    fn sums_bracket_the_integral(f in step_function(), d in mesh(), x in shift()) {
        let b = block_sums(&f, d, x).unwrap();
        let i = f.integral();
        prop_assert!(b.lower <= i && i <= b.upper.as_f64());
    }

    #[test]
    fn sums_are_periodic_in_the_shift(f in step_function(), d in mesh(), x in shift()) {
        let a = block_sums(&f, d, x).unwrap();
        let b = block_sums(&f, d, x + d).unwrap();
        prop_assert_eq!(a.upper, b.upper);
        prop_assert_eq!(a.lower, b.lower);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn convolution_preserves_mass_and_sign(a in 0.0f64..2.0, w in 0.25f64..3.0, rate in 0.5f64..3.0) {
        let h = 1.0 / 64.0;
        let u = GridFunction::discretize(&DensitySpec::uniform(a, a + w).unwrap(), (a, a + w), h, DEFAULT_MAX_POINTS).unwrap();
        let e = GridFunction::discretize(&DensitySpec::exponential(rate).unwrap(), (0.0, 40.0 / rate), h, DEFAULT_MAX_POINTS).unwrap();
        let ue = convolve(&u, &e).unwrap();
        let eu = convolve(&e, &u).unwrap();
        prop_assert!((ue.total_mass() - u.total_mass() * e.total_mass()).abs() < 1e-9);
        prop_assert!(ue.values().iter().all(|v| *v >= 0.0));
        for (p, q) in ue.values().iter().zip(eu.values()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn renewal_partial_sums_are_monotone(b in 0.5f64..2.0, n in 2usize..20) {
        let spec = DensitySpec::uniform(0.0, b).unwrap();
        let h = 1.0 / 32.0;
        let lo = renewal_density(&spec, n, (0.0, 6.0), h, f64::INFINITY).unwrap();
        let hi = renewal_density(&spec, n + 5, (0.0, 6.0), h, f64::INFINITY).unwrap();
        for (p, q) in lo.grid.values().iter().zip(hi.grid.values()) {
            prop_assert!(p <= q);
            prop_assert!(*q <= p + lo.remainder_bound);
        }
    }

    #[test]
    fn config_round_trips(alpha in 0.05f64..1.0, seed in any::<u64>()) {
        let mut cfg = ExperimentConfig::for_density(DensityConfig::named("pareto", &[("alpha", alpha)]));
        cfg.seed = seed;
        let (r, _) = cfg.resolve().unwrap();
        let back = ExperimentConfig::from_json(&r.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }
}
