use approx::assert_relative_eq;
use proptest::prelude::*;

use lvfp_core::analysis::{energy_decay_rate, fit_rate};
use lvfp_core::densities::{DensityField, GenGammaParams, GridSpec};
use lvfp_core::fpsolver::{chang_cooper_delta, discrete_steady_state, implicit_step};
use lvfp_core::metrics::{
    cramer_cdf, energy_distance_r, relative_entropy, scaling_bound, DensitySampler, SpectralGrid, SpectralProfile,
};
use lvfp_core::model::{coefficients_from_means, CoefficientSet, ModelParams, Species, SpeciesCoeffs};

fn small_grid() -> GridSpec {
    GridSpec::new(20.0, 200).unwrap()
}

prop_compose! {
    fn positive_density()(raw in prop::collection::vec(0.0f64..1.0, 200), bump in 2usize..150) -> DensityField {
        let mut v = raw;
        // guarantee strictly positive mass
        v[bump] += 1.0;
        DensityField::normalized(small_grid(), v).unwrap()
    }
}

prop_compose! {
    fn coeffs()(sigma_sq in 0.005f64..1.0, lambda in 0.1f64..3.0, mu in 0.5f64..8.0) -> SpeciesCoeffs {
        SpeciesCoeffs { sigma_sq, lambda, mu }
    }
}

proptest! {
    #[test]
    fn coefficient_map_identities(m1 in 0.01f64..50.0, m2 in 0.01f64..50.0) {
        let params = ModelParams::default();
        let c = coefficients_from_means(&params, m1, m2).unwrap();
        prop_assert!((c.mu1 - params.alpha * m1).abs() <= 1e-12 * m1);
        prop_assert!((c.mu2 - params.nu * m2).abs() <= 1e-12 * m2);
        let same = coefficients_from_means(&params, m1, m1).unwrap();
        prop_assert!((same.sigma1_sq - 2.0 * params.sigma1.powi(2) * m1).abs() <= 1e-12 * m1);
    }

    #[test]
    fn implicit_step_conserves_mass_and_positivity(f in positive_density(), c in coeffs(), p in prop::sample::select(vec![0.5, 0.75, 1.0]), dt in 1e-3f64..2.0) {
        let g = implicit_step(&f, c, p, dt).unwrap();
        prop_assert!((g.mass() - f.mass()).abs() < 1e-12);
        prop_assert!(g.min_value() >= 0.0);
    }

    #[test]
    fn discrete_steady_state_is_fixed(c in coeffs(), p in prop::sample::select(vec![0.5, 0.75, 1.0])) {
        let f = discrete_steady_state(c, p, &small_grid()).unwrap();
        let g = implicit_step(&f, c, p, 0.3).unwrap();
        prop_assert!(f.l1_distance(&g).unwrap() < 1e-10);
    }

    #[test]
    fn chang_cooper_weight_is_decreasing(w in -40.0f64..40.0, dw in 1e-3f64..1.0) {
        let (a, b) = (chang_cooper_delta(w), chang_cooper_delta(w + dw));
        prop_assert!(a > 0.0 && a < 1.0);
        prop_assert!(b < a);
    }

    #[test]
    fn distances_symmetric_and_nonnegative(f in positive_density(), g in positive_density(), r in 0.1f64..1.9) {
        let e = energy_distance_r(&f, &g, r).unwrap();
        prop_assert!(e >= 0.0);
        assert_relative_eq!(e, energy_distance_r(&g, &f, r).unwrap(), max_relative = 1e-9, epsilon = 1e-15);
        let c = cramer_cdf(&f, &g).unwrap();
        prop_assert!(c >= 0.0);
        assert_relative_eq!(c, cramer_cdf(&g, &f).unwrap(), max_relative = 1e-12, epsilon = 1e-18);
        prop_assert!(energy_distance_r(&f, &f, r).unwrap() == 0.0);
    }

    #[test]
    fn csiszar_kullback(f in positive_density(), g in positive_density()) {
        let h = relative_entropy(&f, &g).unwrap();
        let l1 = f.l1_distance(&g).unwrap();
        prop_assert!(h >= 0.0);
        prop_assert!(l1 * l1 <= 2.0 * h + 1e-12);
    }

    #[test]
    fn generalized_gamma_unit_mass_and_mean(c in coeffs(), p in 0.5f64..=1.0) {
        let g = GenGammaParams::new(c, p).unwrap();
        let mass = g.mass_between(0.0, f64::INFINITY).unwrap();
        prop_assert!((mass - 1.0).abs() < 1e-9, "mass {}", mass);
        let mean = g.log_integral(1.0, 1.0, 0.0, f64::INFINITY).unwrap().exp();
        prop_assert!((mean - c.mu / c.lambda).abs() < 1e-8 * mean, "mean {} vs {}", mean, c.mu / c.lambda);
    }

    #[test]
    fn rate_monotone_in_ell(sigma_sq in 0.01f64..2.0, lambda in 0.1f64..3.0, ell in 0.55f64..1.45) {
        let set = CoefficientSet { sigma1_sq: sigma_sq, sigma2_sq: sigma_sq, lambda1: lambda, lambda2: lambda, mu1: 1.0, mu2: 1.0 };
        let h = 1e-4;
        if ell >= 1.0 && ell + h < 1.5 {
            let a = energy_decay_rate(0.5, ell, &set, Species::Prey).unwrap();
            let b = energy_decay_rate(0.5, ell + h, &set, Species::Prey).unwrap();
            prop_assert!(b > a);
        }
        // d/d ell of (2l-1)(s(3-2l)/4 + lam) is 2 s (1 - l) + 2 lam, second derivative -2 s
        let r = |l: f64| energy_decay_rate(1.0, l, &set, Species::Prey).unwrap();
        let slope = (r(ell + h) - r(ell - h)) / (2.0 * h);
        let exact = 2.0 * sigma_sq * (1.0 - ell) + 2.0 * lambda;
        prop_assert!((slope - exact).abs() < 1e-6);
        prop_assert!(r(ell + h) - 2.0 * r(ell) + r(ell - h) < 0.0);
    }

    #[test]
    fn fit_recovers_exponential(rate in 0.1f64..5.0, amp in 0.01f64..100.0) {
        let t: Vec<f64> = (0..2000).map(|i| i as f64 * 15.0 / (rate * 2000.0)).collect();
        let v: Vec<f64> = t.iter().map(|t| amp * (-rate * t).exp()).collect();
        let fit = fit_rate(&t, &v).unwrap();
        prop_assert!((fit.rate - rate).abs() < 1e-8 * rate);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(25))]

    #[test]
    fn interpolation_inequality(seed in any::<u64>()) {
        let sg = SpectralGrid::new(1e-4, 1e3, 1024).unwrap();
        let mut sampler = DensitySampler::new(seed, small_grid()).unwrap();
        let (f, g) = sampler.pair().unwrap();
        let profile = SpectralProfile::new(&f, &g, &sg).unwrap();
        for (ell, ell_star) in [(0.75, 1.0), (1.0, 1.25), (1.1, 1.4), (0.6, 1.45)] {
            let e = profile.weighted_integral(&sg, ell);
            let bound = scaling_bound(ell, ell_star, profile.weighted_integral(&sg, ell_star)).unwrap();
            prop_assert!(e <= bound * (1.0 + 1e-9));
        }
    }
}
