use lvfp_core::acceptance::{mean_deviation, INDICATOR_MEANS};
use lvfp_core::analysis::{envelope_from_series, perturbation_coeffs};
use lvfp_core::densities::{equilibrium_density, quasi_equilibrium, sample_on_grid, GridSpec};
use lvfp_core::fpsolver::{indicator_state, run, SolverConfig};
use lvfp_core::metrics::cramer_cdf;
use lvfp_core::model::{
    coefficients_from_means, equilibrium_mean, stationary_variances, ModelParams, MomentState, Species,
};
use lvfp_core::moments::{integrate_moments, MomentTrajectory};

#[test]
fn solver_means_second_order_when_diffusion_resolves_the_drift() {
    let params = ModelParams {
        sigma1: 0.2,
        sigma2: 0.2,
        ..ModelParams::default()
    };
    let coarse = mean_deviation(&params, GridSpec::new(50.0, 501).unwrap(), 10.0).unwrap();
    let fine = mean_deviation(&params, GridSpec::new(50.0, 1001).unwrap(), 10.0).unwrap();
    let ratio = coarse / fine;
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio} ({coarse:e} / {fine:e})");
}

#[test]
fn long_horizon_limits() {
    let params = ModelParams::default();
    let (e1, e2) = equilibrium_mean(&params).unwrap();
    let init = MomentState::new(0.0, INDICATOR_MEANS.0, INDICATOR_MEANS.1, 1.0 / 12.0, 1.0 / 12.0);
    let traj = integrate_moments(&params, &init, 1500.0, 1e-2).unwrap();
    let last = traj.last().unwrap();
    assert!((last.m1 - e1).hypot(last.m2 - e2) < 1e-6);
    let (v1, v2) = stationary_variances(&params).unwrap();
    assert!((last.v1 / v1 - 1.0).abs() < 1e-6 && (last.v2 / v2 - 1.0).abs() < 1e-6);

    let coeffs = coefficients_from_means(&params, last.m1, last.m2).unwrap();
    for s in Species::BOTH {
        let feq = equilibrium_density(&params, s).unwrap();
        let fq = quasi_equilibrium(&coeffs, s, params.p).unwrap();
        let h = feq.relative_entropy_to(&fq).unwrap();
        assert!(h < 1e-6, "H = {h}");
        let l1 = feq.l1_distance_to(&fq).unwrap();
        assert!(l1 * l1 <= 2.0 * h + 1e-15);
    }
}

#[test]
fn duhamel_envelope_dominates_short_run() {
    let params = ModelParams::default();
    let grid = GridSpec::new(50.0, 501).unwrap();
    let mut cfg = SolverConfig::for_grid(grid);
    cfg.t_end = 10.0;
    let init = indicator_state(&params, INDICATOR_MEANS.0, INDICATOR_MEANS.1, &grid).unwrap();
    let out = run(&params, &cfg, &init).unwrap();
    let states: Vec<MomentState> = out.snapshots.iter().map(|s| s.moments()).collect();
    let traj = MomentTrajectory::from_states(states).unwrap();
    for s in Species::BOTH {
        let eq = sample_on_grid(&equilibrium_density(&params, s).unwrap(), &grid).unwrap();
        let measured: Vec<f64> = out
            .snapshots
            .iter()
            .map(|st| cramer_cdf(st.density(s), &eq).unwrap())
            .collect();
        let pc = perturbation_coeffs(&params, &traj, s).unwrap();
        let env = envelope_from_series(&pc.times, &pc.lambda, &pc.m, measured[0]).unwrap();
        for (i, (m, e)) in measured.iter().zip(&env.duhamel).enumerate() {
            assert!(*m <= 1.05 * e, "t = {}: {m} > {e}", pc.times[i]);
            assert!(env.closed[i] >= e * (1.0 - 1e-9));
        }
    }
}
