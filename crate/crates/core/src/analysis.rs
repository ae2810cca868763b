//! Decay theory and empirical rates: the coefficient mismatches that force
//! the Cramér distance, the resulting envelopes, the frozen-coefficient
//! Energy-distance rates, and log-linear rate fitting.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::densities::equilibrium_density;
use crate::error::{domain, Error, Result};
use crate::model::{
    asymptotic_coefficients, coefficients_from_means, equilibrium_mean, CoefficientSet, ModelParams, Species,
};
use crate::moments::MomentTrajectory;

/// Distance from the fixed point beyond which a trajectory tail is
/// flagged as not converged.
pub const CONVERGENCE_TOL: f64 = 1e-3;

/// Coefficient mismatches `A_k`, `B_k` and the forcing
/// `M = A_k ||x f_inf|| + B_k ||f_inf||` along a mean trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCoeffs {
    pub species: Species,
    pub times: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub m: Vec<f64>,
    /// `lambda_k(t)` at the same times.
    pub lambda: Vec<f64>,
    /// `(||f_inf||, ||x f_inf||)` in L2.
    pub norms: (f64, f64),
    /// Distance of the last state's means from the fixed point.
    pub tail_gap: f64,
    /// False when `tail_gap` exceeds [`CONVERGENCE_TOL`].
    pub converged: bool,
}

impl PerturbationCoeffs {
    pub fn max_abs_a(&self) -> f64 {
        self.a.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

pub fn perturbation_coeffs(
    params: &ModelParams,
    trajectory: &MomentTrajectory,
    species: Species,
) -> Result<PerturbationCoeffs> {
    if trajectory.is_empty() {
        return domain("trajectory is empty");
    }
    let inf = asymptotic_coefficients(params)?.species(species);
    let norms = equilibrium_density(params, species)?.l2_norms()?;
    let n = trajectory.len();
    let mut out = PerturbationCoeffs {
        species,
        times: trajectory.times.clone(),
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        m: Vec::with_capacity(n),
        lambda: Vec::with_capacity(n),
        norms,
        tail_gap: 0.0,
        converged: true,
    };
    for s in &trajectory.states {
        let c = coefficients_from_means(params, s.m1, s.m2)?.species(species);
        let rel = (c.sigma_sq - inf.sigma_sq) / inf.sigma_sq;
        let a = (c.lambda - inf.lambda) - inf.lambda * rel;
        let b = inf.mu * rel - (c.mu - inf.mu);
        out.a.push(a);
        out.b.push(b);
        out.m.push(a * norms.1 + b * norms.0);
        out.lambda.push(c.lambda);
    }
    let last = trajectory.last().expect("non-empty");
    let (e1, e2) = equilibrium_mean(params)?;
    out.tail_gap = (last.m1 - e1).hypot(last.m2 - e2);
    out.converged = out.tail_gap <= CONVERGENCE_TOL;
    Ok(out)
}

/// Cramér-distance envelopes on a time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub times: Vec<f64>,
    /// `(sqrt(d0) e^{-L(t)/2} + int_0^t e^{-(L(t)-L(s))/2} |M(s)| ds)^2`, `L = int lambda`.
    pub duhamel: Vec<f64>,
    /// `(sqrt(d0) e^{-l* t/2} + 2 sup_{[0,t]}|M| (1 - e^{-l* t/2}) / l*)^2`.
    pub closed: Vec<f64>,
    /// Minimum of `lambda` over the samples.
    pub lambda_star: f64,
}

/// Envelopes from sampled `lambda(t)` and `M(t)`; integrals use the
/// trapezoidal rule on the given times.
pub fn envelope_from_series(times: &[f64], lambda: &[f64], m: &[f64], d0: f64) -> Result<Envelope> {
    let n = times.len();
    if n == 0 || lambda.len() != n || m.len() != n {
        return domain("times, lambda and M must be non-empty and of equal length");
    }
    if !(d0 >= 0.0) {
        return domain(format!("initial distance must be non-negative, got {d0}"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("times must be strictly increasing");
    }
    let lambda_star = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lambda_star > 0.0) {
        return Err(Error::NotApplicable(format!(
            "the envelope needs lambda bounded below by a positive constant, min is {lambda_star}"
        )));
    }
    let root = d0.sqrt();
    let t0 = times[0];
    let mut duhamel = Vec::with_capacity(n);
    let mut closed = Vec::with_capacity(n);
    let mut big_l = 0.0;
    let mut forced = 0.0;
    let mut sup_m: f64 = 0.0;
    for i in 0..n {
        if i > 0 {
            let dt = times[i] - times[i - 1];
            let decay = (-0.25 * (lambda[i] + lambda[i - 1]) * dt).exp();
            big_l += 0.5 * (lambda[i] + lambda[i - 1]) * dt;
            forced = decay * forced + 0.5 * dt * (decay * m[i - 1].abs() + m[i].abs());
        }
        sup_m = sup_m.max(m[i].abs());
        duhamel.push((root * (-0.5 * big_l).exp() + forced).powi(2));
        let e = (-0.5 * lambda_star * (times[i] - t0)).exp();
        closed.push((root * e + 2.0 * sup_m / lambda_star * (1.0 - e)).powi(2));
    }
    Ok(Envelope {
        times: times.to_vec(),
        duhamel,
        closed,
        lambda_star,
    })
}

/// Envelopes for species `k` driven by the means of `trajectory`, starting
/// from the initial Cramér distance `d0`.
pub fn cramer_envelope(
    params: &ModelParams,
    species: Species,
    d0: f64,
    trajectory: &MomentTrajectory,
) -> Result<Envelope> {
    let pc = perturbation_coeffs(params, trajectory, species)?;
    envelope_from_series(&pc.times, &pc.lambda, &pc.m, d0)
}

/// Rate of decay of the order-`ell` Energy distance for frozen
/// coefficients: `lambda (2 ell - 1)` for p = 1/2 and
/// `(2 ell - 1)(sigma^2 (3 - 2 ell)/4 + lambda)` for p = 1.
pub fn energy_decay_rate(p: f64, ell: f64, coeffs: &CoefficientSet, species: Species) -> Result<f64> {
    let c = coeffs.species(species);
    if p == 0.5 {
        if !(1.0..1.5).contains(&ell) {
            return domain(format!(
                "for p = 1/2 the rate holds for 1 <= ell < 3/2, got ell = {ell}"
            ));
        }
        Ok(c.lambda * (2.0 * ell - 1.0))
    } else if p == 1.0 {
        if !(ell > 0.5 && ell < 1.5) {
            return domain(format!("for p = 1 the rate holds for 1/2 < ell < 3/2, got ell = {ell}"));
        }
        Ok((2.0 * ell - 1.0) * (c.sigma_sq * (3.0 - 2.0 * ell) / 4.0 + c.lambda))
    } else {
        domain(format!("decay rates are known only for p = 1/2 and p = 1, got p = {p}"))
    }
}

/// Bounds of the fit window relative to the first value.
pub const FIT_UPPER: f64 = 1e-2;
pub const FIT_LOWER: f64 = 1e-10;
pub const FIT_MIN_SAMPLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Minus the least-squares slope of `ln value` against `t`.
    pub rate: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Fits an exponential rate over the last contiguous run of samples whose
/// values lie in `[1e-10 v0, 1e-2 v0]`.
pub fn fit_rate(times: &[f64], values: &[f64]) -> Result<RateFit> {
    if times.len() != values.len() {
        return domain("times and values must have equal length");
    }
    let v0 = match values.first() {
        Some(&v) if v > 0.0 => v,
        _ => return Err(Error::NoFit("the first value must be positive".into())),
    };
    let inside = |v: f64| v >= FIT_LOWER * v0 && v <= FIT_UPPER * v0;
    let end = match values.iter().rposition(|&v| inside(v)) {
        Some(j) => j,
        None => return Err(Error::NoFit("no sample fell below 1e-2 of the initial value".into())),
    };
    let mut start = end;
    while start > 0 && inside(values[start - 1]) {
        start -= 1;
    }
    let samples = end - start + 1;
    if samples < FIT_MIN_SAMPLES {
        return Err(Error::NoFit(format!("only {samples} samples in the decay window")));
    }
    let ts = &times[start..=end];
    let ys: Vec<f64> = values[start..=end].iter().map(|v| v.ln()).collect();
    let nf = samples as f64;
    let tm = ts.iter().sum::<f64>() / nf;
    let ym = ys.iter().sum::<f64>() / nf;
    let sxy: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - tm) * (y - ym)).sum();
    let sxx: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::NoFit("degenerate time window".into()));
    }
    Ok(RateFit {
        rate: -sxy / sxx,
        window: (ts[0], ts[samples - 1]),
        samples,
    })
}

/// Measured distance history with its theoretical companions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecayRecord {
    pub times: Vec<f64>,
    pub measured: Vec<f64>,
    pub envelope: Option<Envelope>,
    pub theory_rate: Option<f64>,
    pub fit: Option<RateFit>,
}

impl DecayRecord {
    /// Builds a record and fits its rate when a decay window exists.
    pub fn new(
        times: Vec<f64>,
        measured: Vec<f64>,
        envelope: Option<Envelope>,
        theory_rate: Option<f64>,
    ) -> Result<Self> {
        if times.len() != measured.len() {
            return domain("times and measured values must have equal length");
        }
        if let Some(e) = &envelope {
            if e.times.len() != times.len() {
                return domain("envelope must share the record's times");
            }
        }
        if measured.iter().any(|v| !(*v >= 0.0)) {
            return domain("distance values must be non-negative");
        }
        let fit = fit_rate(&times, &measured).ok();
        Ok(DecayRecord {
            times,
            measured,
            envelope,
            theory_rate,
            fit,
        })
    }

    pub const CSV_HEADER: &'static str = "t,measured,envelope_duhamel,envelope_closed,theory_rate,fitted_rate";

    /// Absent fields are left empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (i, (t, m)) in self.times.iter().zip(&self.measured).enumerate() {
            let _ = writeln!(
                out,
                "{t:.16e},{m:.16e},{},{},{},{}",
                opt(self.envelope.as_ref().map(|e| e.duhamel[i])),
                opt(self.envelope.as_ref().map(|e| e.closed[i])),
                opt(self.theory_rate),
                opt(self.fit.map(|f| f.rate)),
            );
        }
        out
    }
}
