//! Model parameters, the mean-field coefficient maps and the closed-form
//! fixed points of the macroscopic system.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Population index. `Prey` is species 1, `Predator` species 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Species {
    Prey,
    Predator,
}

impl Species {
    pub const BOTH: [Species; 2] = [Species::Prey, Species::Predator];

    /// 1 for prey, 2 for predator.
    pub fn number(self) -> usize {
        match self {
            Species::Prey => 1,
            Species::Predator => 2,
        }
    }

    pub fn from_number(k: usize) -> Result<Self> {
        match k {
            1 => Ok(Species::Prey),
            2 => Ok(Species::Predator),
            _ => domain(format!("species must be 1 or 2, got {k}")),
        }
    }
}

/// Biological and diffusion parameters of the coupled system.
///
/// The predator death rate `delta` is not stored: it is always derived as
/// `gamma * mu - nu`, which keeps the moment-consistency identity exact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Carrying capacity.
    #[serde(rename = "K")]
    pub capacity: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub chi: f64,
    pub theta: f64,
    pub nu: f64,
    pub mu: f64,
    /// Diffusion exponent, 1/2 <= p <= 1.
    pub p: f64,
}

impl Default for ModelParams {
    /// Reference parameter set with K = 100. The tabulated K = 0.01 gives a
    /// negative predator equilibrium and is not usable.
    fn default() -> Self {
        ModelParams {
            alpha: 1.0,
            beta: 0.5,
            gamma: 0.15,
            capacity: 100.0,
            sigma1: 0.05,
            sigma2: 0.05,
            chi: 0.0,
            theta: 0.0,
            nu: 1.0,
            mu: 10.0,
            p: 0.5,
        }
    }
}

impl ModelParams {
    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    /// Predator death rate `gamma * mu - nu`.
    pub fn delta(&self) -> f64 {
        self.gamma * self.mu - self.nu
    }

    /// Checks the field invariants. Zero diffusion strengths are accepted
    /// (the deterministic limit); everything else must be strictly positive.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("K", self.capacity),
            ("nu", self.nu),
            ("mu", self.mu),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return domain(format!("{name} must be a positive finite number, got {v}"));
            }
        }
        for (name, v) in [("sigma1", self.sigma1), ("sigma2", self.sigma2)] {
            if !(v.is_finite() && v >= 0.0) {
                return domain(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [("chi", self.chi), ("theta", self.theta)] {
            if !(v.is_finite() && v > -1.0) {
                return domain(format!("{name} must exceed -1, got {v}"));
            }
        }
        if !(0.5..=1.0).contains(&self.p) {
            return domain(format!("p must lie in [1/2, 1], got {}", self.p));
        }
        if self.delta() <= 0.0 {
            return Err(Error::Inadmissible(format!(
                "delta = gamma*mu - nu = {} must be positive",
                self.delta()
            )));
        }
        Ok(())
    }

    /// Checks `gamma*K - delta > 0`, the condition for a positive
    /// coexistence equilibrium.
    pub fn check_coexistence(&self) -> Result<()> {
        self.validate()?;
        let margin = self.gamma * self.capacity - self.delta();
        if margin <= 0.0 {
            return Err(Error::Inadmissible(format!(
                "coexistence requires gamma*K - delta > 0, got gamma*K - delta = {margin} \
                 (gamma = {}, K = {}, delta = {}); the predator equilibrium would not be positive",
                self.gamma,
                self.capacity,
                self.delta()
            )));
        }
        Ok(())
    }
}

/// Means and variances of both populations at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub t: f64,
    pub m1: f64,
    pub m2: f64,
    pub v1: f64,
    pub v2: f64,
}

impl MomentState {
    pub fn new(t: f64, m1: f64, m2: f64, v1: f64, v2: f64) -> Self {
        MomentState { t, m1, m2, v1, v2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m1 > 0.0 && self.m2 > 0.0) {
            return domain(format!("means must be positive, got ({}, {})", self.m1, self.m2));
        }
        if !(self.v1 >= 0.0 && self.v2 >= 0.0) {
            return domain(format!(
                "variances must be non-negative, got ({}, {})",
                self.v1, self.v2
            ));
        }
        Ok(())
    }

    pub fn mean(&self, s: Species) -> f64 {
        match s {
            Species::Prey => self.m1,
            Species::Predator => self.m2,
        }
    }

    pub fn variance(&self, s: Species) -> f64 {
        match s {
            Species::Prey => self.v1,
            Species::Predator => self.v2,
        }
    }
}

/// Drift/diffusion triple of one species: the equation reads
/// `f_t = (sigma_sq/2) (x^{2p} f)_xx + ((lambda x - mu) f)_x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeciesCoeffs {
    pub sigma_sq: f64,
    pub lambda: f64,
    pub mu: f64,
}

/// Effective coefficients of both equations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl CoefficientSet {
    pub fn species(&self, s: Species) -> SpeciesCoeffs {
        match s {
            Species::Prey => SpeciesCoeffs {
                sigma_sq: self.sigma1_sq,
                lambda: self.lambda1,
                mu: self.mu1,
            },
            Species::Predator => SpeciesCoeffs {
                sigma_sq: self.sigma2_sq,
                lambda: self.lambda2,
                mu: self.mu2,
            },
        }
    }
}

/// Mean-field coefficients as functions of the current means.
pub fn coefficients_from_means(params: &ModelParams, m1: f64, m2: f64) -> Result<CoefficientSet> {
    if !(m1 > 0.0 && m2 > 0.0 && m1.is_finite() && m2.is_finite()) {
        return domain(format!("means must be positive and finite, got ({m1}, {m2})"));
    }
    let ModelParams {
        alpha,
        beta,
        gamma,
        capacity,
        sigma1,
        sigma2,
        chi,
        theta,
        nu,
        mu,
        ..
    } = *params;
    Ok(CoefficientSet {
        sigma1_sq: sigma1 * sigma1 * (m1 + m2),
        lambda1: beta * m2 + alpha / capacity * m1 + alpha * chi,
        mu1: alpha * (chi + 1.0) * m1,
        sigma2_sq: sigma2 * sigma2 * m1,
        lambda2: gamma * (mu - m1) + nu * theta,
        mu2: nu * (theta + 1.0) * m2,
    })
}

/// The coexistence fixed point `(delta/gamma, alpha (gamma K - delta) / (beta gamma K))`.
pub fn equilibrium_mean(params: &ModelParams) -> Result<(f64, f64)> {
    params.check_coexistence()?;
    let d = params.delta();
    let gk = params.gamma * params.capacity;
    Ok((d / params.gamma, params.alpha * (gk - d) / (params.beta * gk)))
}

/// Coefficients evaluated at the coexistence equilibrium.
pub fn asymptotic_coefficients(params: &ModelParams) -> Result<CoefficientSet> {
    let (m1, m2) = equilibrium_mean(params)?;
    coefficients_from_means(params, m1, m2)
}

/// Stationary variances of the closed moment system (p = 1/2 or p = 1).
pub fn stationary_variances(params: &ModelParams) -> Result<(f64, f64)> {
    let (m1, m2) = equilibrium_mean(params)?;
    let c = coefficients_from_means(params, m1, m2)?;
    if params.p == 0.5 {
        Ok((
            c.sigma1_sq * m1 / (2.0 * c.lambda1),
            c.sigma2_sq * m2 / (2.0 * c.lambda2),
        ))
    } else if params.p == 1.0 {
        let den1 = 2.0 * c.lambda1 - c.sigma1_sq;
        let den2 = 2.0 * c.lambda2 - c.sigma2_sq;
        if den1 <= 0.0 || den2 <= 0.0 {
            return domain(format!(
                "p = 1 stationary variances need 2 lambda_k - sigma_k^2 > 0 at equilibrium, \
                 got ({den1}, {den2})"
            ));
        }
        Ok((c.sigma1_sq * m1 * m1 / den1, c.sigma2_sq * m2 * m2 / den2))
    } else {
        Err(Error::Unsupported(format!(
            "stationary variances have a closed form only for p = 1/2 and p = 1, got p = {}",
            params.p
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_coefficients_at_fixed_point() {
        let p = ModelParams::default();
        let c = coefficients_from_means(&p, 10.0 / 3.0, 29.0 / 15.0).unwrap();
        assert_relative_eq!(c.lambda1, 1.0, epsilon = 1e-12);
        assert_relative_eq!(c.mu1, 10.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(c.lambda2, 1.0, epsilon = 1e-12);
        assert_relative_eq!(c.mu2, 29.0 / 15.0, epsilon = 1e-12);
        assert_relative_eq!(c.sigma1_sq, 0.0131667, epsilon = 1e-7);
        assert_relative_eq!(c.sigma2_sq, 0.00833333, epsilon = 1e-8);
    }

    #[test]
    fn symmetric_means_double_prey_diffusion() {
        let p = ModelParams::default();
        let c = coefficients_from_means(&p, 2.5, 2.5).unwrap();
        assert_relative_eq!(c.sigma1_sq, 2.0 * p.sigma1 * p.sigma1 * 2.5, epsilon = 1e-15);
    }

    #[test]
    fn no_redistribution_gives_linear_offsets() {
        let p = ModelParams::default();
        let c = coefficients_from_means(&p, 1.7, 0.4).unwrap();
        assert_eq!(c.mu1, p.alpha * 1.7);
        assert_eq!(c.mu2, p.nu * 0.4);
    }

    #[test]
    fn non_positive_means_rejected() {
        let p = ModelParams::default();
        assert!(matches!(coefficients_from_means(&p, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(coefficients_from_means(&p, 1.0, -2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn equilibrium_mean_reference() {
        let (m1, m2) = equilibrium_mean(&ModelParams::default()).unwrap();
        assert_relative_eq!(m1, 10.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(m2, 29.0 / 15.0, epsilon = 1e-14);
    }

    #[test]
    fn boundary_of_admissibility_is_an_error() {
        // gamma*K = delta exactly: K = delta / gamma
        // delta = 0.25 * 6 - 1 = 0.5 and gamma*K = 0.5
        let p = ModelParams {
            gamma: 0.25,
            mu: 6.0,
            nu: 1.0,
            capacity: 2.0,
            ..ModelParams::default()
        };
        assert_eq!(p.gamma * p.capacity, p.delta());
        let err = equilibrium_mean(&p).unwrap_err();
        assert!(matches!(err, Error::Inadmissible(_)));
        assert!(err.to_string().contains("gamma*K - delta"));
    }

    #[test]
    fn tabulated_capacity_is_inadmissible() {
        let p = ModelParams {
            capacity: 0.01,
            ..ModelParams::default()
        };
        assert!(equilibrium_mean(&p).is_err());
    }

    #[test]
    fn asymptotic_rates_match_fixed_point_identities() {
        let p = ModelParams::default();
        let c = asymptotic_coefficients(&p).unwrap();
        assert_relative_eq!(c.lambda1, p.alpha * (1.0 + p.chi), epsilon = 1e-13);
        assert_relative_eq!(c.lambda2, p.gamma * p.mu - p.delta() + p.nu * p.theta, epsilon = 1e-13);
        let (m1, m2) = equilibrium_mean(&p).unwrap();
        assert_eq!(c, coefficients_from_means(&p, m1, m2).unwrap());
    }

    #[test]
    fn stationary_variances_reference() {
        let p = ModelParams::default();
        let (v1, v2) = stationary_variances(&p).unwrap();
        // 79/3600 and 29/3600 in exact arithmetic
        assert_relative_eq!(v1, 0.0219444, max_relative = 5e-6);
        assert_relative_eq!(v2, 0.00805556, max_relative = 5e-6);
        assert_relative_eq!(v1, 79.0 / 3600.0, max_relative = 1e-14);
        assert_relative_eq!(v2, 29.0 / 3600.0, max_relative = 1e-14);
        let (v1, v2) = stationary_variances(&p.with_p(1.0)).unwrap();
        assert_relative_eq!(v1, 0.073633, max_relative = 5e-6);
        assert_relative_eq!(v2, 0.0156392, max_relative = 5e-6);
    }

    #[test]
    fn stationary_variances_vanish_without_diffusion() {
        let p = ModelParams {
            sigma1: 0.0,
            sigma2: 0.0,
            ..ModelParams::default()
        };
        assert_eq!(stationary_variances(&p).unwrap(), (0.0, 0.0));
        assert_eq!(stationary_variances(&p.with_p(1.0)).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn stationary_variances_reject_interior_p() {
        let p = ModelParams::default().with_p(0.75);
        assert!(matches!(stationary_variances(&p), Err(Error::Unsupported(_))));
    }

    #[test]
    fn p_one_positivity_condition_enforced() {
        let mut p = ModelParams::default().with_p(1.0);
        p.sigma1 = 1.0; // sigma1^2 (m1+m2) = 5.27 > 2 alpha
        assert!(matches!(stationary_variances(&p), Err(Error::Domain(_))));
    }

    #[test]
    fn validate_rejects_bad_fields() {
        let p = ModelParams {
            chi: -1.0,
            ..ModelParams::default()
        };
        assert!(p.validate().is_err());
        let p = ModelParams {
            p: 1.2,
            ..ModelParams::default()
        };
        assert!(p.validate().is_err());
        let p = ModelParams {
            nu: 2.0,
            ..ModelParams::default()
        }; // delta = -0.5
        assert!(matches!(p.validate(), Err(Error::Inadmissible(_))));
    }
}
