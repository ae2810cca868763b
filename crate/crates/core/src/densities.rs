//! Grids, grid densities and the generalized-Gamma family of
//! (quasi-)equilibrium densities.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::model::{asymptotic_coefficients, CoefficientSet, ModelParams, Species, SpeciesCoeffs};
use crate::quadrature::{concave_window, integrate_refined, log_integral_concave};

/// Uniform cell-centred grid on `[0, length]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub length: f64,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { length: 50.0, n: 1001 }
    }
}

impl GridSpec {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        let g = GridSpec { length, n };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return domain(format!("grid length must be positive, got {}", self.length));
        }
        if self.n < 16 {
            return domain(format!("grid needs at least 16 cells, got {}", self.n));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.center(i)).collect()
    }

    /// Left edge of cell `i` (face `i`); face `n` is the right boundary.
    pub fn face(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }
}

/// Non-negative unit-mass density, piecewise constant on the cells of a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl DensityField {
    pub const MASS_TOL: f64 = 1e-10;

    /// Validates non-negativity and unit mass.
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.n {
            return domain(format!("expected {} values, got {}", grid.n, values.len()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return domain(format!("density must be non-negative, cell {i} has {v}"));
        }
        let f = DensityField { grid, values };
        let mass = f.mass();
        if (mass - 1.0).abs() > Self::MASS_TOL {
            return domain(format!("density must have unit mass, got {mass}"));
        }
        Ok(f)
    }

    /// Rescales non-negative values to unit mass.
    pub fn normalized(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.n {
            return domain(format!("expected {} values, got {}", grid.n, values.len()));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return domain("density values must be non-negative");
        }
        let mass: f64 = values.iter().sum::<f64>() * grid.dx();
        if !(mass > 0.0 && mass.is_finite()) {
            return domain(format!("cannot normalize a density of mass {mass}"));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(DensityField { grid, values })
    }

    /// Used by the solver, which checks its own invariants.
    pub(crate) fn from_parts(grid: GridSpec, values: Vec<f64>) -> Self {
        DensityField { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    /// Midpoint moment `sum x_i^r f_i dx`.
    pub fn moment(&self, r: f64) -> f64 {
        let dx = self.grid.dx();
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| self.grid.center(i).powf(r) * v)
            .sum::<f64>()
            * dx
    }

    pub fn mean(&self) -> f64 {
        let dx = self.grid.dx();
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| self.grid.center(i) * v)
            .sum::<f64>()
            * dx
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let dx = self.grid.dx();
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| (self.grid.center(i) - m).powi(2) * v)
            .sum::<f64>()
            * dx
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn check_same_grid(&self, other: &DensityField) -> Result<()> {
        if self.grid != other.grid {
            return domain("densities live on different grids");
        }
        Ok(())
    }

    pub fn l1_distance(&self, other: &DensityField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.dx())
    }

    /// Pointwise difference `self - other`.
    pub fn difference(&self, other: &DensityField) -> Result<Vec<f64>> {
        self.check_same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }

    /// Two-column CSV `x,f`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,f\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{:.16e},{:.16e}", self.grid.center(i), v);
        }
        out
    }
}

/// Member of the generalized-Gamma family solving the zero-flux equation
/// `(sigma^2/2) (x^{2p} f)' + (lambda x - mu) f = 0` with unit mass.
///
/// For p = 1/2 this is a Gamma density with shape `2 mu / sigma^2` and scale
/// `sigma^2 / (2 lambda)`; for p = 1 an inverse-Gamma density with shape
/// `1 + 2 lambda / sigma^2` and scale `2 mu / sigma^2`. For interior p the
/// normalization is computed by quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenGammaParams {
    pub p: f64,
    pub lam: f64,
    pub mu: f64,
    pub sigma_sq: f64,
    pub log_norm: f64,
}

/// Closed-form family member, if any.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    Gamma { shape: f64, scale: f64 },
    InverseGamma { shape: f64, scale: f64 },
    Interior,
}

impl GenGammaParams {
    pub fn new(coeffs: SpeciesCoeffs, p: f64) -> Result<Self> {
        let SpeciesCoeffs { sigma_sq, lambda, mu } = coeffs;
        if !(sigma_sq > 0.0 && lambda > 0.0 && mu > 0.0)
            || !(sigma_sq.is_finite() && lambda.is_finite() && mu.is_finite())
        {
            return domain(format!(
                "equilibrium density needs positive coefficients, got sigma^2 = {sigma_sq}, \
                 lambda = {lambda}, mu = {mu}"
            ));
        }
        if !(0.5..=1.0).contains(&p) {
            return domain(format!("p must lie in [1/2, 1], got {p}"));
        }
        let mut g = GenGammaParams {
            p,
            lam: lambda,
            mu,
            sigma_sq,
            log_norm: 0.0,
        };
        g.log_norm = match g.family() {
            Family::Gamma { shape, scale } => -shape * scale.ln() - ln_gamma(shape),
            Family::InverseGamma { shape, scale } => shape * scale.ln() - ln_gamma(shape),
            Family::Interior => {
                let log_mass =
                    log_integral_concave(|s| g.log_unnormalized(s.exp()) + s, f64::NEG_INFINITY, f64::INFINITY)
                        .map_err(|e| {
                            Error::Numeric(format!(
                                "normalization of generalized Gamma (p = {p}, lambda = {lambda}, \
                         mu = {mu}, sigma^2 = {sigma_sq}) failed: {e}"
                            ))
                        })?;
                -log_mass
            }
        };
        Ok(g)
    }

    pub fn family(&self) -> Family {
        if self.p == 0.5 {
            Family::Gamma {
                shape: 2.0 * self.mu / self.sigma_sq,
                scale: self.sigma_sq / (2.0 * self.lam),
            }
        } else if self.p == 1.0 {
            Family::InverseGamma {
                shape: 1.0 + 2.0 * self.lam / self.sigma_sq,
                scale: 2.0 * self.mu / self.sigma_sq,
            }
        } else {
            Family::Interior
        }
    }

    /// Log of the density without the normalization constant.
    fn log_unnormalized(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match self.family() {
            Family::Gamma { shape, scale } => (shape - 1.0) * x.ln() - x / scale,
            Family::InverseGamma { shape, scale } => -(1.0 + shape) * x.ln() - scale / x,
            Family::Interior => {
                let p = self.p;
                let a = 2.0 * self.lam / (self.sigma_sq * (2.0 - 2.0 * p));
                let b = 2.0 * self.mu / (self.sigma_sq * (2.0 * p - 1.0));
                let lx = x.ln();
                -2.0 * p * lx - a * ((2.0 - 2.0 * p) * lx).exp() - b * ((1.0 - 2.0 * p) * lx).exp()
            }
        }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        self.log_norm + self.log_unnormalized(x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let v = self.log_pdf(x);
        if v == f64::NEG_INFINITY {
            0.0
        } else {
            v.exp()
        }
    }

    /// `ln int_lo^hi x^k f(x)^m dx` by log-space quadrature.
    pub fn log_integral(&self, k: f64, m: f64, lo: f64, hi: f64) -> Result<f64> {
        let slo = if lo <= 0.0 { f64::NEG_INFINITY } else { lo.ln() };
        let shi = if hi.is_infinite() { f64::INFINITY } else { hi.ln() };
        log_integral_concave(|s| m * self.log_pdf(s.exp()) + (k + 1.0) * s, slo, shi)
    }

    /// Mass on `[lo, hi]`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> Result<f64> {
        Ok(self.log_integral(0.0, 1.0, lo, hi)?.exp())
    }

    /// Exact mean `mu / lambda` for every p (integrate the zero-flux equation).
    pub fn mean(&self) -> f64 {
        self.mu / self.lam
    }

    /// Log-density of `ln X`, concave in `s`.
    fn log_density_in_s(&self, s: f64) -> f64 {
        self.log_pdf(s.exp()) + s
    }

    fn window(&self) -> Result<(f64, f64)> {
        let h = |s: f64| self.log_density_in_s(s);
        match concave_window(&h, f64::NEG_INFINITY, f64::INFINITY)? {
            Some((a, b, _)) => Ok((a, b)),
            None => Err(Error::Numeric("empty integration window".into())),
        }
    }

    /// `int f ln(f / g) dx` for `f = self`, by quadrature of the closed forms.
    pub fn relative_entropy_to(&self, other: &GenGammaParams) -> Result<f64> {
        let (a, b) = self.window()?;
        let v = integrate_refined(
            |s| {
                let x = s.exp();
                let lf = self.log_pdf(x);
                (lf + s).exp() * (lf - other.log_pdf(x))
            },
            a,
            b,
            1e-12,
            // rounding in ln f - ln g is about 1e-15
            1e-14,
        )?;
        Ok(v.max(0.0))
    }

    /// `int |f - g| dx` by quadrature of the closed forms, split at the
    /// crossings of `f` and `g`.
    pub fn l1_distance_to(&self, other: &GenGammaParams) -> Result<f64> {
        let (a1, b1) = self.window()?;
        let (a2, b2) = other.window()?;
        let (a, b) = (a1.min(a2), b1.max(b2));
        let gap = |s: f64| self.log_density_in_s(s) - other.log_density_in_s(s);
        const SCAN: usize = 4096;
        let mut cuts = vec![a];
        let mut prev = (a, gap(a));
        for i in 1..=SCAN {
            let s = a + (b - a) * i as f64 / SCAN as f64;
            let v = gap(s);
            if v.is_finite() && prev.1.is_finite() && v.signum() != prev.1.signum() {
                let (mut lo, mut hi) = (prev.0, s);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if gap(mid).signum() == prev.1.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                cuts.push(0.5 * (lo + hi));
            }
            prev = (s, v);
        }
        cuts.push(b);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += integrate_refined(
                |s| (self.log_density_in_s(s).exp() - other.log_density_in_s(s).exp()).abs(),
                w[0],
                w[1],
                1e-12,
                1e-15,
            )?;
        }
        Ok(total)
    }

    /// `||f||_{L^2}` and `||x f||_{L^2}` by quadrature of the closed form.
    pub fn l2_norms(&self) -> Result<(f64, f64)> {
        let f = (0.5 * self.log_integral(0.0, 2.0, 0.0, f64::INFINITY)?).exp();
        let xf = (0.5 * self.log_integral(2.0, 2.0, 0.0, f64::INFINITY)?).exp();
        Ok((f, xf))
    }
}

/// Quasi-equilibrium of one species for the given coefficients.
pub fn quasi_equilibrium(coeffs: &CoefficientSet, species: Species, p: f64) -> Result<GenGammaParams> {
    GenGammaParams::new(coeffs.species(species), p)
}

/// Equilibrium density: the quasi-equilibrium at the asymptotic coefficients.
pub fn equilibrium_density(params: &ModelParams, species: Species) -> Result<GenGammaParams> {
    let c = asymptotic_coefficients(params)?;
    quasi_equilibrium(&c, species, params.p)
}

/// Tolerated deviation of the midpoint renormalization factor from one.
pub const RENORMALIZATION_TOL: f64 = 1e-6;
/// Largest mass allowed beyond the right end of the grid.
pub const TAIL_TOL: f64 = 1e-8;

/// Samples `gg` at cell centres and rescales to unit midpoint mass.
/// Returns the field together with the applied rescaling factor.
pub fn sample_on_grid_with_factor(gg: &GenGammaParams, grid: &GridSpec) -> Result<(DensityField, f64)> {
    grid.validate()?;
    let tail = gg.mass_between(grid.length, f64::INFINITY)?;
    if tail > TAIL_TOL {
        return Err(Error::GridTooSmall(format!(
            "mass {tail:e} lies beyond x = {} (tolerance {TAIL_TOL:e})",
            grid.length
        )));
    }
    let values: Vec<f64> = (0..grid.n).map(|i| gg.pdf(grid.center(i))).collect();
    let mass: f64 = values.iter().sum::<f64>() * grid.dx();
    if !(mass > 0.0) {
        return Err(Error::GridTooSmall("density is not resolved by the grid".into()));
    }
    let factor = 1.0 / mass;
    if (factor - 1.0).abs() > RENORMALIZATION_TOL {
        return Err(Error::GridTooSmall(format!(
            "grid does not resolve the density: renormalization factor {factor} \
             (dx = {}, tolerance {RENORMALIZATION_TOL:e})",
            grid.dx()
        )));
    }
    let values = values.into_iter().map(|v| v * factor).collect();
    Ok((DensityField::from_parts(*grid, values), factor))
}

pub fn sample_on_grid(gg: &GenGammaParams, grid: &GridSpec) -> Result<DensityField> {
    sample_on_grid_with_factor(gg, grid).map(|(f, _)| f)
}

/// Largest centred-difference zero-flux residual
/// `|(sigma^2/2) d/dx (x^{2p} f) + (lambda x - mu) f|` over interior cells.
pub fn flux_residual(f: &DensityField, coeffs: SpeciesCoeffs, p: f64) -> f64 {
    let grid = f.grid();
    let dx = grid.dx();
    let v = f.values();
    let g = |i: usize| grid.center(i).powf(2.0 * p) * v[i];
    (1..grid.n - 1)
        .map(|i| {
            let x = grid.center(i);
            let j = 0.5 * coeffs.sigma_sq * (g(i + 1) - g(i - 1)) / (2.0 * dx) + (coeffs.lambda * x - coeffs.mu) * v[i];
            j.abs()
        })
        .fold(0.0, f64::max)
}
