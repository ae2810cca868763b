//! Discrepancies between grid densities: Energy distances of order `r` and
//! `ell` (real-space and Fourier forms), the Cramér distance, relative
//! entropy, and the constants that relate them.
//!
//! Grid densities are piecewise constant on their cells, and every
//! functional here is evaluated exactly for that interpretation except for
//! the frequency integral, which uses log-spaced trapezoidal quadrature.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::densities::{DensityField, GridSpec};
use crate::error::{domain, Error, Result};

/// Floor applied to densities before taking logarithms.
pub const ENTROPY_FLOOR: f64 = 1e-300;

/// Log-spaced frequency nodes on `[xi_min, xi_max]`, mirrored to the
/// negative half-line. Only the positive half is stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    xi_min: f64,
    xi_max: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for SpectralGrid {
    fn default() -> Self {
        SpectralGrid::new(1e-4, 1e3, 2048).expect("default spectral grid is valid")
    }
}

impl SpectralGrid {
    /// `m` nodes per half-line with trapezoidal weights in `ln xi`.
    pub fn new(xi_min: f64, xi_max: f64, m: usize) -> Result<Self> {
        if !(xi_min > 0.0 && xi_max > xi_min && xi_max.is_finite()) {
            return domain(format!("need 0 < xi_min < xi_max, got [{xi_min}, {xi_max}]"));
        }
        if m < 2 {
            return domain("spectral grid needs at least 2 nodes per half-line");
        }
        let (a, b) = (xi_min.ln(), xi_max.ln());
        let du = (b - a) / (m - 1) as f64;
        let nodes: Vec<f64> = (0..m).map(|j| (a + j as f64 * du).exp()).collect();
        let weights = nodes
            .iter()
            .enumerate()
            .map(|(j, xi)| if j == 0 || j == m - 1 { 0.5 * du * xi } else { du * xi })
            .collect();
        Ok(SpectralGrid {
            xi_min,
            xi_max,
            nodes,
            weights,
        })
    }

    pub fn xi_min(&self) -> f64 {
        self.xi_min
    }

    pub fn xi_max(&self) -> f64 {
        self.xi_max
    }

    /// Positive-half nodes.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Total node count over both half-lines.
    pub fn node_count(&self) -> usize {
        2 * self.nodes.len()
    }

    /// Bound on the omitted `|xi| > xi_max` part, from `|h^| <= 2`.
    pub fn tail_bound(&self, ell: f64) -> f64 {
        2.0 * 4.0 * self.xi_max.powf(1.0 - 2.0 * ell) / (2.0 * ell - 1.0)
    }
}

/// Fourier transform of a piecewise-constant grid function,
/// `h^(xi) = sinc(xi dx / 2) sum_i h_i e^{-i xi x_i} dx`.
pub fn grid_fourier(h: &[f64], grid: &GridSpec, xi: f64) -> Complex64 {
    let dx = grid.dx();
    let rot = Complex64::from_polar(1.0, -xi * dx);
    let mut phase = Complex64::from_polar(1.0, -xi * grid.center(0));
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, &v) in h.iter().enumerate() {
        if i % 64 == 0 {
            // refresh to keep the recurrence from drifting
            phase = Complex64::from_polar(1.0, -xi * grid.center(i));
        }
        acc += phase * v;
        phase *= rot;
    }
    let half = 0.5 * xi * dx;
    let sinc = if half.abs() < 1e-8 { 1.0 } else { half.sin() / half };
    acc * (sinc * dx)
}

/// `|f^ - g^|^2` on a spectral grid together with the mean difference used
/// for the low-frequency remainder.
#[derive(Clone, Debug)]
pub struct SpectralProfile {
    power: Vec<f64>,
    mean_gap: f64,
}

impl SpectralProfile {
    pub fn new(f: &DensityField, g: &DensityField, sg: &SpectralGrid) -> Result<Self> {
        let h = f.difference(g)?;
        let grid = f.grid();
        let power = sg
            .nodes
            .iter()
            .map(|&xi| grid_fourier(&h, grid, xi).norm_sqr())
            .collect();
        Ok(SpectralProfile {
            power,
            mean_gap: f.mean() - g.mean(),
        })
    }

    /// `int_R |f^ - g^|^2 |xi|^{-2 ell} dxi`, with `|f^ - g^|^2 ~ (m_f - m_g)^2 xi^2`
    /// integrated analytically below `xi_min`.
    pub fn weighted_integral(&self, sg: &SpectralGrid, ell: f64) -> f64 {
        let body: f64 = self
            .power
            .iter()
            .zip(&sg.nodes)
            .zip(&sg.weights)
            .map(|((p, xi), w)| w * p * xi.powf(-2.0 * ell))
            .sum();
        let low = self.mean_gap.powi(2) * sg.xi_min.powf(3.0 - 2.0 * ell) / (3.0 - 2.0 * ell);
        2.0 * (body + low)
    }
}

fn check_ell(ell: f64) -> Result<()> {
    if !(ell > 0.5 && ell < 1.5) {
        return domain(format!("order ell must lie in (1/2, 3/2), got {ell}"));
    }
    Ok(())
}

fn check_r(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 2.0) {
        return domain(format!("order r must lie in (0, 2), got {r}"));
    }
    Ok(())
}

/// `int |f^ - g^|^2 / |xi|^{2 ell} dxi`.
pub fn energy_norm_ell(f: &DensityField, g: &DensityField, ell: f64, sg: &SpectralGrid) -> Result<f64> {
    check_ell(ell)?;
    Ok(SpectralProfile::new(f, g, sg)?.weighted_integral(sg, ell).max(0.0))
}

/// `2 E|X-Y|^r - E|X-X'|^r - E|Y-Y'|^r`, exact for piecewise-constant densities.
pub fn energy_distance_r(f: &DensityField, g: &DensityField, r: f64) -> Result<f64> {
    check_r(r)?;
    let h = f.difference(g)?;
    let n = h.len();
    let dx = f.grid().dx();
    let big_g = |s: f64| s.abs().powf(r + 2.0) / ((r + 1.0) * (r + 2.0));
    let scale = dx.powf(2.0 + r);
    let mut total = 0.0;
    for k in 0..n {
        let kf = k as f64;
        let kernel = scale * (big_g(kf + 1.0) - 2.0 * big_g(kf) + big_g(kf - 1.0));
        let corr: f64 = h[..n - k].iter().zip(&h[k..]).map(|(a, b)| a * b).sum();
        total += if k == 0 { kernel * corr } else { 2.0 * kernel * corr };
    }
    Ok((-total).max(0.0))
}

/// Prefactor linking the two forms of the order-`r` Energy distance.
pub fn c_r_constant(r: f64) -> Result<f64> {
    check_r(r)?;
    Ok(r * gamma(0.5 * (1.0 + r)) / (2f64.powf(1.0 - r) * PI.sqrt() * gamma(0.5 * (2.0 - r))))
}

/// Energy distance of order `r` through its Fourier representation.
pub fn energy_distance_r_fourier(f: &DensityField, g: &DensityField, r: f64, sg: &SpectralGrid) -> Result<f64> {
    let c = c_r_constant(r)?;
    Ok(c * SpectralProfile::new(f, g, sg)?
        .weighted_integral(sg, 0.5 * (1.0 + r))
        .max(0.0))
}

/// Squared L2 distance between the CDFs, exact for piecewise-linear CDFs.
pub fn cramer_cdf(f: &DensityField, g: &DensityField) -> Result<f64> {
    let h = f.difference(g)?;
    let dx = f.grid().dx();
    let mut a = 0.0;
    let mut total = 0.0;
    for v in h {
        let b = a + v * dx;
        total += (a * a + a * b + b * b) / 3.0;
        a = b;
    }
    Ok(total * dx)
}

/// Cramér distance from the order-1 frequency integral.
pub fn cramer_fourier(f: &DensityField, g: &DensityField, sg: &SpectralGrid) -> Result<f64> {
    Ok(energy_norm_ell(f, g, 1.0, sg)? / (2.0 * PI))
}

/// Interpolation constant bounding order `ell` by order `ell_star`.
pub fn scaling_constant(ell: f64, ell_star: f64) -> Result<f64> {
    if !(0.5 < ell && ell < ell_star && ell_star < 1.5) {
        return domain(format!(
            "need 1/2 < ell < ell* < 3/2, got ell = {ell}, ell* = {ell_star}"
        ));
    }
    let gap = ell_star - ell;
    Ok((4.0 / gap).powf(2.0 * gap) * ((2.0 * ell_star - 1.0) / (2.0 * ell - 1.0)).powf(2.0 * ell - 1.0))
}

/// Upper bound on `E_ell` given `E_ell* = e_star`.
pub fn scaling_bound(ell: f64, ell_star: f64, e_star: f64) -> Result<f64> {
    let c = scaling_constant(ell, ell_star)?;
    if !(e_star >= 0.0) {
        return domain(format!("e_star must be non-negative, got {e_star}"));
    }
    Ok((c * e_star.powf(2.0 * ell - 1.0)).powf(1.0 / (2.0 * ell_star - 1.0)))
}

/// Constant of the order-`ell` dissipation estimate, finite for `ell > 1`.
pub fn c_ell_constant(ell: f64) -> Result<f64> {
    if !(ell > 1.0 && ell < 1.5) {
        return domain(format!("ell must lie in (1, 3/2), got {ell}"));
    }
    let e = 2.0 * ell - 2.0;
    Ok((2.0 * PI).powf(3.0 - 2.0 * ell) * (3.0 * (e / 3.0).powf(3.0 - 2.0 * ell) + (3.0 / e).powf(e)))
}

/// `sum f_i ln(f_i / g_i) dx` with `0 ln 0 = 0`.
pub fn relative_entropy(f: &DensityField, g: &DensityField) -> Result<f64> {
    if f.grid() != g.grid() {
        return domain("densities live on different grids");
    }
    let grid = f.grid();
    let mut total = 0.0;
    for (i, (&a, &b)) in f.values().iter().zip(g.values()).enumerate() {
        if a <= ENTROPY_FLOOR {
            continue;
        }
        if b <= 0.0 {
            return Err(Error::InfiniteEntropy { x: grid.center(i) });
        }
        total += a * (a.ln() - b.max(ENTROPY_FLOOR).ln());
    }
    Ok((total * grid.dx()).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    EnergyR,
    EnergyNormEll,
    CramerCdf,
    CramerFourier,
    Sobolev,
    RelEntropy,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 6] = [
        DistanceKind::EnergyR,
        DistanceKind::EnergyNormEll,
        DistanceKind::CramerCdf,
        DistanceKind::CramerFourier,
        DistanceKind::Sobolev,
        DistanceKind::RelEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::EnergyR => "energy_r",
            DistanceKind::EnergyNormEll => "energy_norm_ell",
            DistanceKind::CramerCdf => "cramer_cdf",
            DistanceKind::CramerFourier => "cramer_fourier",
            DistanceKind::Sobolev => "sobolev",
            DistanceKind::RelEntropy => "rel_entropy",
        }
    }

    pub fn symmetric(self) -> bool {
        self != DistanceKind::RelEntropy
    }

    fn spectral(self) -> bool {
        matches!(
            self,
            DistanceKind::EnergyNormEll | DistanceKind::CramerFourier | DistanceKind::Sobolev
        )
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistanceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown distance kind '{s}'")))
    }
}

/// One evaluated discrepancy with its quadrature metadata.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub kind: DistanceKind,
    pub order: f64,
    pub value: f64,
    pub xi_max: Option<f64>,
    pub nodes: Option<usize>,
    pub tail_bound: Option<f64>,
}

impl DistanceReport {
    pub const CSV_HEADER: &'static str = "kind,order,value,xi_max,nodes,tail_bound";

    pub fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
        format!(
            "{},{:.16e},{:.16e},{},{},{}",
            self.kind,
            self.order,
            self.value,
            opt(self.xi_max),
            self.nodes.map(|n| n.to_string()).unwrap_or_default(),
            opt(self.tail_bound)
        )
    }
}

/// Evaluates any kind. `order` is `r` for `energy_r`, `ell` for the
/// spectral kinds and ignored otherwise (Cramér corresponds to `ell = 1`).
pub fn distance(
    kind: DistanceKind,
    order: f64,
    f: &DensityField,
    g: &DensityField,
    sg: &SpectralGrid,
) -> Result<DistanceReport> {
    let (order, value) = match kind {
        DistanceKind::EnergyR => (order, energy_distance_r(f, g, order)?),
        DistanceKind::EnergyNormEll | DistanceKind::Sobolev => (order, energy_norm_ell(f, g, order, sg)?),
        DistanceKind::CramerCdf => (1.0, cramer_cdf(f, g)?),
        DistanceKind::CramerFourier => (1.0, cramer_fourier(f, g, sg)?),
        DistanceKind::RelEntropy => (0.0, relative_entropy(f, g)?),
    };
    let spectral = kind.spectral();
    let tail = |ell: f64| {
        let b = sg.tail_bound(ell);
        if kind == DistanceKind::CramerFourier {
            b / (2.0 * PI)
        } else {
            b
        }
    };
    Ok(DistanceReport {
        kind,
        order,
        value,
        xi_max: spectral.then_some(sg.xi_max),
        nodes: spectral.then_some(sg.node_count()),
        tail_bound: spectral.then(|| tail(order)),
    })
}

/// Deterministic generator of smooth random test densities: mixtures of one
/// to three Gaussian bumps, optionally blended with a flat box.
pub struct DensitySampler {
    rng: ChaCha8Rng,
    grid: GridSpec,
}

impl DensitySampler {
    pub fn new(seed: u64, grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        Ok(DensitySampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            grid,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn sample(&mut self) -> Result<DensityField> {
        let l = self.grid.length;
        let bumps = self.rng.random_range(1..=3);
        let comps: Vec<(f64, f64, f64)> = (0..bumps)
            .map(|_| {
                let centre = self.rng.random_range(0.25 * l..0.6 * l);
                let width = self.rng.random_range(0.03 * l..0.1 * l);
                let weight = self.rng.random_range(0.2..1.0);
                (centre, width, weight)
            })
            .collect();
        let values = self
            .grid
            .centers()
            .into_iter()
            .map(|x| {
                comps
                    .iter()
                    .map(|(c, w, a)| a * (-0.5 * ((x - c) / w).powi(2)).exp())
                    .sum::<f64>()
            })
            .collect();
        DensityField::normalized(self.grid, values)
    }

    pub fn pair(&mut self) -> Result<(DensityField, DensityField)> {
        Ok((self.sample()?, self.sample()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Uniform densities on [0,1] and [1,2] on a grid whose faces hit 1 and 2.
    fn unit_boxes() -> (DensityField, DensityField) {
        let grid = GridSpec::new(4.0, 400).unwrap();
        let boxed = |lo: f64| {
            let v = (0..grid.n)
                .map(|i| {
                    let x = grid.center(i);
                    if x > lo && x < lo + 1.0 {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            DensityField::new(grid, v).unwrap()
        };
        (boxed(0.0), boxed(1.0))
    }

    #[test]
    fn unit_box_values() {
        let (f, g) = unit_boxes();
        assert_relative_eq!(energy_distance_r(&f, &g, 1.0).unwrap(), 4.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(cramer_cdf(&f, &g).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        let sg = SpectralGrid::default();
        let e1 = energy_norm_ell(&f, &g, 1.0, &sg).unwrap();
        assert_relative_eq!(e1, 2.0 * PI * 2.0 / 3.0, max_relative = 1e-3);
        assert_relative_eq!(e1, 4.18879, max_relative = 1e-3);
    }

    #[test]
    fn identical_inputs_give_zero() {
        let (f, _) = unit_boxes();
        let sg = SpectralGrid::default();
        assert_eq!(energy_distance_r(&f, &f, 0.7).unwrap(), 0.0);
        assert_eq!(cramer_cdf(&f, &f).unwrap(), 0.0);
        assert_eq!(energy_norm_ell(&f, &f, 1.2, &sg).unwrap(), 0.0);
        assert_eq!(relative_entropy(&f, &f).unwrap(), 0.0);
    }

    #[test]
    fn c_r_values() {
        assert_relative_eq!(c_r_constant(1.0).unwrap(), 1.0 / PI, epsilon = 1e-15);
        let small = c_r_constant(1e-6).unwrap();
        assert_relative_eq!(small / 1e-6, c_r_constant(2e-6).unwrap() / 2e-6, max_relative = 1e-5);
        assert!(c_r_constant(2.0).is_err() && c_r_constant(0.0).is_err());
        let mut prev = c_r_constant(0.01).unwrap();
        for k in 2..200 {
            let c = c_r_constant(0.01 * k as f64).unwrap();
            assert!(c.is_finite() && (c - prev).abs() < 0.05);
            prev = c;
        }
    }

    #[test]
    fn scaling_constants() {
        assert_relative_eq!(scaling_constant(1.0, 1.25).unwrap(), 6.0, epsilon = 1e-14);
        assert_eq!(scaling_bound(1.0, 1.25, 0.0).unwrap(), 0.0);
        assert!(scaling_bound(1.2, 1.0, 0.1).is_err());
        // sqrt(2 pi) (3 / sqrt 6 + sqrt 6)
        assert_relative_eq!(c_ell_constant(1.25).unwrap(), 9.209940371518394, max_relative = 1e-14);
        assert!(c_ell_constant(1.0).is_err());
        for k in 1..49 {
            let c = c_ell_constant(1.0 + 0.01 * k as f64).unwrap();
            assert!(c.is_finite() && c > 0.0);
        }
    }

    #[test]
    fn order_ranges_checked() {
        let (f, g) = unit_boxes();
        let sg = SpectralGrid::default();
        assert!(energy_norm_ell(&f, &g, 0.5, &sg).is_err());
        assert!(energy_norm_ell(&f, &g, 1.5, &sg).is_err());
        assert!(energy_distance_r(&f, &g, 2.0).is_err());
    }

    #[test]
    fn translation_increases_cramer() {
        let grid = GridSpec::new(10.0, 500).unwrap();
        let boxed = |lo: f64| {
            let v = (0..grid.n)
                .map(|i| {
                    let x = grid.center(i);
                    if x > lo && x < lo + 1.0 {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            DensityField::new(grid, v).unwrap()
        };
        let f = boxed(1.0);
        let mut prev = 0.0;
        for k in 1..12 {
            let d = cramer_cdf(&f, &boxed(1.0 + 0.5 * k as f64)).unwrap();
            assert!(d > prev);
            prev = d;
        }
    }

    #[test]
    fn infinite_entropy_detected() {
        let (f, g) = unit_boxes();
        assert!(matches!(relative_entropy(&f, &g), Err(Error::InfiniteEntropy { .. })));
    }

    #[test]
    fn fourier_of_box_matches_closed_form() {
        let (f, _) = unit_boxes();
        for xi in [0.3, 2.0, 17.0] {
            let got = grid_fourier(f.values(), f.grid(), xi);
            let exact = (Complex64::new(0.0, -xi).exp() - 1.0) / Complex64::new(0.0, -xi);
            assert!((got - exact).norm() < 1e-12, "xi = {xi}");
        }
    }

    #[test]
    fn report_csv_row() {
        let (f, g) = unit_boxes();
        let sg = SpectralGrid::default();
        let r = distance(DistanceKind::CramerCdf, 0.0, &f, &g, &sg).unwrap();
        assert!(r.csv_line().starts_with("cramer_cdf,1."));
        assert!(r.csv_line().ends_with(",,,"));
        let r = distance(DistanceKind::EnergyNormEll, 1.2, &f, &g, &sg).unwrap();
        assert_eq!(r.nodes, Some(4096));
        assert!(r.tail_bound.unwrap() > 0.0);
        assert_eq!("sobolev".parse::<DistanceKind>().unwrap(), DistanceKind::Sobolev);
    }
}
