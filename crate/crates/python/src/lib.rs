//! Python bindings: model parameters, moment orbits, equilibrium densities,
//! the Fokker–Planck solver, distances and the acceptance criteria.

use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lvfp_core::acceptance::{self, AcceptanceConfig};
use lvfp_core::analysis;
use lvfp_core::densities::{self, DensityField, GenGammaParams};
use lvfp_core::fpsolver::{self, Coupling, RunRow, SolverConfig};
use lvfp_core::metrics::{self, DistanceKind, SpectralGrid};
use lvfp_core::model;
use lvfp_core::moments;
use lvfp_core::{Error, MomentState, Species};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Inadmissible(_) | Error::Unsupported(_) | Error::Closure { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::Numeric(_) | Error::Singular { .. } | Error::InfiniteEntropy { .. } => {
            PyArithmeticError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for lvfp_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn species(k: usize) -> PyResult<Species> {
    Species::from_number(k).py()
}

/// Model parameters; unspecified values take the reference set.
#[pyclass(name = "ModelParams", module = "lvfp", from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: model::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (*, alpha=None, beta=None, gamma=None, K=None, sigma1=None, sigma2=None, chi=None, theta=None, nu=None, mu=None, p=None))]
    #[allow(non_snake_case, clippy::too_many_arguments)]
    fn new(
        alpha: Option<f64>,
        beta: Option<f64>,
        gamma: Option<f64>,
        K: Option<f64>,
        sigma1: Option<f64>,
        sigma2: Option<f64>,
        chi: Option<f64>,
        theta: Option<f64>,
        nu: Option<f64>,
        mu: Option<f64>,
        p: Option<f64>,
    ) -> PyResult<Self> {
        let d = model::ModelParams::default();
        let inner = model::ModelParams {
            alpha: alpha.unwrap_or(d.alpha),
            beta: beta.unwrap_or(d.beta),
            gamma: gamma.unwrap_or(d.gamma),
            capacity: K.unwrap_or(d.capacity),
            sigma1: sigma1.unwrap_or(d.sigma1),
            sigma2: sigma2.unwrap_or(d.sigma2),
            chi: chi.unwrap_or(d.chi),
            theta: theta.unwrap_or(d.theta),
            nu: nu.unwrap_or(d.nu),
            mu: mu.unwrap_or(d.mu),
            p: p.unwrap_or(d.p),
        };
        inner.validate().py()?;
        Ok(PyModelParams { inner })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }
    #[getter(K)]
    fn capacity(&self) -> f64 {
        self.inner.capacity
    }
    #[getter]
    fn sigma1(&self) -> f64 {
        self.inner.sigma1
    }
    #[getter]
    fn sigma2(&self) -> f64 {
        self.inner.sigma2
    }
    #[getter]
    fn chi(&self) -> f64 {
        self.inner.chi
    }
    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }
    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu
    }
    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }
    #[getter]
    fn p(&self) -> f64 {
        self.inner.p
    }

    /// Predator death rate `gamma * mu - nu`.
    fn delta(&self) -> f64 {
        self.inner.delta()
    }

    fn check_coexistence(&self) -> PyResult<()> {
        self.inner.check_coexistence().py()
    }

    fn equilibrium_mean(&self) -> PyResult<(f64, f64)> {
        model::equilibrium_mean(&self.inner).py()
    }

    fn stationary_variances(&self) -> PyResult<(f64, f64)> {
        model::stationary_variances(&self.inner).py()
    }

    /// Coefficients `(sigma1^2, sigma2^2, lambda1, lambda2, mu1, mu2)` at the given means.
    fn coefficients(&self, m1: f64, m2: f64) -> PyResult<(f64, f64, f64, f64, f64, f64)> {
        let c = model::coefficients_from_means(&self.inner, m1, m2).py()?;
        Ok((c.sigma1_sq, c.sigma2_sq, c.lambda1, c.lambda2, c.mu1, c.mu2))
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Uniform cell-centred grid on `[0, length]`.
#[pyclass(name = "GridSpec", module = "lvfp", from_py_object)]
#[derive(Clone)]
struct PyGridSpec {
    inner: densities::GridSpec,
}

#[pymethods]
impl PyGridSpec {
    #[new]
    #[pyo3(signature = (length=50.0, n=1001))]
    fn new(length: f64, n: usize) -> PyResult<Self> {
        Ok(PyGridSpec {
            inner: densities::GridSpec::new(length, n).py()?,
        })
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length
    }
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }
    #[getter]
    fn dx(&self) -> f64 {
        self.inner.dx()
    }

    fn centers(&self) -> Vec<f64> {
        self.inner.centers()
    }

    fn __repr__(&self) -> String {
        format!("GridSpec(length={}, n={})", self.inner.length, self.inner.n)
    }
}

/// Closed-form equilibrium or quasi-equilibrium density.
#[pyclass(name = "GenGamma", module = "lvfp", skip_from_py_object)]
struct PyGenGamma {
    inner: GenGammaParams,
}

#[pymethods]
impl PyGenGamma {
    fn pdf(&self, x: f64) -> f64 {
        self.inner.pdf(x)
    }
    fn log_pdf(&self, x: f64) -> f64 {
        self.inner.log_pdf(x)
    }
    fn mean(&self) -> f64 {
        self.inner.mean()
    }
    fn mass_between(&self, lo: f64, hi: f64) -> PyResult<f64> {
        self.inner.mass_between(lo, hi).py()
    }
    fn relative_entropy_to(&self, other: PyRef<'_, PyGenGamma>) -> PyResult<f64> {
        self.inner.relative_entropy_to(&other.inner).py()
    }
    fn l1_distance_to(&self, other: PyRef<'_, PyGenGamma>) -> PyResult<f64> {
        self.inner.l1_distance_to(&other.inner).py()
    }
    /// Cell values on `grid`, renormalized to unit mass.
    fn sample(&self, grid: &PyGridSpec) -> PyResult<Vec<f64>> {
        Ok(densities::sample_on_grid(&self.inner, &grid.inner).py()?.into_values())
    }
}

/// Equilibrium density of species `k` (1 = prey, 2 = predator).
#[pyfunction]
fn equilibrium_density(params: &PyModelParams, k: usize) -> PyResult<PyGenGamma> {
    Ok(PyGenGamma {
        inner: densities::equilibrium_density(&params.inner, species(k)?).py()?,
    })
}

/// Quasi-equilibrium of species `k` for the coefficients at means `(m1, m2)`.
#[pyfunction]
fn quasi_equilibrium(params: &PyModelParams, m1: f64, m2: f64, k: usize) -> PyResult<PyGenGamma> {
    let c = model::coefficients_from_means(&params.inner, m1, m2).py()?;
    Ok(PyGenGamma {
        inner: densities::quasi_equilibrium(&c, species(k)?, params.inner.p).py()?,
    })
}

type MomentRow = (f64, f64, f64, f64, f64);

/// Mean/variance orbit as rows `(t, m1, m2, v1, v2)`.
#[pyfunction]
#[pyo3(signature = (params, m1, m2, v1, v2, t_end, dt=moments::DEFAULT_DT, stride=1))]
#[allow(clippy::too_many_arguments)]
fn integrate_moments(
    params: &PyModelParams,
    m1: f64,
    m2: f64,
    v1: f64,
    v2: f64,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> PyResult<Vec<MomentRow>> {
    let init = MomentState::new(0.0, m1, m2, v1, v2);
    let traj = moments::integrate_moments_every(&params.inner, &init, t_end, dt, stride).py()?;
    Ok(traj.states.iter().map(|s| (s.t, s.m1, s.m2, s.v1, s.v2)).collect())
}

type HistoryRow = (f64, f64, f64, f64, f64, f64, f64);

/// Result of a solver run.
#[pyclass(name = "Run", module = "lvfp", get_all, skip_from_py_object)]
struct PyRun {
    /// Rows `(t, m1, m2, v1, v2, mass1, mass2)` at every step.
    history: Vec<HistoryRow>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    t: f64,
}

/// Runs the solver from indicator data centred at `(m1, m2)`.
/// `coupling` is `self_consistent`, `prescribed_ode` or `frozen`.
#[pyfunction]
#[pyo3(signature = (params, grid, m1, m2, t_end, dt=None, coupling="self_consistent"))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    params: &PyModelParams,
    grid: &PyGridSpec,
    m1: f64,
    m2: f64,
    t_end: f64,
    dt: Option<f64>,
    coupling: &str,
) -> PyResult<PyRun> {
    let p = params.inner;
    let mut config = SolverConfig::for_grid(grid.inner);
    config.t_end = t_end;
    if let Some(dt) = dt {
        config.dt = dt;
    }
    config.coupling = match coupling {
        "self_consistent" => Coupling::SelfConsistent,
        "prescribed_ode" => Coupling::PrescribedOde,
        "frozen" => Coupling::Frozen(model::asymptotic_coefficients(&p).py()?),
        other => return Err(PyValueError::new_err(format!("unknown coupling '{other}'"))),
    };
    let g = grid.inner;
    py.detach(move || {
        let init = fpsolver::indicator_state(&p, m1, m2, &g)?;
        let mut history = Vec::new();
        let last = fpsolver::run_observed(&p, &config, &init, |_, s| {
            let r = RunRow::of(s);
            history.push((r.t, r.m1, r.m2, r.v1, r.v2, r.mass1, r.mass2));
            Ok(())
        })?;
        Ok(PyRun {
            history,
            f1: last.f1.into_values(),
            f2: last.f2.into_values(),
            t: last.t,
        })
    })
    .py()
}

fn field(grid: &PyGridSpec, values: Vec<f64>) -> PyResult<DensityField> {
    DensityField::new(grid.inner, values).py()
}

/// Distance of the given kind between two cell-value arrays on `grid`.
/// Kinds: energy_r, energy_norm_ell, cramer_cdf, cramer_fourier, sobolev, rel_entropy.
#[pyfunction]
#[pyo3(signature = (kind, f, g, grid, order=1.0))]
fn distance(py: Python<'_>, kind: &str, f: Vec<f64>, g: Vec<f64>, grid: &PyGridSpec, order: f64) -> PyResult<f64> {
    let kind: DistanceKind = kind.parse().py()?;
    let (f, g) = (field(grid, f)?, field(grid, g)?);
    py.detach(|| metrics::distance(kind, order, &f, &g, &SpectralGrid::default()).map(|r| r.value))
        .py()
}

/// Decay rate of the order-`ell` Energy distance for frozen asymptotic coefficients.
#[pyfunction]
fn energy_decay_rate(params: &PyModelParams, ell: f64, k: usize) -> PyResult<f64> {
    let c = model::asymptotic_coefficients(&params.inner).py()?;
    analysis::energy_decay_rate(params.inner.p, ell, &c, species(k)?).py()
}

/// Exponential rate fitted to the trailing decay window: `(rate, (t0, t1), samples)`.
#[pyfunction]
fn fit_rate(times: Vec<f64>, values: Vec<f64>) -> PyResult<(f64, (f64, f64), usize)> {
    let f = analysis::fit_rate(&times, &values).py()?;
    Ok((f.rate, f.window, f.samples))
}

fn acceptance_config(params: Option<&PyModelParams>, grid: Option<&PyGridSpec>) -> AcceptanceConfig {
    let mut cfg = AcceptanceConfig::default();
    if let Some(p) = params {
        cfg.params = p.inner;
    }
    if let Some(g) = grid {
        cfg.grid = g.inner;
    }
    cfg
}

/// Runs one acceptance criterion by number: `(passed, detail)`.
#[pyfunction]
#[pyo3(signature = (id, params=None, grid=None))]
fn run_criterion(py: Python<'_>, id: u8, params: Option<&PyModelParams>, grid: Option<&PyGridSpec>) -> (bool, String) {
    let cfg = acceptance_config(params, grid);
    let o = py.detach(|| acceptance::run_by_id(id, &cfg));
    (o.passed, o.detail)
}

/// Criteria as `(id, tag, title)`, optionally filtered by tag or number.
#[pyfunction]
#[pyo3(signature = (filter=None))]
fn criteria(filter: Option<&str>) -> PyResult<Vec<(u8, &'static str, &'static str)>> {
    Ok(acceptance::select(filter)
        .py()?
        .into_iter()
        .map(|c| (c.id, c.tag, c.title))
        .collect())
}

#[pymodule]
fn lvfp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyGridSpec>()?;
    m.add_class::<PyGenGamma>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(equilibrium_density, m)?)?;
    m.add_function(wrap_pyfunction!(quasi_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_moments, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(energy_decay_rate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(run_criterion, m)?)?;
    m.add_function(wrap_pyfunction!(criteria, m)?)?;
    Ok(())
}
