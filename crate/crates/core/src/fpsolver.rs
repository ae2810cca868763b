//! Semi-implicit Chang-Cooper finite-volume solver for the coupled
//! Fokker-Planck system with no-flux boundaries.
//!
//! Each species is written in flux form `f_t = (B f + D f_x)_x` with
//! `D = (sigma^2/2) x^{2p}` and `B = (lambda x - mu) + D'`. Face fluxes use
//! exponential fitting, coefficients are frozen over a step and the
//! linear flux is treated implicitly (backward Euler), so every step is one
//! tridiagonal M-matrix solve per species.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::densities::{DensityField, GridSpec};
use crate::error::{domain, Error, Result};
use crate::model::{coefficients_from_means, CoefficientSet, ModelParams, MomentState, Species, SpeciesCoeffs};
use crate::moments::rk4_step_means;

/// Most negative cell value tolerated after a step.
pub const NEGATIVITY_TOL: f64 = -1e-13;

/// How the mean-field coefficients are obtained at each step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Coupling {
    /// Means of the current densities.
    SelfConsistent,
    /// Means of the Lotka-Volterra ODE, advanced alongside with RK4.
    PrescribedOde,
    /// Fixed coefficients for the whole run.
    Frozen(CoefficientSet),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: GridSpec,
    pub dt: f64,
    pub t_end: f64,
    pub coupling: Coupling,
    /// Keep a snapshot every `output_stride` steps.
    pub output_stride: usize,
}

impl SolverConfig {
    /// `dt = dx/2`, self-consistent coupling, horizon 50.
    pub fn for_grid(grid: GridSpec) -> Self {
        SolverConfig {
            grid,
            dt: 0.5 * grid.dx(),
            t_end: 50.0,
            coupling: Coupling::SelfConsistent,
            output_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return domain(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return domain(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if self.output_stride == 0 {
            return domain("output stride must be at least 1");
        }
        Ok(())
    }

    /// Advisory bound `dt <= dx`; the scheme stays stable beyond it.
    pub fn within_cfl_advisory(&self) -> bool {
        self.dt <= self.grid.dx()
    }

    pub fn n_steps(&self) -> usize {
        let steps = (self.t_end / self.dt).round() as usize;
        if (steps as f64) * self.dt < self.t_end * (1.0 - 1e-12) {
            steps + 1
        } else {
            steps
        }
    }
}

/// Both densities at time `t` together with the coefficients used to
/// reach them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub f1: DensityField,
    pub f2: DensityField,
    pub t: f64,
    pub coeffs: CoefficientSet,
    /// Lotka-Volterra means carried along in prescribed-ODE mode.
    pub ode_means: Option<(f64, f64)>,
}

impl SystemState {
    /// Initial state at `t = 0`; coefficients are evaluated from the
    /// densities' means.
    pub fn new(params: &ModelParams, f1: DensityField, f2: DensityField) -> Result<Self> {
        if f1.grid() != f2.grid() {
            return domain("both densities must share one grid");
        }
        let coeffs = coefficients_from_means(params, f1.mean(), f2.mean())?;
        Ok(SystemState {
            f1,
            f2,
            t: 0.0,
            coeffs,
            ode_means: None,
        })
    }

    pub fn density(&self, s: Species) -> &DensityField {
        match s {
            Species::Prey => &self.f1,
            Species::Predator => &self.f2,
        }
    }

    pub fn moments(&self) -> MomentState {
        MomentState::new(
            self.t,
            self.f1.mean(),
            self.f2.mean(),
            self.f1.variance(),
            self.f2.variance(),
        )
    }

    pub fn check_invariants(&self) -> Result<()> {
        for (name, f) in [("f1", &self.f1), ("f2", &self.f2)] {
            let mass = f.mass();
            if (mass - 1.0).abs() > DensityField::MASS_TOL {
                return Err(Error::Invariant(format!("{name} has mass {mass} at t = {}", self.t)));
            }
            let min = f.min_value();
            if min < NEGATIVITY_TOL {
                return Err(Error::Invariant(format!("{name} has value {min} at t = {}", self.t)));
            }
        }
        Ok(())
    }

    /// CSV `x,f1,f2`.
    pub fn snapshot_csv(&self) -> String {
        let grid = self.f1.grid();
        let mut out = String::from("x,f1,f2\n");
        for (i, (a, b)) in self.f1.values().iter().zip(self.f2.values()).enumerate() {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", grid.center(i), a, b);
        }
        out
    }
}

/// Flux-form split at `x`: returns `(B, D)` with `D = (sigma^2/2) x^{2p}` and
/// `B = lambda x - mu + (sigma^2/2) 2p x^{2p-1}`.
pub fn drift_diffusion_split(coeffs: SpeciesCoeffs, p: f64, x: f64) -> (f64, f64) {
    let half = 0.5 * coeffs.sigma_sq;
    let d = half * x.powf(2.0 * p);
    let dprime = if p == 0.5 {
        half
    } else if x == 0.0 {
        0.0
    } else {
        half * 2.0 * p * x.powf(2.0 * p - 1.0)
    };
    (coeffs.lambda * x - coeffs.mu + dprime, d)
}

/// Chang-Cooper weight `1/w - 1/(e^w - 1)`, in `(0, 1)`, tending to 1/2 at `w = 0`.
pub fn chang_cooper_delta(w: f64) -> f64 {
    if w.abs() < 1e-6 {
        0.5 - w / 12.0
    } else {
        1.0 / w - 1.0 / w.exp_m1()
    }
}

/// Bernoulli function `w / (e^w - 1)`.
fn bernoulli(w: f64) -> f64 {
    if w.abs() < 1e-6 {
        1.0 - 0.5 * w
    } else {
        w / w.exp_m1()
    }
}

/// Face coefficients such that the flux through the face between cells
/// `i-1` and `i` is `right * f_i - left * f_{i-1}`; both are non-negative.
/// Equivalent to `F = B ((1 - delta) f_i + delta f_{i-1}) + D (f_i - f_{i-1}) / dx`.
fn face_coefficients(b: f64, d: f64, dx: f64) -> (f64, f64) {
    if d <= 0.0 {
        return (b.max(0.0), (-b).max(0.0));
    }
    let conductance = d / dx;
    let w = dx * b / d;
    (conductance * bernoulli(-w), conductance * bernoulli(w))
}

/// Thomas algorithm; `lower[0]` and `upper[n-1]` are ignored.
pub(crate) fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 || !beta.is_finite() {
        return Err(Error::Singular { row: 0 });
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::Singular { row: i });
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}

/// One backward-Euler step of a single species with frozen coefficients.
pub fn implicit_step(f: &DensityField, coeffs: SpeciesCoeffs, p: f64, dt: f64) -> Result<DensityField> {
    let grid = *f.grid();
    let n = grid.n;
    let dx = grid.dx();
    let r = dt / dx;
    // faces 0..=n; boundary faces carry no flux
    let mut right = vec![0.0; n + 1];
    let mut left = vec![0.0; n + 1];
    for j in 1..n {
        let (b, d) = drift_diffusion_split(coeffs, p, grid.face(j));
        let (a, l) = face_coefficients(b, d, dx);
        right[j] = a;
        left[j] = l;
    }
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        diag[i] = 1.0 + r * (left[i + 1] + right[i]);
        upper[i] = -r * right[i + 1];
        lower[i] = -r * left[i];
    }
    let mut values = f.values().to_vec();
    solve_tridiagonal(&lower, &diag, &upper, &mut values)?;
    Ok(DensityField::from_parts(grid, values))
}

/// Discrete zero-flux state of the scheme for frozen coefficients:
/// `f_i / f_{i-1} = exp(-dx B/D)` at every interior face, unit mass.
pub fn discrete_steady_state(coeffs: SpeciesCoeffs, p: f64, grid: &GridSpec) -> Result<DensityField> {
    grid.validate()?;
    let dx = grid.dx();
    let mut logs = vec![0.0; grid.n];
    for j in 1..grid.n {
        let (b, d) = drift_diffusion_split(coeffs, p, grid.face(j));
        if d <= 0.0 {
            return domain("zero diffusion at an interior face");
        }
        logs[j] = logs[j - 1] - dx * b / d;
    }
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = logs.iter().map(|l| (l - peak).exp()).collect();
    DensityField::normalized(*grid, values)
}

/// Advances both species by one step.
pub fn step(state: &SystemState, params: &ModelParams, config: &SolverConfig) -> Result<SystemState> {
    step_by(state, params, config, config.dt)
}

fn step_by(state: &SystemState, params: &ModelParams, config: &SolverConfig, dt: f64) -> Result<SystemState> {
    let mut ode_means = state.ode_means;
    let coeffs = match config.coupling {
        Coupling::SelfConsistent => coefficients_from_means(params, state.f1.mean(), state.f2.mean())?,
        Coupling::PrescribedOde => {
            let m = ode_means.unwrap_or((state.f1.mean(), state.f2.mean()));
            ode_means = Some(rk4_step_means(params, m, dt));
            coefficients_from_means(params, m.0, m.1)?
        }
        Coupling::Frozen(c) => c,
    };
    let f1 = implicit_step(&state.f1, coeffs.species(Species::Prey), params.p, dt)?;
    let f2 = implicit_step(&state.f2, coeffs.species(Species::Predator), params.p, dt)?;
    let next = SystemState {
        f1,
        f2,
        t: state.t + dt,
        coeffs,
        ode_means,
    };
    next.check_invariants()?;
    Ok(next)
}

/// Run-level diagnostics of one time level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub t: f64,
    pub m1: f64,
    pub m2: f64,
    pub v1: f64,
    pub v2: f64,
    pub mass1: f64,
    pub mass2: f64,
}

impl RunRow {
    pub fn of(state: &SystemState) -> Self {
        let m = state.moments();
        RunRow {
            t: state.t,
            m1: m.m1,
            m2: m.m2,
            v1: m.v1,
            v2: m.v2,
            mass1: state.f1.mass(),
            mass2: state.f2.mass(),
        }
    }

    pub const CSV_HEADER: &'static str = "t,m1,m2,v1,v2,mass1,mass2";

    pub fn csv_line(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.t, self.m1, self.m2, self.v1, self.v2, self.mass1, self.mass2
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    /// Snapshots every `output_stride` steps, always including the first and last.
    pub snapshots: Vec<SystemState>,
    /// One row per time level.
    pub history: Vec<RunRow>,
}

impl RunOutput {
    pub fn history_csv(&self) -> String {
        let mut out = format!("{}\n", RunRow::CSV_HEADER);
        for r in &self.history {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn last(&self) -> Option<&SystemState> {
        self.snapshots.last()
    }
}

/// Steps from `initial` to `initial.t + t_end`, calling `observe` on the
/// initial state and after every step. Returns the final state.
pub fn run_observed(
    params: &ModelParams,
    config: &SolverConfig,
    initial: &SystemState,
    mut observe: impl FnMut(usize, &SystemState) -> Result<()>,
) -> Result<SystemState> {
    config.validate()?;
    if initial.f1.grid() != &config.grid || initial.f2.grid() != &config.grid {
        return domain("initial densities do not live on the configured grid");
    }
    initial.check_invariants()?;
    let steps = config.n_steps();
    let t0 = initial.t;
    let mut state = initial.clone();
    observe(0, &state)?;
    for n in 1..=steps {
        let target = if n == steps {
            t0 + config.t_end
        } else {
            t0 + n as f64 * config.dt
        };
        let mut next = step_by(&state, params, config, target - state.t)?;
        next.t = target;
        observe(n, &next)?;
        state = next;
    }
    Ok(state)
}

/// Full run with snapshots at the output stride.
pub fn run(params: &ModelParams, config: &SolverConfig, initial: &SystemState) -> Result<RunOutput> {
    let steps = config.n_steps();
    let mut out = RunOutput::default();
    run_observed(params, config, initial, |n, s| {
        out.history.push(RunRow::of(s));
        if n % config.output_stride == 0 || n == steps {
            out.snapshots.push(s.clone());
        }
        Ok(())
    })?;
    Ok(out)
}

/// Cell averages of the unit-height indicator of `[m0 - 1/2, m0 + 1/2]`.
pub fn indicator_initial(m0: f64, grid: &GridSpec) -> Result<DensityField> {
    grid.validate()?;
    let (a, b) = (m0 - 0.5, m0 + 0.5);
    if !(a > 0.0 && b < grid.length) {
        return domain(format!(
            "indicator support [{a}, {b}] must lie inside (0, {})",
            grid.length
        ));
    }
    let dx = grid.dx();
    let values = (0..grid.n)
        .map(|i| {
            let (lo, hi) = (grid.face(i), grid.face(i + 1));
            (hi.min(b) - lo.max(a)).max(0.0) / dx
        })
        .collect();
    DensityField::new(*grid, values)
}

/// Indicator initial data for both species at `t = 0`.
pub fn indicator_state(params: &ModelParams, m1: f64, m2: f64, grid: &GridSpec) -> Result<SystemState> {
    SystemState::new(params, indicator_initial(m1, grid)?, indicator_initial(m2, grid)?)
}
