//! Subcommand implementations. Every command writes CSV files under the
//! configured output directory and returns the paths it wrote.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use toml::Value;

use lvfp_core::acceptance::{self, AcceptanceConfig, Outcome};
use lvfp_core::analysis::{energy_decay_rate, envelope_from_series, perturbation_coeffs, DecayRecord, Envelope};
use lvfp_core::densities::{equilibrium_density, quasi_equilibrium, sample_on_grid, DensityField};
use lvfp_core::fpsolver::{discrete_steady_state, indicator_state, run_observed, RunRow, SystemState};
use lvfp_core::metrics::{distance, DistanceKind, SpectralGrid};
use lvfp_core::model::{asymptotic_coefficients, equilibrium_mean, stationary_variances, MomentState, Species};
use lvfp_core::moments::{integrate_moments_every, MomentTrajectory};
use lvfp_core::Error;

use crate::config::{set_dotted, ConfigError, EquilibriumRef, MetricRequest, RunConfig};

/// At least one acceptance criterion failed (exit code 3).
#[derive(Debug)]
pub struct AcceptanceFailed(pub usize);

impl std::fmt::Display for AcceptanceFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} acceptance criteria failed", self.0)
    }
}

impl std::error::Error for AcceptanceFailed {}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

/// Short decimal label of a time, stable against rounding noise.
pub fn time_label(t: f64) -> String {
    format!("{}", (t * 1e9).round() / 1e9)
}

/// Writes the resolved configuration next to the outputs.
fn write_resolved_config(cfg: &RunConfig) -> Result<PathBuf> {
    let text = toml::to_string(cfg).context("cannot serialize configuration")?;
    write_file(&cfg.outdir, &format!("config_{}.toml", cfg.tag), &text)
}

pub fn moments(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let m = &cfg.moments;
    let mut out = String::from("orbit,t,m1,m2,v1,v2\n");
    for (i, [m1, m2]) in m.initial.iter().enumerate() {
        let init = MomentState::new(0.0, *m1, *m2, m.variances[0], m.variances[1]);
        let traj = integrate_moments_every(&cfg.model, &init, m.t_end, m.dt, m.stride)
            .with_context(|| format!("moment integration from ({m1}, {m2})"))?;
        for s in &traj.states {
            let _ = writeln!(
                out,
                "{i},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.t, s.m1, s.m2, s.v1, s.v2
            );
        }
    }
    let (e1, e2) = equilibrium_mean(&cfg.model)?;
    let (w1, w2) = stationary_variances(&cfg.model)?;
    let _ = writeln!(out, "fixed_point,,{e1:.16e},{e2:.16e},{w1:.16e},{w2:.16e}");
    Ok(vec![
        write_file(&cfg.outdir, &format!("moments_{}.csv", cfg.tag), &out)?,
        write_resolved_config(cfg)?,
    ])
}

/// Sorted distinct times at which a run must land exactly.
fn marks(cfg: &RunConfig) -> Vec<f64> {
    let mut ts = vec![0.0, cfg.solver.t_end];
    ts.extend(&cfg.solver.snapshot_times);
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    ts
}

/// Runs the configured simulation, splitting it into segments that end
/// exactly on the mark times. `observe` receives the global step count,
/// the state and, at a mark, the mark time.
fn drive(
    cfg: &RunConfig,
    mut observe: impl FnMut(usize, &SystemState, Option<f64>) -> Result<()>,
) -> Result<SystemState> {
    let mut state =
        indicator_state(&cfg.model, cfg.initial.m1, cfg.initial.m2, &cfg.grid).context("initial densities")?;
    observe(0, &state, Some(0.0))?;
    let mut global = 0;
    let ts = marks(cfg);
    for w in ts.windows(2) {
        let mut sc = cfg.solver_config()?;
        sc.t_end = w[1] - w[0];
        let steps = sc.n_steps();
        let mut err = None;
        state = run_observed(&cfg.model, &sc, &state, |n, s| {
            if n == 0 {
                return Ok(());
            }
            let mark = (n == steps).then_some(w[1]);
            observe(global + n, s, mark).map_err(|e| {
                err = Some(e);
                Error::Numeric("observer failed".into())
            })
        })
        .map_err(|e| err.take().unwrap_or_else(|| anyhow::Error::new(e)))
        .with_context(|| format!("solver on [{}, {}]", w[0], w[1]))?;
        state.t = w[1];
        global += steps;
    }
    Ok(state)
}

fn pair_csv(grid: &lvfp_core::densities::GridSpec, f1: &[f64], f2: &[f64]) -> String {
    let mut out = String::from("x,f1,f2\n");
    for i in 0..grid.n {
        let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", grid.center(i), f1[i], f2[i]);
    }
    out
}

fn quasi_fields(cfg: &RunConfig, s: &SystemState) -> Result<[DensityField; 2]> {
    let q = |sp| -> Result<DensityField> {
        let gg = quasi_equilibrium(&s.coeffs, sp, cfg.model.p)?;
        Ok(sample_on_grid(&gg, &cfg.grid)?)
    };
    Ok([q(Species::Prey)?, q(Species::Predator)?])
}

pub fn simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let sol = &cfg.solver;
    let mut history = format!("{}\n", RunRow::CSV_HEADER);
    let mut written = Vec::new();
    drive(cfg, |n, s, mark| {
        if n % sol.history_stride == 0 || mark.is_some() {
            history.push_str(&RunRow::of(s).csv_line());
            history.push('\n');
        }
        let every = sol.snapshot_every.is_some_and(|k| n % k == 0);
        if mark.is_some() || every {
            let label = time_label(mark.unwrap_or(s.t));
            written.push(write_file(
                &cfg.outdir,
                &format!("snapshot_t{label}.csv"),
                &s.snapshot_csv(),
            )?);
            if sol.quasi_snapshots {
                let [q1, q2] = quasi_fields(cfg, s)?;
                let text = pair_csv(&cfg.grid, q1.values(), q2.values());
                written.push(write_file(&cfg.outdir, &format!("quasi_t{label}.csv"), &text)?);
            }
        }
        Ok(())
    })?;
    written.push(write_file(&cfg.outdir, &format!("simulate_{}.csv", cfg.tag), &history)?);
    written.push(write_resolved_config(cfg)?);
    Ok(written)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    Quasi,
    Equilibrium,
}

impl Reference {
    pub fn name(self) -> &'static str {
        match self {
            Reference::Quasi => "quasi",
            Reference::Equilibrium => "equilibrium",
        }
    }
}

/// One measured distance history.
#[derive(Clone, Debug)]
pub struct DistanceSeries {
    pub request: MetricRequest,
    pub species: Species,
    pub reference: Reference,
    pub record: DecayRecord,
}

/// Order of the Energy distance whose decay rate bounds this kind, if any.
fn theory_ell(req: &MetricRequest) -> Option<f64> {
    match req.kind {
        DistanceKind::EnergyR => Some((1.0 + req.order) / 2.0),
        DistanceKind::EnergyNormEll | DistanceKind::Sobolev => Some(req.order),
        DistanceKind::CramerCdf | DistanceKind::CramerFourier => Some(1.0),
        DistanceKind::RelEntropy => None,
    }
}

fn measure(req: &MetricRequest, f: &DensityField, g: &DensityField, sg: &SpectralGrid) -> Result<f64> {
    match distance(req.kind, req.order, f, g, sg) {
        Ok(r) => Ok(r.value),
        Err(Error::InfiniteEntropy { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e.into()),
    }
}

fn subsample(env: &Envelope, idx: &[usize]) -> Envelope {
    Envelope {
        times: idx.iter().map(|&i| env.times[i]).collect(),
        duhamel: idx.iter().map(|&i| env.duhamel[i]).collect(),
        closed: idx.iter().map(|&i| env.closed[i]).collect(),
        lambda_star: env.lambda_star,
    }
}

/// Simulates in line and measures every requested distance of each
/// species to its quasi-equilibrium and to the equilibrium.
pub fn distance_series(cfg: &RunConfig) -> Result<Vec<DistanceSeries>> {
    let sg = SpectralGrid::default();
    let p = cfg.model.p;
    let asym = asymptotic_coefficients(&cfg.model)?;
    let reference = |sp: Species| -> Result<DensityField> {
        Ok(match cfg.distances.equilibrium {
            EquilibriumRef::Sampled => sample_on_grid(&equilibrium_density(&cfg.model, sp)?, &cfg.grid)?,
            EquilibriumRef::Discrete => discrete_steady_state(asym.species(sp), p, &cfg.grid)?,
        })
    };
    let eq = [reference(Species::Prey)?, reference(Species::Predator)?];
    let combos: Vec<(MetricRequest, usize, Reference)> = cfg
        .metrics
        .iter()
        .flat_map(|r| (0..2).flat_map(move |k| [Reference::Quasi, Reference::Equilibrium].map(|rf| (*r, k, rf))))
        .collect();
    let mut values = vec![Vec::new(); combos.len()];
    let mut times = Vec::new();
    let mut sample_idx = Vec::new();
    let mut states = Vec::new();
    drive(cfg, |n, s, mark| {
        states.push(s.moments());
        if n % cfg.solver.metrics_stride == 0 || mark.is_some() {
            sample_idx.push(states.len() - 1);
            times.push(s.t);
            let quasi = quasi_fields(cfg, s)?;
            for (c, (req, k, rf)) in combos.iter().enumerate() {
                let g = match rf {
                    Reference::Quasi => &quasi[*k],
                    Reference::Equilibrium => &eq[*k],
                };
                values[c].push(measure(req, s.density(Species::BOTH[*k]), g, &sg)?);
            }
        }
        Ok(())
    })?;
    let traj = MomentTrajectory::from_states(states)?;

    let mut out = Vec::with_capacity(combos.len());
    for ((req, k, rf), measured) in combos.into_iter().zip(values) {
        let sp = Species::BOTH[k];
        let theory = theory_ell(&req).and_then(|ell| energy_decay_rate(p, ell, &asym, sp).ok());
        let is_cramer = matches!(req.kind, DistanceKind::CramerCdf | DistanceKind::CramerFourier);
        let envelope = if is_cramer && rf == Reference::Equilibrium && measured[0].is_finite() {
            let pc = perturbation_coeffs(&cfg.model, &traj, sp)?;
            envelope_from_series(&pc.times, &pc.lambda, &pc.m, measured[0])
                .ok()
                .map(|e| subsample(&e, &sample_idx))
        } else {
            None
        };
        let record = DecayRecord::new(times.clone(), measured, envelope, theory)?;
        out.push(DistanceSeries {
            request: req,
            species: sp,
            reference: rf,
            record,
        });
    }
    Ok(out)
}

pub const DISTANCES_HEADER: &str =
    "kind,order,species,reference,t,measured,envelope_duhamel,envelope_closed,theory_rate,fitted_rate";

pub fn distances_csv(series: &[DistanceSeries]) -> String {
    let mut out = format!("{DISTANCES_HEADER}\n");
    for s in series {
        let prefix = format!(
            "{},{:.16e},{},{}",
            s.request.kind.name(),
            s.request.order,
            s.species.number(),
            s.reference.name()
        );
        for line in s.record.to_csv().lines().skip(1) {
            let _ = writeln!(out, "{prefix},{line}");
        }
    }
    out
}

pub fn distances(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let series = distance_series(cfg)?;
    Ok(vec![
        write_file(
            &cfg.outdir,
            &format!("distances_{}.csv", cfg.tag),
            &distances_csv(&series),
        )?,
        write_resolved_config(cfg)?,
    ])
}

/// Thread pool capped by `LVFP_THREADS` (all cores when unset).
pub fn pool() -> Result<rayon::ThreadPool> {
    let n = match std::env::var("LVFP_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| ConfigError(format!("LVFP_THREADS must be a non-negative integer, got '{v}'")))?,
        Err(_) => 0,
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
}

/// Runs the selected criteria and returns their outcomes in order.
pub fn verify(cfg: &RunConfig, filter: Option<&str>) -> Result<Vec<Outcome>> {
    let acfg = AcceptanceConfig {
        params: cfg.model,
        grid: cfg.grid,
        seed: cfg.seed,
    };
    acfg.validate().map_err(|e| ConfigError(e.to_string()))?;
    let selected = acceptance::select(filter).map_err(|e| ConfigError(e.to_string()))?;
    let outcomes = pool()?.install(|| selected.par_iter().map(|c| acceptance::run(*c, &acfg)).collect());
    Ok(outcomes)
}

/// Configuration of the `i`-th sweep run.
fn sweep_member(base: &RunConfig, param: &str, value: f64, i: usize) -> Result<RunConfig> {
    let dir = base.outdir.join(format!("sweep_{}", base.tag)).join(format!("run_{i}"));
    let build = |v: Value| -> Result<RunConfig> {
        let mut t = base.to_table();
        t.remove("sweep");
        set_dotted(&mut t, param, v)?;
        t.insert("outdir".into(), Value::String(dir.display().to_string()));
        RunConfig::from_table(t)
    };
    match build(Value::Float(value)) {
        Err(e) if value.fract() == 0.0 && value.abs() < 9e15 => build(Value::Integer(value as i64)).map_err(|_| e),
        r => r,
    }
}

pub const SWEEP_HEADER: &str = "param,value,kind,order,species,reference,theory_rate,fitted_rate";

pub fn sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| ConfigError("sweep needs a [sweep] section with param and values".into()))?;
    if sw.values.is_empty() {
        return Err(ConfigError("sweep.values is empty".into()).into());
    }
    let members = sw
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| sweep_member(cfg, &sw.param, *v, i))
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<Result<(Vec<DistanceSeries>, Vec<PathBuf>)>> = pool()?.install(|| {
        members
            .par_iter()
            .map(|m| {
                let series = distance_series(m).with_context(|| format!("sweep run in {}", m.outdir.display()))?;
                let path = write_file(&m.outdir, &format!("distances_{}.csv", m.tag), &distances_csv(&series))?;
                Ok((series, vec![path, write_resolved_config(m)?]))
            })
            .collect()
    });
    let mut table = format!("{SWEEP_HEADER}\n");
    let mut written = Vec::new();
    for (v, r) in sw.values.iter().zip(results) {
        let (series, paths) = r?;
        written.extend(paths);
        for s in series {
            let _ = writeln!(
                table,
                "{},{v:.16e},{},{:.16e},{},{},{},{}",
                sw.param,
                s.request.kind.name(),
                s.request.order,
                s.species.number(),
                s.reference.name(),
                fmt_opt(s.record.theory_rate),
                fmt_opt(s.record.fit.map(|f| f.rate)),
            );
        }
    }
    written.push(write_file(&cfg.outdir, &format!("sweep_{}.csv", cfg.tag), &table)?);
    Ok(written)
}
