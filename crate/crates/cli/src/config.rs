//! Run configuration: a TOML file with dotted sections, overridable from
//! the command line with `--set section.key=value`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use lvfp_core::acceptance::{INDICATOR_MEANS, ORBIT_INITIAL_MEANS};
use lvfp_core::densities::GridSpec;
use lvfp_core::fpsolver::{Coupling, SolverConfig};
use lvfp_core::metrics::DistanceKind;
use lvfp_core::model::{asymptotic_coefficients, ModelParams};

/// Problems with the configuration itself (exit code 1).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub tag: String,
    pub outdir: PathBuf,
    pub seed: u64,
    pub model: ModelParams,
    pub grid: GridSpec,
    pub initial: InitialSection,
    pub solver: SolverSection,
    pub moments: MomentsSection,
    pub metrics: Vec<MetricRequest>,
    pub distances: DistancesSection,
    pub sweep: Option<SweepSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tag: "run".into(),
            outdir: PathBuf::from("out"),
            seed: 20240601,
            model: ModelParams::default(),
            grid: GridSpec::default(),
            initial: InitialSection::default(),
            solver: SolverSection::default(),
            moments: MomentsSection::default(),
            metrics: vec![
                MetricRequest {
                    kind: DistanceKind::CramerCdf,
                    order: 1.0,
                },
                MetricRequest {
                    kind: DistanceKind::EnergyNormEll,
                    order: 1.0,
                },
            ],
            distances: DistancesSection::default(),
            sweep: None,
        }
    }
}

/// Means of the indicator initial densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub m1: f64,
    pub m2: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            m1: INDICATOR_MEANS.0,
            m2: INDICATOR_MEANS.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    SelfConsistent,
    PrescribedOde,
    /// Coefficients pinned at their asymptotic values.
    Frozen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    /// Defaults to half the cell width.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub coupling: CouplingKind,
    /// Times at which density snapshots are written, besides 0 and `t_end`.
    pub snapshot_times: Vec<f64>,
    /// Also write a snapshot every this many steps.
    pub snapshot_every: Option<usize>,
    /// Write quasi-equilibrium densities next to each snapshot.
    pub quasi_snapshots: bool,
    /// Steps between rows of the run-level CSV.
    pub history_stride: usize,
    /// Steps between distance evaluations.
    pub metrics_stride: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            dt: None,
            t_end: 50.0,
            coupling: CouplingKind::SelfConsistent,
            snapshot_times: Vec::new(),
            snapshot_every: None,
            quasi_snapshots: false,
            history_stride: 1,
            metrics_stride: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsSection {
    /// Initial means, one orbit each.
    pub initial: Vec<[f64; 2]>,
    pub variances: [f64; 2],
    pub t_end: f64,
    pub dt: f64,
    /// Steps between written rows.
    pub stride: usize,
}

impl Default for MomentsSection {
    fn default() -> Self {
        MomentsSection {
            initial: ORBIT_INITIAL_MEANS.iter().map(|&(a, b)| [a, b]).collect(),
            variances: [0.1, 0.1],
            t_end: 50.0,
            dt: lvfp_core::moments::DEFAULT_DT,
            stride: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRequest {
    pub kind: DistanceKind,
    #[serde(default = "one")]
    pub order: f64,
}

fn one() -> f64 {
    1.0
}

/// Which equilibrium the `equilibrium` reference means.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumRef {
    /// Closed-form equilibrium sampled at cell centres.
    #[default]
    Sampled,
    /// Exact fixed point of the scheme for the asymptotic coefficients.
    /// Free of the O(dx^2) floor, so fitted rates see the true decay.
    Discrete,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistancesSection {
    pub equilibrium: EquilibriumRef,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Dotted key of the varied parameter, e.g. `model.sigma1`.
    pub param: String,
    pub values: Vec<f64>,
}

impl RunConfig {
    /// Reads `path` (or starts from defaults), applies `key=value`
    /// overrides in order, then the explicit tag and output directory.
    pub fn load(
        path: Option<&Path>,
        sets: &[String],
        tag: Option<&str>,
        outdir: Option<&Path>,
    ) -> anyhow::Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| config_err(format!("cannot parse config {}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for s in sets {
            let (key, value) = s
                .split_once('=')
                .ok_or_else(|| config_err(format!("override '{s}' is not of the form key=value")))?;
            set_dotted(&mut table, key.trim(), parse_value(value.trim()))?;
        }
        if let Some(t) = tag {
            table.insert("tag".into(), Value::String(t.into()));
        }
        if let Some(o) = outdir {
            table.insert("outdir".into(), Value::String(o.display().to_string()));
        }
        Self::from_table(table)
    }

    pub fn from_table(table: Table) -> anyhow::Result<Self> {
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e| config_err(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_table(&self) -> Table {
        Table::try_from(self).expect("configuration serializes to TOML")
    }

    /// Checks that do not need a simulation.
    pub fn validate(&self) -> anyhow::Result<()> {
        let wrap = |e: lvfp_core::Error| config_err(e.to_string());
        self.model.validate().map_err(wrap)?;
        self.model.check_coexistence().map_err(wrap)?;
        self.grid.validate().map_err(wrap)?;
        if self.tag.is_empty() || self.tag.contains(['/', '\\']) {
            return Err(config_err(format!(
                "tag '{}' must be non-empty and contain no path separators",
                self.tag
            )));
        }
        let s = &self.solver;
        if s.history_stride == 0 || s.metrics_stride == 0 || s.snapshot_every == Some(0) {
            return Err(config_err("strides must be at least 1"));
        }
        if let Some(bad) = s.snapshot_times.iter().find(|t| !(**t >= 0.0 && **t <= s.t_end)) {
            return Err(config_err(format!("snapshot time {bad} lies outside [0, {}]", s.t_end)));
        }
        self.solver_config()?;
        let m = &self.moments;
        if m.stride == 0 || !(m.dt > 0.0) || !(m.t_end >= 0.0) {
            return Err(config_err("moments need dt > 0, t_end >= 0 and stride >= 1"));
        }
        Ok(())
    }

    pub fn solver_config(&self) -> anyhow::Result<SolverConfig> {
        let mut sc = SolverConfig::for_grid(self.grid);
        if let Some(dt) = self.solver.dt {
            sc.dt = dt;
        }
        sc.t_end = self.solver.t_end;
        sc.coupling = match self.solver.coupling {
            CouplingKind::SelfConsistent => Coupling::SelfConsistent,
            CouplingKind::PrescribedOde => Coupling::PrescribedOde,
            CouplingKind::Frozen => {
                Coupling::Frozen(asymptotic_coefficients(&self.model).map_err(|e| config_err(e.to_string()))?)
            }
        };
        sc.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(sc)
    }
}

/// TOML literal if it parses as one, otherwise a bare string.
pub fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Inserts `value` at a dotted key, creating intermediate tables.
pub fn set_dotted(table: &mut Table, key: &str, value: Value) -> anyhow::Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("malformed key '{key}'")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(config_err(format!("'{part}' in '{key}' is not a section"))),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_table(cfg.to_table()).unwrap(), cfg);
    }

    #[test]
    fn dotted_keys_and_overrides() {
        let table: Table = "model.alpha = 1.0\nmodel.K = 100\nsolver.t_end = 5\ngrid.n = 201\n"
            .parse()
            .unwrap();
        let mut cfg_table = table;
        set_dotted(&mut cfg_table, "model.p", parse_value("1")).unwrap();
        set_dotted(&mut cfg_table, "solver.coupling", parse_value("frozen")).unwrap();
        let cfg = RunConfig::from_table(cfg_table).unwrap();
        assert_eq!(cfg.model.p, 1.0);
        assert_eq!(cfg.solver.t_end, 5.0);
        assert_eq!(cfg.grid.n, 201);
        assert_eq!(cfg.solver.coupling, CouplingKind::Frozen);
    }

    #[test]
    fn rejects_unknown_keys_and_inadmissible_models() {
        let t: Table = "model.alhpa = 1.0".parse().unwrap();
        assert!(RunConfig::from_table(t).is_err());
        let t: Table = "model.K = 1.0".parse().unwrap();
        let err = RunConfig::from_table(t).unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().unwrap().0.contains("coexistence"));
    }

    #[test]
    fn metric_requests_parse() {
        let t: Table = "[[metrics]]\nkind = \"energy_norm_ell\"\norder = 1.2\n[[metrics]]\nkind = \"rel_entropy\"\n"
            .parse()
            .unwrap();
        let cfg = RunConfig::from_table(t).unwrap();
        assert_eq!(cfg.metrics.len(), 2);
        assert_eq!(cfg.metrics[1].order, 1.0);
    }
}
