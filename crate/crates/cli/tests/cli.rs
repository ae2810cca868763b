use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_lvfp");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn lvfp(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--outdir")
        .arg(out)
        .env("LVFP_THREADS", "4")
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

/// Rows of a CSV file as header-keyed maps.
fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().expect("header row").split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key]
        .parse()
        .unwrap_or_else(|_| panic!("{key} = '{}' is not a number", row[key]))
}

fn columns(path: &Path, key: &str) -> Vec<f64> {
    read_csv(path).iter().map(|r| num(r, key)).collect()
}

#[test]
fn moments_zero_horizon_writes_initial_conditions() {
    let dir = TempDir::new().unwrap();
    let o = lvfp(
        &[
            "moments",
            "--config",
            fixture("orbits.toml").to_str().unwrap(),
            "--set",
            "moments.t_end=0",
        ],
        dir.path(),
    );
    ok(&o);
    let rows = read_csv(&dir.path().join("moments_orbits.csv"));
    let orbits: Vec<_> = rows.iter().filter(|r| r["orbit"] != "fixed_point").collect();
    assert_eq!(orbits.len(), 4);
    let expected = [(4.5, 0.75), (5.25, 3.75), (6.75, 5.25), (7.5, 6.0)];
    for (r, (m1, m2)) in orbits.iter().zip(expected) {
        assert_eq!(num(r, "t"), 0.0);
        assert_eq!((num(r, "m1"), num(r, "m2")), (m1, m2));
        assert_eq!((num(r, "v1"), num(r, "v2")), (0.1, 0.1));
    }
    let fp = rows.last().unwrap();
    assert_eq!(fp["orbit"], "fixed_point");
    assert!((num(fp, "m1") - 10.0 / 3.0).abs() < 1e-15);
    assert!((num(fp, "m2") - 29.0 / 15.0).abs() < 1e-15);
}

#[test]
fn moments_orbits_reach_fixed_point_by_t50() {
    let dir = TempDir::new().unwrap();
    ok(&lvfp(
        &["moments", "--config", fixture("orbits.toml").to_str().unwrap()],
        dir.path(),
    ));
    let rows = read_csv(&dir.path().join("moments_orbits.csv"));
    let fp = rows.last().unwrap();
    let mut worst: f64 = 0.0;
    for orbit in ["0", "1", "2", "3"] {
        let last = rows.iter().rfind(|r| r["orbit"] == orbit).unwrap();
        assert_eq!(num(last, "t"), 50.0);
        for key in ["m1", "m2", "v1", "v2"] {
            worst = worst.max((num(last, key) - num(fp, key)).abs());
        }
    }
    println!("largest gap to the fixed point at t = 50: {worst:.3e}");
    assert!(worst < 1e-3, "gap {worst:.3e}");
}

#[test]
fn simulate_conserves_mass_in_output() {
    let dir = TempDir::new().unwrap();
    ok(&lvfp(
        &[
            "simulate",
            "--config",
            fixture("indicator_p12.toml").to_str().unwrap(),
            "--set",
            "solver.t_end=5",
            "--set",
            "solver.snapshot_times=[1.0]",
        ],
        dir.path(),
    ));
    let path = dir.path().join("simulate_indicator_p12.csv");
    for key in ["mass1", "mass2"] {
        let masses = columns(&path, key);
        assert!(masses.len() > 5);
        for m in masses {
            assert!((m - 1.0).abs() <= 1e-12, "{key} = {m}");
        }
    }
    for t in ["0", "1", "5"] {
        let snap = read_csv(&dir.path().join(format!("snapshot_t{t}.csv")));
        assert_eq!(snap.len(), 1001);
        assert!(dir.path().join(format!("quasi_t{t}.csv")).exists());
    }
}

#[test]
fn simulate_p1_uses_the_same_interface() {
    let dir = TempDir::new().unwrap();
    ok(&lvfp(
        &[
            "simulate",
            "--config",
            fixture("indicator_p1.toml").to_str().unwrap(),
            "--set",
            "solver.t_end=2",
            "--set",
            "solver.snapshot_times=[1.0]",
        ],
        dir.path(),
    ));
    let rows = read_csv(&dir.path().join("simulate_indicator_p1.csv"));
    assert_eq!(num(rows.last().unwrap(), "t"), 2.0);
    assert!(dir.path().join("quasi_t1.csv").exists());
    assert!(fs::read_to_string(dir.path().join("config_indicator_p1.toml"))
        .unwrap()
        .contains("p = 1.0"));
}

fn l1_gap(snapshot: &Path, quasi: &Path, key: &str) -> f64 {
    let f = read_csv(snapshot);
    let q = read_csv(quasi);
    let dx = num(&f[1], "x") - num(&f[0], "x");
    f.iter()
        .zip(&q)
        .map(|(a, b)| (num(a, key) - num(b, key)).abs() * dx)
        .sum()
}

#[test]
fn simulate_densities_approach_quasi_equilibrium_by_t20() {
    let dir = TempDir::new().unwrap();
    ok(&lvfp(
        &[
            "simulate",
            "--config",
            fixture("indicator_p12.toml").to_str().unwrap(),
            "--set",
            "solver.t_end=20",
        ],
        dir.path(),
    ));
    let snap = dir.path().join("snapshot_t20.csv");
    let quasi = dir.path().join("quasi_t20.csv");
    let gaps = [l1_gap(&snap, &quasi, "f1"), l1_gap(&snap, &quasi, "f2")];
    println!("L1 gap to quasi-equilibrium at t = 20: {gaps:?}");
    assert!(gaps.iter().all(|g| *g < 0.05), "gaps {gaps:?}");
}

#[test]
fn identical_configs_give_identical_bytes() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let config = fixture("envelope.toml");
    let args = [
        "distances",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "solver.t_end=1",
        "--set",
        "solver.metrics_stride=10",
    ];
    ok(&lvfp(&args, a.path()));
    ok(&lvfp(&args, b.path()));
    let read = |d: &TempDir| fs::read(d.path().join("distances_envelope.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let sim = ["simulate", "--set", "solver.t_end=1", "--tag", "det"];
    ok(&lvfp(&sim, a.path()));
    ok(&lvfp(&sim, b.path()));
    let read = |d: &TempDir| fs::read(d.path().join("simulate_det.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn floats_round_trip_with_seventeen_digits() {
    let dir = TempDir::new().unwrap();
    ok(&lvfp(
        &["moments", "--set", "moments.t_end=0.01", "--set", "moments.stride=1"],
        dir.path(),
    ));
    let text = fs::read_to_string(dir.path().join("moments_run.csv")).unwrap();
    let field = text.lines().nth(2).unwrap().split(',').nth(2).unwrap();
    let mantissa = field.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{field}");
}

#[test]
fn cramer_record_stays_below_duhamel_envelope() {
    let dir = TempDir::new().unwrap();
    ok(&lvfp(
        &[
            "distances",
            "--config",
            fixture("envelope.toml").to_str().unwrap(),
            "--set",
            "solver.t_end=10",
            "--set",
            "solver.metrics_stride=2",
            "--set",
            "metrics=[{kind=\"cramer_cdf\"}]",
        ],
        dir.path(),
    ));
    let rows = read_csv(&dir.path().join("distances_envelope.csv"));
    let eq: Vec<_> = rows.iter().filter(|r| r["reference"] == "equilibrium").collect();
    assert!(eq.len() > 100);
    for r in eq {
        let (m, e) = (num(r, "measured"), num(r, "envelope_duhamel"));
        assert!(
            m <= e * (1.0 + 1e-12),
            "species {} t {}: {m} > {e}",
            r["species"],
            r["t"]
        );
        assert!(!r["envelope_closed"].is_empty());
    }
    assert!(rows
        .iter()
        .filter(|r| r["reference"] == "quasi")
        .all(|r| r["envelope_duhamel"].is_empty()));
}

#[test]
fn quasi_and_equilibrium_distances_draw_together() {
    let dir = TempDir::new().unwrap();
    ok(&lvfp(
        &[
            "distances",
            "--config",
            fixture("envelope.toml").to_str().unwrap(),
            "--set",
            "solver.metrics_stride=50",
            "--set",
            "metrics=[{kind=\"cramer_cdf\"}]",
        ],
        dir.path(),
    ));
    let rows = read_csv(&dir.path().join("distances_envelope.csv"));
    for species in ["1", "2"] {
        let series = |rf: &str| -> Vec<f64> {
            rows.iter()
                .filter(|r| r["species"] == species && r["reference"] == rf)
                .map(|r| num(r, "measured"))
                .collect()
        };
        let (q, e) = (series("quasi"), series("equilibrium"));
        let first = (q[0] - e[0]).abs();
        let last = (q[q.len() - 1] - e[e.len() - 1]).abs();
        assert!(last < 0.5 * first, "species {species}: |dq - de| {first} -> {last}");
    }
}

#[test]
fn theory_fields_absent_outside_their_range() {
    let dir = TempDir::new().unwrap();
    ok(&lvfp(
        &[
            "distances",
            "--config",
            fixture("indicator_p12.toml").to_str().unwrap(),
            "--set",
            "solver.t_end=0.5",
            "--set",
            "solver.snapshot_times=[]",
        ],
        dir.path(),
    ));
    let rows = read_csv(&dir.path().join("distances_indicator_p12.csv"));
    for r in &rows {
        let order = num(r, "order");
        let has_theory = !r["theory_rate"].is_empty();
        assert_eq!(has_theory, order >= 1.0, "{} order {order}", r["kind"]);
    }
}

#[test]
fn sweep_writes_exclusive_run_directories() {
    let dir = TempDir::new().unwrap();
    ok(&lvfp(
        &[
            "sweep",
            "--config",
            fixture("sweep.toml").to_str().unwrap(),
            "--set",
            "solver.t_end=1",
            "--set",
            "sweep.values=[0.05, 0.1]",
        ],
        dir.path(),
    ));
    for i in 0..2 {
        assert!(dir
            .path()
            .join(format!("sweep_sigma1/run_{i}/distances_sigma1.csv"))
            .exists());
    }
    let rows = read_csv(&dir.path().join("sweep_sigma1.csv"));
    assert_eq!(rows.len(), 2 * 2 * 2);
    assert!(rows.iter().all(|r| r["param"] == "model.sigma1"));
}

#[test]
fn verify_rejects_inadmissible_parameters() {
    let dir = TempDir::new().unwrap();
    let o = lvfp(&["verify", "--set", "model.K=1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("inadmissible"));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    for args in [
        vec!["simulate", "--set", "model.alhpa=1"],
        vec!["simulate", "--set", "grid.n"],
        vec!["simulate", "--config", "/nonexistent/lvfp.toml"],
        vec!["sweep"],
        vec!["verify", "--filter", "nothing"],
        vec!["moments", "--set", "model.p=0.75"],
    ] {
        let o = lvfp(&args, dir.path());
        assert_eq!(
            o.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn verify_filter_runs_only_metric_criteria() {
    let dir = TempDir::new().unwrap();
    let o = lvfp(&["verify", "--filter", "metrics"], dir.path());
    ok(&o);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let rows: Vec<_> = stdout
        .lines()
        .filter(|l| l.starts_with("PASS") || l.starts_with("FAIL"))
        .collect();
    assert_eq!(rows.len(), 3, "{stdout}");
    assert!(rows.iter().all(|l| l.contains("[metrics]")));
}

#[test]
fn verify_default_config_passes() {
    let dir = TempDir::new().unwrap();
    let o = lvfp(&["verify"], dir.path());
    println!("{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(o.status.code(), Some(0));
}
