use std::path::Path;
use std::process::{Command, Output};

use leray_alpha::{random_shell, SpectralField, SpectrumLayout};
use serde_json::Value;

fn leray(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leray")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn ndjson(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

const BASE: &str = "N = 2\ndt = 1e-3\nT = 0.02\nrecord_every = 5\ninit = single_mode(1,0,0,1.0)\n";

#[test]
fn simulate_writes_echo_events_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "a.cfg", &format!("{BASE}ensemble = 3\nsave_modes = true\nseed = 4\n"));
    let o = leray(d, &["simulate", "--config", "a.cfg", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = ndjson(&d.join("o/run.ndjson"));
    let meta = &lines[0]["meta"];
    assert_eq!(meta["command"], "simulate");
    assert_eq!(meta["config"]["N"], 2);
    assert_eq!(meta["config"]["seed"], 4);
    assert_eq!(meta["config"]["init"], "single_mode(1,0,0,1.0000000000000000e0)");
    // 3 paths × (T/dt/record_every + 1) events
    let events: Vec<_> = lines.iter().filter(|l| l.get("traj").is_some()).collect();
    assert_eq!(events.len(), 3 * 5);
    assert!(events.iter().all(|e| e["modes"].as_array().unwrap().len() == 13));
    let summary = &lines.last().unwrap()["summary"];
    assert_eq!(summary["trajectories"], 3);
    assert_eq!(summary["pass"], true);
}

#[test]
fn zero_noise_linear_run_keeps_the_initial_field() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let y0 = random_shell(SpectrumLayout::shared(3).unwrap(), 1.0, 8).unwrap();
    write(d, "y0.ndjson", &y0.to_ndjson());
    write(
        d,
        "a.cfg",
        "N = 3\ndt = 1e-2\nT = 0.1\nsigma = 0\nlinear_only = true\nsave_modes = true\ninit = y0.ndjson\n",
    );
    assert_eq!(code(&leray(d, &["simulate", "--config", "a.cfg", "--out", "o"])), 0);
    let last = ndjson(&d.join("o/run.ndjson")).into_iter().rev().find(|l| l.get("modes").is_some()).unwrap();
    assert_eq!(last["t"].as_f64().unwrap(), 0.1);
    let text: String = last["modes"].as_array().unwrap().iter().map(|m| format!("{m}\n")).collect();
    let y_t = SpectralField::from_ndjson(y0.layout().clone(), &text).unwrap();
    assert_eq!(y_t, y0);
}

#[test]
fn config_errors_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cases = [
        ("unknown.cfg", format!("{BASE}colour = blue\n"), "line 6"),
        ("dup.cfg", format!("{BASE}N = 3\n"), "line 6"),
        ("bad_dt.cfg", "N = 2\ndt = 0.5\nT = 0.1\ninit = single_mode(1,0,0,1)\n".to_string(), "exceeds"),
        ("missing.cfg", "N = 2\ndt = 1e-3\nT = 0.1\n".to_string(), "init"),
        ("bad_mode.cfg", "N = 2\ndt = 1e-3\nT = 0.1\ninit = single_mode(0,0,0,1)\n".to_string(), "line 4"),
    ];
    for (name, text, needle) in &cases {
        write(d, name, text);
        let o = leray(d, &["simulate", "--config", name, "--out", "o"]);
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(code(&o), 2, "{name}: {err}");
        assert!(err.contains(needle), "{name}: {err}");
    }
    assert_eq!(code(&leray(d, &["simulate", "--config", "nope.cfg"])), 2);
    assert_eq!(code(&leray(d, &["frobnicate"])), 2);
}

#[test]
fn small_smoothing_power_warns() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "a.cfg", &format!("{BASE}p = 1.2\n"));
    let o = leray(d, &["simulate", "--config", "a.cfg", "--out", "o"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    write(d, "b.cfg", &format!("{BASE}p = 2\n"));
    let o = leray(d, &["simulate", "--config", "b.cfg", "--out", "o2"]);
    assert!(!String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn seed_flag_overrides_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "a.cfg", &format!("{BASE}seed = 1\n"));
    for (out, seed) in [("o1", "1"), ("o2", "2")] {
        assert_eq!(code(&leray(d, &["simulate", "--config", "a.cfg", "--seed", seed, "--out", out])), 0);
    }
    assert_eq!(code(&leray(d, &["simulate", "--config", "a.cfg", "--out", "o3"])), 0);
    let read = |o: &str| std::fs::read(d.join(o).join("run.ndjson")).unwrap();
    assert_ne!(read("o1"), read("o2"));
    assert_eq!(read("o1"), read("o3"));
}

#[test]
fn girsanov_compare_refuses_zero_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "a.cfg", &format!("{BASE}sigma = 0\n"));
    let o = leray(d, &["girsanov-compare", "--config", "a.cfg", "--out", "o"]);
    assert_eq!(code(&o), 2);
    assert!(!d.join("o/girsanov.csv").exists());
}

#[test]
fn girsanov_compare_writes_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "a.cfg", &format!("{BASE}ensemble = 300\n"));
    let o = leray(d, &["girsanov-compare", "--config", "a.cfg", "--observable", "energy", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let csv = std::fs::read_to_string(d.join("o/girsanov.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    let meta: Value = serde_json::from_str(lines[0].strip_prefix("# ").unwrap()).unwrap();
    assert_eq!(meta["config"]["observable"], "energy");
    let header: Vec<_> = lines[1].split(',').collect();
    let row: Vec<_> = lines[2].split(',').collect();
    assert_eq!(header.len(), row.len());
    assert_eq!(row[0], "energy");
    assert_eq!(row[10], "300");
}

#[test]
fn covariance_degenerate_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    // no noise: MC and ODE both stay at A(0)
    write(d, "quiet.cfg", &format!("{BASE}sigma = 0\nensemble = 20\n"));
    assert_eq!(code(&leray(d, &["covariance", "--config", "quiet.cfg", "--out", "q"])), 0);
    let lines = ndjson(&d.join("q/cov_report.ndjson"));
    for l in lines.iter().filter(|l| l.get("z").is_some()) {
        assert!(l["z"].as_array().unwrap().iter().all(|z| z.as_f64() == Some(0.0)));
        assert_eq!(l["ode"], l["mc"]);
    }

    // zero initial field: everything is identically zero
    write(d, "zero.ndjson", "");
    write(d, "zero.cfg", "N = 2\ndt = 1e-3\nT = 0.02\nensemble = 10\ninit = file:zero.ndjson\n");
    let o = leray(d, &["covariance", "--config", "zero.cfg", "--out", "z"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = ndjson(&d.join("z/cov_report.ndjson"));
    let per_mode: Vec<_> = lines.iter().filter(|l| l.get("ode").is_some()).collect();
    assert_eq!(per_mode.len(), 13);
    for l in per_mode {
        for key in ["ode", "mc", "se", "z"] {
            assert!(l[key].as_array().unwrap().iter().all(|x| x.as_f64() == Some(0.0)), "{key}: {l}");
        }
    }
    let csv = std::fs::read_to_string(d.join("z/cov.csv")).unwrap();
    assert!(csv.starts_with("# {\"command\":\"covariance\""));
    assert_eq!(csv.lines().nth(1), Some("t,k1,k2,k3,a11,a12,a13,a22,a23,a33"));
}

#[test]
fn covariance_needs_stochastic_scheme() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "a.cfg", &format!("{BASE}scheme = rk4\n"));
    assert_eq!(code(&leray(d, &["covariance", "--config", "a.cfg", "--out", "o"])), 2);
}

#[test]
fn validate_field_accepts_good_and_flags_bad_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let y = random_shell(SpectrumLayout::shared(3).unwrap(), 1.0, 1).unwrap();
    write(d, "good.ndjson", &y.to_ndjson());
    let o = leray(d, &["validate-field", "--field", "good.ndjson", "--cutoff", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));

    let bad = [
        // conjugate partner of (1,0,0)
        "{\"k\":[-1,0,0],\"re\":[0,1,0],\"im\":[0,0,0]}\n",
        // outside the shell
        "{\"k\":[3,0,0],\"re\":[0,1,0],\"im\":[0,0,0]}\n",
        // not divergence free
        "{\"k\":[1,0,0],\"re\":[1,0,0],\"im\":[0,0,0]}\n",
    ];
    for (i, text) in bad.iter().enumerate() {
        let name = format!("bad{i}.ndjson");
        write(d, &name, text);
        let o = leray(d, &["validate-field", "--field", &name, "--cutoff", "3"]);
        assert_ne!(code(&o), 0, "{text}");
    }
    write(d, "garbage.ndjson", "not json\n");
    assert_eq!(code(&leray(d, &["validate-field", "--field", "garbage.ndjson", "--cutoff", "3"])), 2);
}

#[test]
fn workers_flag_does_not_change_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "a.cfg", &format!("{BASE}ensemble = 7\nscheme = heun\n"));
    for (w, out) in [("1", "w1"), ("2", "w2")] {
        assert_eq!(code(&leray(d, &["--workers", w, "simulate", "--config", "a.cfg", "--out", out])), 0);
    }
    let read = |o: &str| std::fs::read(d.join(o).join("run.ndjson")).unwrap();
    assert_eq!(read("w1"), read("w2"));
}
