//! The four subcommands. Each writes its artifacts under `out` and returns
//! a pass/fail outcome with a human-readable summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use leray_alpha::covariance::{covariance_csv_rows, mc_covariance_fields, COVARIANCE_CSV_HEADER};
use leray_alpha::format::{fmt_f64, fmt_f64_array, json_string};
use leray_alpha::girsanov::reweight_samples;
use leray_alpha::spectral::read_modes_ndjson;
use leray_alpha::{
    evolve_covariance_recorded, novikov_bound, random_shell, run_ensemble_map, single_mode, CovarianceState,
    MeanEstimate, SchemeKind, SpectralField, SpectrumLayout, TrajectoryRecord,
};

use crate::config::{InitCondition, Observable, SimConfig};
use crate::CliError;

/// Seed offset separating the direct nonlinear ensemble from the linear one.
pub const DIRECT_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Maximum |z| accepted by the covariance cross-check.
pub const COVARIANCE_Z_MAX: f64 = 4.0;
/// Maximum |z| accepted by the measure-change comparison.
pub const GIRSANOV_Z_MAX: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

fn meta_json(command: &str, config: &SimConfig) -> String {
    format!(
        "{{\"command\":{},\"version\":{},\"seed\":{},\"scheme\":\"{}\",\"config\":{}}}",
        json_string(command),
        json_string(version()),
        config.seed,
        config.scheme,
        config.echo_json()
    )
}

fn write_file(out: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(format!("creating {}", out.display()), e))?;
    let path = out.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// Build the initial field described by the config.
pub fn initial_field(config: &SimConfig) -> Result<SpectralField, CliError> {
    let layout = SpectrumLayout::shared(config.cutoff)?;
    Ok(match &config.init {
        InitCondition::SingleMode { k, amplitude } => {
            if !layout.in_shell(k) {
                return Err(CliError::Usage(format!(
                    "single_mode wavevector {k} is outside the N = {} shell",
                    config.cutoff
                )));
            }
            single_mode(layout, k, *amplitude)?
        }
        InitCondition::RandomShell { energy, seed } => random_shell(layout, *energy, *seed)?,
        InitCondition::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
            SpectralField::from_ndjson(layout, &text)?
        }
    })
}

fn trajectory_lines(rec: &TrajectoryRecord) -> String {
    let mut s = String::new();
    for (i, t) in rec.times.iter().enumerate() {
        let _ = write!(s, "{{\"traj\":{},\"t\":{},\"energy\":{}", rec.index, fmt_f64(*t), fmt_f64(rec.energy[i]));
        if let Some(g) = rec.girsanov.as_ref().map(|g| &g[i]) {
            let _ = write!(
                s,
                ",\"girsanov\":{{\"l\":{},\"qv\":{},\"density\":{}}}",
                fmt_f64(g.l),
                fmt_f64(g.qv),
                fmt_f64(g.density)
            );
        }
        if let Some(f) = rec.snapshots.as_ref().map(|f| &f[i]) {
            let _ = write!(s, ",\"modes\":{}", f.modes_json());
        }
        s.push_str("}\n");
    }
    s
}

/// Integrate `ensemble` trajectories and write `run.ndjson`.
pub fn simulate(config: &SimConfig, out: &Path) -> Result<Outcome, CliError> {
    let y0 = initial_field(config)?;
    let e0 = y0.energy();
    let mut rc = config.run_config();
    rc.track_girsanov = rc.linear_only && rc.scheme.is_stochastic() && rc.params.sigma > 0.0;

    struct Traj {
        lines: String,
        violations: usize,
        energy: f64,
        divergence: f64,
    }
    let trajs = run_ensemble_map(&rc, &y0, config.ensemble, |rec| Traj {
        violations: rec.violations.len(),
        energy: rec.final_state.energy(),
        divergence: rec.final_state.max_divergence(),
        lines: trajectory_lines(&rec),
    })?;

    let violations: usize = trajs.iter().map(|t| t.violations).sum();
    let divergence = trajs.iter().map(|t| t.divergence).fold(0.0, f64::max);
    let energy = MeanEstimate::from_samples(&trajs.iter().map(|t| t.energy).collect::<Vec<_>>());
    let passed = violations == 0 && divergence <= 1e-10 * e0.sqrt().max(1.0);

    let mut body = format!("{{\"meta\":{}}}\n", meta_json("simulate", config));
    for t in &trajs {
        body.push_str(&t.lines);
    }
    let _ = writeln!(
        body,
        "{{\"summary\":{{\"trajectories\":{},\"initial_energy\":{},\"terminal_energy_mean\":{},\"terminal_energy_se\":{},\"energy_violations\":{},\"max_divergence\":{},\"pass\":{}}}}}",
        trajs.len(),
        fmt_f64(e0),
        fmt_f64(energy.mean),
        fmt_f64(energy.std_err),
        violations,
        fmt_f64(divergence),
        passed
    );
    write_file(out, "run.ndjson", &body)?;

    let summary = format!(
        "simulate: {} trajectories, scheme {}{}, N = {}, T = {}\n  initial energy {:.6e}, terminal energy {:.6e} ± {:.1e}\n  energy-control violations {violations}, max divergence {divergence:.1e}",
        trajs.len(),
        rc.scheme,
        if rc.linear_only { " (linear)" } else { "" },
        config.cutoff,
        config.t_final,
        e0,
        energy.mean,
        energy.std_err,
    );
    Ok(Outcome { passed, summary })
}

/// Cross-validate the covariance ODE against a linear Monte-Carlo ensemble.
/// Writes `cov.csv` (ODE trajectory) and `cov_report.ndjson`.
pub fn covariance(config: &SimConfig, out: &Path) -> Result<Outcome, CliError> {
    if !config.scheme.is_stochastic() {
        return Err(CliError::Usage("covariance needs a stochastic scheme (em or heun)".into()));
    }
    let y0 = initial_field(config)?;
    let params = config.noise_params();
    let a0 = CovarianceState::from_field(&y0);
    let cov_dt = config.cov_dt.unwrap_or(config.dt);
    let ode_every = ((config.record_every as f64 * config.dt / cov_dt).round() as usize).max(1);
    let ode = evolve_covariance_recorded(&a0, &params, cov_dt, config.t_final, ode_every)?;

    let mut rc = config.run_config();
    rc.linear_only = true;
    rc.keep_snapshots = false;
    let finals = run_ensemble_map(&rc, &y0, config.ensemble, |rec| rec.final_state)?;
    let refs: Vec<&SpectralField> = finals.iter().collect();
    let mc = mc_covariance_fields(&refs, config.t_final)?;

    let reference = ode.final_state();
    let floor = 1e-12 * reference.max_abs().max(a0.max_abs()).max(f64::MIN_POSITIVE);
    let z = mc.z_scores(reference, floor);
    let max_z = z.iter().flat_map(|r| r.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    let trace_drift = ode.trace_drift();
    let passed = max_z <= COVARIANCE_Z_MAX && ode.flags.is_empty() && trace_drift <= 1e-8;

    let meta = meta_json("covariance", config);
    let mut csv = format!("# {meta}\n{COVARIANCE_CSV_HEADER}\n");
    for s in &ode.states {
        csv.push_str(&covariance_csv_rows(s));
    }
    write_file(out, "cov.csv", &csv)?;

    let upper =
        |m: &nalgebra::Matrix3<f64>| fmt_f64_array(&[m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)]]);
    let mut report = format!("{{\"meta\":{meta}}}\n");
    for (i, k) in reference.layout().modes().iter().enumerate() {
        let [a, b, c] = k.components();
        let _ = writeln!(
            report,
            "{{\"k\":[{a},{b},{c}],\"t\":{},\"ode\":{},\"mc\":{},\"se\":{},\"z\":{}}}",
            fmt_f64(config.t_final),
            upper(reference.matrix(i)),
            upper(mc.mean.matrix(i)),
            upper(&mc.std_err[i]),
            fmt_f64_array(&z[i])
        );
    }
    for d in &ode.diagnostics {
        let _ = writeln!(report, "{{\"invariants\":{}}}", d.to_json());
    }
    for line in ode.diagnostics_ndjson().lines().filter(|l| l.starts_with("{\"B\"")) {
        report.push_str(line);
        report.push('\n');
    }
    let _ = writeln!(
        report,
        "{{\"summary\":{{\"paths\":{},\"max_abs_z\":{},\"trace_drift\":{},\"invariant_flags\":{},\"pass\":{}}}}}",
        mc.count,
        fmt_f64(max_z),
        fmt_f64(trace_drift),
        ode.flags.len(),
        passed
    );
    write_file(out, "cov_report.ndjson", &report)?;

    let mut summary = format!(
        "covariance: ODE (RK4, dt = {cov_dt}) vs {} linear paths at T = {}\n  max |z| = {max_z:.3} (limit {COVARIANCE_Z_MAX}), trace drift {trace_drift:.2e}, invariant flags {}",
        mc.count,
        config.t_final,
        ode.flags.len()
    );
    if !config.linear_only {
        summary.push_str("\n  note: Monte-Carlo paths use the linear system regardless of linear_only");
    }
    for f in ode.flags.iter().take(5) {
        let _ = write!(summary, "\n  flag: {f}");
    }
    Ok(Outcome { passed, summary })
}

/// Result of [`girsanov_comparison`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Comparison {
    pub weighted: MeanEstimate,
    pub direct: MeanEstimate,
    pub z: f64,
    pub density: MeanEstimate,
    pub density_z: f64,
    pub novikov_violations: usize,
}

impl Comparison {
    pub fn passes(&self) -> bool {
        self.z.abs() < GIRSANOV_Z_MAX && self.density_z.abs() < GIRSANOV_Z_MAX && self.novikov_violations == 0
    }
}

/// Reweighted linear EM ensemble vs direct nonlinear EM ensemble for `observable`.
pub fn girsanov_comparison(config: &SimConfig, observable: Observable) -> Result<Comparison, CliError> {
    if config.sigma <= 0.0 {
        return Err(CliError::Refused("the measure change needs sigma > 0".into()));
    }
    let y0 = initial_field(config)?;
    let mut lin = config.run_config();
    lin.scheme = SchemeKind::EulerMaruyamaIto;
    lin.linear_only = true;
    lin.keep_snapshots = false;
    lin.track_girsanov = true;
    lin.record_every = 1;
    let sigma = config.sigma;
    let linear = run_ensemble_map(&lin, &y0, config.ensemble, |rec| {
        let g = rec.girsanov.as_ref().expect("tracked");
        let violated = g.iter().any(|s| s.qv > novikov_bound(s.t, &y0, sigma) * (1.0 + 1e-12) || s.density <= 0.0);
        (g.last().expect("initial sample").density, observable.eval(&rec.final_state), violated)
    })?;

    let mut direct_cfg = lin;
    direct_cfg.linear_only = false;
    direct_cfg.track_girsanov = false;
    direct_cfg.record_every = usize::MAX;
    direct_cfg.seed = config.seed ^ DIRECT_SEED_SALT;
    let direct = run_ensemble_map(&direct_cfg, &y0, config.ensemble, |rec| observable.eval(&rec.final_state))?;

    let pairs: Vec<(f64, f64)> = linear.iter().map(|x| (x.0, x.1)).collect();
    let weighted = reweight_samples(&pairs);
    let direct = MeanEstimate::from_samples(&direct);
    let density = MeanEstimate::from_samples(&linear.iter().map(|x| x.0).collect::<Vec<_>>());
    let one = MeanEstimate { mean: 1.0, std_err: 0.0, count: 1 };
    Ok(Comparison {
        weighted,
        direct,
        z: weighted.z_score(&direct, 0.0),
        density,
        density_z: density.z_score(&one, 0.0),
        novikov_violations: linear.iter().filter(|x| x.2).count(),
    })
}

pub const GIRSANOV_CSV_HEADER: &str =
    "observable,weighted_mean,weighted_se,direct_mean,direct_se,z,density_mean,density_se,density_z,novikov_violations,paths";

/// Run [`girsanov_comparison`] and write `girsanov.csv`.
pub fn girsanov_compare(config: &SimConfig, observable: Observable, out: &Path) -> Result<Outcome, CliError> {
    let c = girsanov_comparison(config, observable)?;
    let mut meta_cfg = config.clone();
    meta_cfg.observable = observable;
    let csv = format!(
        "# {}\n{GIRSANOV_CSV_HEADER}\n{},{},{},{},{},{},{},{},{},{},{}\n",
        meta_json("girsanov-compare", &meta_cfg),
        observable,
        fmt_f64(c.weighted.mean),
        fmt_f64(c.weighted.std_err),
        fmt_f64(c.direct.mean),
        fmt_f64(c.direct.std_err),
        fmt_f64(c.z),
        fmt_f64(c.density.mean),
        fmt_f64(c.density.std_err),
        fmt_f64(c.density_z),
        c.novikov_violations,
        config.ensemble
    );
    write_file(out, "girsanov.csv", &csv)?;
    let passed = c.passes();
    let summary = format!(
        "girsanov-compare: {observable} over {} paths per ensemble\n  reweighted linear {:.6e} ± {:.1e}, direct nonlinear {:.6e} ± {:.1e}, z = {:.3}\n  mean density {:.6} ± {:.1e} (z = {:.3}), Novikov violations {}\n  {}",
        config.ensemble,
        c.weighted.mean,
        c.weighted.std_err,
        c.direct.mean,
        c.direct.std_err,
        c.z,
        c.density.mean,
        c.density.std_err,
        c.density_z,
        c.novikov_violations,
        if passed { "PASS" } else { "FAIL" }
    );
    Ok(Outcome { passed, summary })
}

/// Check a snapshot file against the `N` shell without modifying it.
pub fn validate_field(path: &Path, cutoff: u32) -> Result<Outcome, CliError> {
    let layout: Arc<SpectrumLayout> = SpectrumLayout::shared(cutoff)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let modes = read_modes_ndjson(&text)?;
    let mut problems = Vec::new();
    let mut seen = vec![false; layout.len()];
    let mut max_div: f64 = 0.0;
    for (line, k, v) in &modes {
        match layout.index_of(k) {
            None if layout.in_shell(k) => {
                problems.push(format!("line {line}: {k} is the conjugate partner of a stored mode"))
            }
            None => problems.push(format!("line {line}: {k} is outside the N = {cutoff} shell")),
            Some(i) if std::mem::replace(&mut seen[i], true) => problems.push(format!("line {line}: {k} repeated")),
            Some(_) => {}
        }
        if !v.is_finite() {
            problems.push(format!("line {line}: non-finite value at {k}"));
        }
        let norm = v.norm();
        if norm > 0.0 && !k.is_zero() {
            max_div = max_div.max(v.dot_real(&k.as_f64()).norm() / (norm * k.norm()));
        }
    }
    if max_div > 1e-10 {
        problems.push(format!("relative divergence {max_div:.2e} exceeds 1e-10"));
    }
    let mut energy = f64::NAN;
    if problems.is_empty() {
        let f = SpectralField::from_ndjson(layout.clone(), &text)?;
        energy = f.energy();
        for x in [[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]] {
            if let Err(e) = f.evaluate_physical(x) {
                problems.push(e.to_string());
            }
        }
    }
    let passed = problems.is_empty();
    let mut summary = format!(
        "validate-field: {} modes read, N = {cutoff} ({} stored modes), energy {}, max relative divergence {max_div:.2e}",
        modes.len(),
        layout.len(),
        if energy.is_nan() { "n/a".to_string() } else { format!("{energy:.6e}") }
    );
    for p in &problems {
        let _ = write!(summary, "\n  {p}");
    }
    Ok(Outcome { passed, summary })
}
