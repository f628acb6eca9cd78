//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! N = 2
//! dt = 1e-3
//! T = 0.1
//! init = single_mode(1,0,0,1.0)
//! ```
//!
//! Required keys: `N`, `dt`, `T`, `init`. Everything else has a default, see
//! [`SimConfig::default_for`].

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use leray_alpha::format::{fmt_f64, json_string};
use leray_alpha::{NoiseParams, RunConfig, SchemeKind, SpectralField, WaveVector};

use crate::CliError;

/// How the initial field is produced.
#[derive(Clone, Debug, PartialEq)]
pub enum InitCondition {
    SingleMode { k: WaveVector, amplitude: f64 },
    RandomShell { energy: f64, seed: u64 },
    File(PathBuf),
}

impl fmt::Display for InitCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitCondition::SingleMode { k, amplitude } => {
                let [a, b, c] = k.components();
                write!(f, "single_mode({a},{b},{c},{})", fmt_f64(*amplitude))
            }
            InitCondition::RandomShell { energy, seed } => write!(f, "random_shell({},{seed})", fmt_f64(*energy)),
            InitCondition::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

fn call_args<'a>(s: &'a str, name: &str) -> Option<Vec<&'a str>> {
    let rest = s.strip_prefix(name)?.trim_start();
    let inner = rest.strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.split(',').map(str::trim).collect())
}

fn num<T: FromStr>(s: &str, what: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("invalid {what} '{s}'"))
}

impl FromStr for InitCondition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(args) = call_args(s, "single_mode") {
            if args.len() != 4 {
                return Err("single_mode takes (k1,k2,k3,amplitude)".into());
            }
            let k = WaveVector::new(num(args[0], "k1")?, num(args[1], "k2")?, num(args[2], "k3")?);
            if k.is_zero() {
                return Err("single_mode needs a nonzero wavevector".into());
            }
            let amplitude: f64 = num(args[3], "amplitude")?;
            if !amplitude.is_finite() {
                return Err("amplitude must be finite".into());
            }
            return Ok(InitCondition::SingleMode { k, amplitude });
        }
        if let Some(args) = call_args(s, "random_shell") {
            if args.len() != 2 {
                return Err("random_shell takes (energy,seed)".into());
            }
            let energy: f64 = num(args[0], "energy")?;
            if !(energy.is_finite() && energy >= 0.0) {
                return Err("energy must be finite and >= 0".into());
            }
            return Ok(InitCondition::RandomShell { energy, seed: num(args[1], "seed")? });
        }
        let path = s.strip_prefix("file:").unwrap_or(s);
        if path.is_empty() || path.contains('(') {
            return Err(format!("unrecognised initial condition '{s}'"));
        }
        Ok(InitCondition::File(PathBuf::from(path)))
    }
}

/// A scalar functional of the terminal state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Observable {
    /// `Re Y_k^{(j)}` (component `j` counted from 1).
    Re(WaveVector, usize),
    Im(WaveVector, usize),
    Energy,
    One,
}

impl Observable {
    pub fn eval(&self, y: &SpectralField) -> f64 {
        match self {
            Observable::Re(k, j) => y.get_mode(k).0[j - 1].re,
            Observable::Im(k, j) => y.get_mode(k).0[j - 1].im,
            Observable::Energy => y.energy(),
            Observable::One => 1.0,
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Re(k, j) | Observable::Im(k, j) => {
                let part = if matches!(self, Observable::Re(..)) { "re" } else { "im" };
                let [a, b, c] = k.components();
                write!(f, "{part}:{a},{b},{c}:{j}")
            }
            Observable::Energy => f.write_str("energy"),
            Observable::One => f.write_str("one"),
        }
    }
}

impl FromStr for Observable {
    type Err = String;

    /// `re:k1,k2,k3:j`, `im:k1,k2,k3:j`, `energy` or `one`.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        match s {
            "energy" => return Ok(Observable::Energy),
            "one" => return Ok(Observable::One),
            _ => {}
        }
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("unrecognised observable '{s}' (re:k1,k2,k3:j | im:k1,k2,k3:j | energy | one)"));
        }
        let k: Vec<i32> =
            parts[1].split(',').map(|x| num(x.trim(), "wavevector component")).collect::<Result<_, _>>()?;
        if k.len() != 3 {
            return Err(format!("observable wavevector '{}' needs three components", parts[1]));
        }
        let k = WaveVector::new(k[0], k[1], k[2]);
        let j: usize = num(parts[2], "component")?;
        if !(1..=3).contains(&j) {
            return Err(format!("component must be 1, 2 or 3, got {j}"));
        }
        match parts[0] {
            "re" => Ok(Observable::Re(k, j)),
            "im" => Ok(Observable::Im(k, j)),
            other => Err(format!("observable part must be re or im, got '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub cutoff: u32,
    pub alpha: f64,
    pub sigma: f64,
    pub p: f64,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: SchemeKind,
    pub linear_only: bool,
    pub seed: u64,
    pub ensemble: usize,
    pub record_every: usize,
    /// Write every mode with each recorded event.
    pub save_modes: bool,
    /// Step size of the covariance ODE; defaults to `dt`.
    pub cov_dt: Option<f64>,
    pub observable: Observable,
    pub init: InitCondition,
    pub output: PathBuf,
}

/// A parsed config plus non-fatal warnings.
#[derive(Clone, Debug)]
pub struct Parsed {
    pub config: SimConfig,
    pub warnings: Vec<String>,
}

const KEYS: &[&str] = &[
    "N",
    "alpha",
    "sigma",
    "p",
    "dt",
    "T",
    "scheme",
    "linear_only",
    "seed",
    "ensemble",
    "record_every",
    "save_modes",
    "cov_dt",
    "observable",
    "init",
    "output",
];

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("invalid boolean '{s}'")),
    }
}

impl SimConfig {
    /// Defaults for every optional key.
    pub fn default_for(cutoff: u32, dt: f64, t_final: f64, init: InitCondition) -> Self {
        Self {
            cutoff,
            alpha: 1.0,
            sigma: 1.0,
            p: 1.0,
            dt,
            t_final,
            scheme: SchemeKind::EulerMaruyamaIto,
            linear_only: false,
            seed: 0,
            ensemble: 1,
            record_every: 1,
            save_modes: false,
            cov_dt: None,
            observable: Observable::Re(WaveVector::new(1, 0, 0), 2),
            init,
            output: PathBuf::from("out"),
        }
    }

    pub fn noise_params(&self) -> NoiseParams {
        NoiseParams { sigma: self.sigma, alpha: self.alpha, p: self.p }
    }

    pub fn run_config(&self) -> RunConfig {
        let mut c = RunConfig::new(self.noise_params(), self.dt, self.t_final, self.scheme);
        c.linear_only = self.linear_only;
        c.record_every = self.record_every;
        c.keep_snapshots = self.save_modes;
        c.seed = self.seed;
        c
    }

    /// Canonical JSON echo. The output directory is left out so that runs
    /// into different directories produce identical artifacts.
    pub fn echo_json(&self) -> String {
        format!(
            "{{\"N\":{},\"alpha\":{},\"sigma\":{},\"p\":{},\"dt\":{},\"T\":{},\"scheme\":\"{}\",\"linear_only\":{},\"seed\":{},\"ensemble\":{},\"record_every\":{},\"save_modes\":{},\"cov_dt\":{},\"observable\":{},\"init\":{}}}",
            self.cutoff,
            fmt_f64(self.alpha),
            fmt_f64(self.sigma),
            fmt_f64(self.p),
            fmt_f64(self.dt),
            fmt_f64(self.t_final),
            self.scheme,
            self.linear_only,
            self.seed,
            self.ensemble,
            self.record_every,
            self.save_modes,
            fmt_f64(self.cov_dt.unwrap_or(self.dt)),
            json_string(&self.observable.to_string()),
            json_string(&self.init.to_string()),
        )
    }

    fn validate(&self) -> Result<(), String> {
        if self.cutoff < 2 {
            return Err(format!("N must be >= 2, got {}", self.cutoff));
        }
        NoiseParams::new(self.sigma, self.alpha, self.p).map_err(|e| match e {
            leray_alpha::Error::InvalidParameter(m) => m,
            e => e.to_string(),
        })?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(format!("T must be > 0, got {}", self.t_final));
        }
        if self.dt > self.t_final {
            return Err(format!("dt = {} exceeds T = {}", self.dt, self.t_final));
        }
        self.run_config().steps().map_err(|e| e.to_string())?;
        if let Some(c) = self.cov_dt {
            if !(c.is_finite() && c > 0.0 && c <= self.t_final) {
                return Err(format!("cov_dt must be in (0, T], got {c}"));
            }
        }
        if self.ensemble == 0 {
            return Err("ensemble must be >= 1".into());
        }
        if self.record_every == 0 {
            return Err("record_every must be >= 1".into());
        }
        Ok(())
    }
}

/// Parse and validate a config file. Errors carry the 1-based line number;
/// problems not tied to one line (missing keys, cross-key checks) use line 0.
pub fn parse_config(text: &str) -> Result<Parsed, CliError> {
    let mut seen: Vec<(&str, usize, &str)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(lineno, format!("expected key = value, got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(CliError::config(lineno, format!("unknown key '{key}'")));
        }
        if seen.iter().any(|(k, _, _)| *k == key) {
            return Err(CliError::config(lineno, format!("duplicate key '{key}'")));
        }
        seen.push((key, lineno, value));
    }
    let get = |key: &str| seen.iter().find(|(k, _, _)| *k == key).map(|(_, l, v)| (*l, *v));
    let require = |key: &str| get(key).ok_or_else(|| CliError::config(0, format!("missing required key '{key}'")));

    let (l, v) = require("N")?;
    let cutoff: u32 = num(v, "N").map_err(|e| CliError::config(l, e))?;
    let (l, v) = require("dt")?;
    let dt: f64 = num(v, "dt").map_err(|e| CliError::config(l, e))?;
    let (l, v) = require("T")?;
    let t_final: f64 = num(v, "T").map_err(|e| CliError::config(l, e))?;
    let (l, v) = require("init")?;
    let init: InitCondition = v.parse().map_err(|e| CliError::config(l, e))?;

    let mut c = SimConfig::default_for(cutoff, dt, t_final, init);
    for &(key, l, v) in &seen {
        let err = |e: String| CliError::config(l, e);
        match key {
            "alpha" => c.alpha = num(v, key).map_err(err)?,
            "sigma" => c.sigma = num(v, key).map_err(err)?,
            "p" => c.p = num(v, key).map_err(err)?,
            "scheme" => c.scheme = v.parse().map_err(|e: leray_alpha::Error| err(e.to_string()))?,
            "linear_only" => c.linear_only = parse_bool(v).map_err(err)?,
            "seed" => c.seed = num(v, key).map_err(err)?,
            "ensemble" => c.ensemble = num(v, key).map_err(err)?,
            "record_every" => c.record_every = num(v, key).map_err(err)?,
            "save_modes" => c.save_modes = parse_bool(v).map_err(err)?,
            "cov_dt" => c.cov_dt = Some(num(v, key).map_err(err)?),
            "observable" => c.observable = v.parse().map_err(err)?,
            "output" => c.output = PathBuf::from(v),
            _ => {}
        }
    }
    c.validate().map_err(|e| {
        // attribute single-key range errors to their line
        let line = KEYS.iter().find(|k| e.starts_with(&format!("{k} "))).and_then(|k| get(k)).map_or(0, |(l, _)| l);
        CliError::config(line, e)
    })?;

    let mut warnings = Vec::new();
    if c.p <= 4.0 / 3.0 {
        warnings.push(format!(
            "p = {} <= 4/3: well-posedness of the 3D model is only established for p > 4/3 (2D admits p > 1/2)",
            c.p
        ));
    }
    Ok(Parsed { config: c, warnings })
}
