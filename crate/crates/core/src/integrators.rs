//! Time stepping for the deterministic, linear stochastic and nonlinear
//! stochastic systems, plus trajectory and ensemble drivers.
//!
//! Every scheme ends its step by re-applying `P_k` to each mode's increment
//! before adding it. The state is already divergence-free, so this equals
//! projecting the new state, but a zero increment leaves the state bit-exact.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::girsanov::{GirsanovAccumulator, GirsanovSample};
use crate::noise::{fill_raw, trajectory_rng, NoiseIncrement, NoiseParams, NoiseTape, RawNoise};
use crate::spectral::{project_unchecked, ComplexVec3, SpectralField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    /// Classical RK4 on the noise-free Galerkin system.
    DeterministicRK4,
    /// Euler–Maruyama on the Itô form; always includes the Itô correction.
    EulerMaruyamaIto,
    /// Stochastic Heun on the Stratonovich form; never includes the correction.
    HeunStratonovich,
}

impl SchemeKind {
    pub fn is_stochastic(&self) -> bool {
        !matches!(self, SchemeKind::DeterministicRK4)
    }

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::DeterministicRK4 => "rk4",
            SchemeKind::EulerMaruyamaIto => "em",
            SchemeKind::HeunStratonovich => "heun",
        }
    }

    /// Relative slack allowed in the energy-control check at time `t`.
    ///
    /// `rate` is the fastest time scale of the dynamics (see
    /// [`Dynamics::rate_scale`]); each scheme's energy error is bounded in
    /// terms of `rate·dt`.
    pub fn energy_tolerance(&self, dt: f64, t: f64, rate: f64) -> f64 {
        const FLOOR: f64 = 1e-12;
        let z = rate * dt;
        match self {
            SchemeKind::DeterministicRK4 => 10.0 * z.powi(4) * rate * t + FLOOR,
            SchemeKind::HeunStratonovich => 10.0 * z * rate * t + FLOOR,
            // energy is only a martingale under EM, fluctuating like sqrt(dt t)
            SchemeKind::EulerMaruyamaIto => 10.0 * (rate * (dt * t).sqrt() + z * rate * t) + FLOOR,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" | "deterministic" | "deterministic_rk4" => Ok(SchemeKind::DeterministicRK4),
            "em" | "euler_maruyama" | "ito" => Ok(SchemeKind::EulerMaruyamaIto),
            "heun" | "stratonovich" => Ok(SchemeKind::HeunStratonovich),
            other => Err(Error::InvalidParameter(format!("unknown scheme '{other}' (rk4 | em | heun)"))),
        }
    }
}

/// Everything a single trajectory needs besides its initial state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunConfig {
    pub params: NoiseParams,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: SchemeKind,
    /// Drop the nonlinear drift (linear system).
    pub linear_only: bool,
    /// Record every `record_every` steps; the final time is always recorded.
    pub record_every: usize,
    pub keep_snapshots: bool,
    pub track_girsanov: bool,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(params: NoiseParams, dt: f64, t_final: f64, scheme: SchemeKind) -> Self {
        Self {
            params,
            dt,
            t_final,
            scheme,
            linear_only: false,
            record_every: 1,
            keep_snapshots: false,
            track_girsanov: false,
            seed: 0,
        }
    }

    /// Number of constant steps covering `[0, t_final]`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::InvalidParameter(format!("T must be >= 0, got {}", self.t_final)));
        }
        let n = (self.t_final / self.dt).round();
        if (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(self.dt) {
            return Err(Error::InvalidParameter(format!(
                "T = {} is not an integer multiple of dt = {}",
                self.t_final, self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.steps()?;
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be >= 1".into()));
        }
        if self.track_girsanov {
            if !self.linear_only || !self.scheme.is_stochastic() {
                return Err(Error::InvalidParameter("Girsanov tracking needs a stochastic linear-system run".into()));
            }
            if self.params.sigma <= 0.0 {
                return Err(Error::InvalidParameter("Girsanov tracking needs sigma > 0".into()));
            }
        }
        Ok(())
    }
}

/// Energy-control violation: `Σ‖Y_k(t)‖² > Σ‖y_k‖²(1 + tol)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyViolation {
    pub t: f64,
    pub energy: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub config: RunConfig,
    /// Ensemble index of this trajectory.
    pub index: u64,
    /// Generator seed actually used, `base_seed ^ index`.
    pub seed: u64,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub snapshots: Option<Vec<SpectralField>>,
    pub girsanov: Option<Vec<GirsanovSample>>,
    pub violations: Vec<EnergyViolation>,
    pub final_state: SpectralField,
}

impl TrajectoryRecord {
    /// Snapshot recorded at time `t` (matched to within `1e-9·dt`).
    pub fn snapshot_at(&self, t: f64) -> Result<&SpectralField> {
        let tol = 1e-9 * self.config.dt;
        let snaps = self.snapshots.as_ref().ok_or(Error::MissingSnapshot(t))?;
        self.times.iter().position(|&s| (s - t).abs() <= tol).map(|i| &snaps[i]).ok_or(Error::MissingSnapshot(t))
    }

    pub fn final_girsanov(&self) -> Option<&GirsanovSample> {
        self.girsanov.as_ref().and_then(|g| g.last())
    }
}

/// Scratch buffers for in-place stepping of one trajectory.
#[derive(Clone, Debug)]
pub struct Stepper {
    dynamics: Dynamics,
    k1: Vec<ComplexVec3>,
    k2: Vec<ComplexVec3>,
    k3: Vec<ComplexVec3>,
    k4: Vec<ComplexVec3>,
    stage: SpectralField,
}

impl Stepper {
    pub fn new(dynamics: Dynamics) -> Self {
        let n = dynamics.layout().len();
        let stage = SpectralField::zeros(dynamics.layout().clone());
        let z = vec![ComplexVec3::ZERO; n];
        Self { dynamics, k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z, stage }
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    /// `y_k += P_k(s · inc_k)`.
    fn commit(y: &mut SpectralField, inc: &[ComplexVec3], s: f64, what: &'static str) -> Result<()> {
        let layout = y.layout().clone();
        for ((k, v), d) in layout.modes().iter().zip(y.values_mut()).zip(inc) {
            *v += project_unchecked(k, &d.scale(s));
        }
        if y.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFiniteStep(what))
        }
    }

    pub fn rk4(&mut self, y: &mut SpectralField, dt: f64) -> Result<()> {
        let d = &self.dynamics;
        d.transport_into(y.values(), None, 1.0, &mut self.k1);

        self.stage.clone_from(y);
        self.stage.axpy(0.5 * dt, &self.k1);
        d.transport_into(self.stage.values(), None, 1.0, &mut self.k2);

        self.stage.clone_from(y);
        self.stage.axpy(0.5 * dt, &self.k2);
        d.transport_into(self.stage.values(), None, 1.0, &mut self.k3);

        self.stage.clone_from(y);
        self.stage.axpy(dt, &self.k3);
        d.transport_into(self.stage.values(), None, 1.0, &mut self.k4);

        for i in 0..self.k1.len() {
            self.k1[i] += (self.k2[i] + self.k3[i]).scale(2.0) + self.k4[i];
        }
        Self::commit(y, &self.k1, dt / 6.0, "rk4 step")
    }

    pub fn euler_maruyama(&mut self, y: &mut SpectralField, dw: &NoiseIncrement, linear_only: bool) -> Result<()> {
        let dt = dw.dt;
        let nl = if linear_only { 0.0 } else { dt };
        self.dynamics.transport_into(y.values(), Some(dw.values()), nl, &mut self.k1);
        self.dynamics.add_ito_into(y.values(), dt, &mut self.k1);
        Self::commit(y, &self.k1, 1.0, "Euler-Maruyama step")
    }

    pub fn heun(&mut self, y: &mut SpectralField, dw: &NoiseIncrement, linear_only: bool) -> Result<()> {
        let dt = dw.dt;
        let nl = if linear_only { 0.0 } else { dt };
        self.dynamics.transport_into(y.values(), Some(dw.values()), nl, &mut self.k1);
        self.stage.clone_from(y);
        self.stage.axpy(1.0, &self.k1);
        self.dynamics.transport_into(self.stage.values(), Some(dw.values()), nl, &mut self.k2);
        for i in 0..self.k1.len() {
            self.k1[i] += self.k2[i];
        }
        Self::commit(y, &self.k1, 0.5, "Heun step")
    }

    pub fn step(
        &mut self,
        scheme: SchemeKind,
        y: &mut SpectralField,
        dt: f64,
        dw: &NoiseIncrement,
        linear_only: bool,
    ) -> Result<()> {
        match scheme {
            SchemeKind::DeterministicRK4 => self.rk4(y, dt),
            SchemeKind::EulerMaruyamaIto => self.euler_maruyama(y, dw, linear_only),
            SchemeKind::HeunStratonovich => self.heun(y, dw, linear_only),
        }
    }
}

/// One classical RK4 step of the noise-free system.
pub fn det_rk4_step(y: &SpectralField, dt: f64, alpha: f64) -> Result<SpectralField> {
    let params = NoiseParams { sigma: 0.0, alpha, p: 1.0 };
    let mut out = y.clone();
    Stepper::new(Dynamics::new(y.layout().clone(), params)).rk4(&mut out, dt)?;
    Ok(out)
}

/// `Y + [B(Y)·1_{nonlinear} + C(Y)]·dt + D(Y, ΔW)`, re-projected.
pub fn em_step(
    y: &SpectralField,
    dw: &NoiseIncrement,
    params: &NoiseParams,
    linear_only: bool,
) -> Result<SpectralField> {
    let mut out = y.clone();
    Stepper::new(Dynamics::new(y.layout().clone(), *params)).euler_maruyama(&mut out, dw, linear_only)?;
    Ok(out)
}

/// Predictor–corrector step of the Stratonovich form (no Itô correction).
pub fn heun_step(
    y: &SpectralField,
    dw: &NoiseIncrement,
    params: &NoiseParams,
    linear_only: bool,
) -> Result<SpectralField> {
    let mut out = y.clone();
    Stepper::new(Dynamics::new(y.layout().clone(), *params)).heun(&mut out, dw, linear_only)?;
    Ok(out)
}

enum NoiseSource<'a, R: Rng + ?Sized> {
    Rng(&'a mut R),
    Tape(&'a NoiseTape),
}

/// Integrate from `0` to `T` drawing noise from `rng`.
pub fn run_trajectory<R: Rng + ?Sized>(
    config: &RunConfig,
    y0: &SpectralField,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    run_inner(config, y0, NoiseSource::Rng(rng), 0, None)
}

/// Integrate replaying recorded raw draws; the tape's step size must match.
pub fn replay_trajectory(config: &RunConfig, y0: &SpectralField, tape: &NoiseTape) -> Result<TrajectoryRecord> {
    run_inner::<rand_chacha::ChaCha8Rng>(config, y0, NoiseSource::Tape(tape), 0, None)
}

/// Like [`run_trajectory`] but also returns the raw draws that were used.
pub fn run_trajectory_recording<R: Rng + ?Sized>(
    config: &RunConfig,
    y0: &SpectralField,
    rng: &mut R,
) -> Result<(TrajectoryRecord, NoiseTape)> {
    let mut tape = NoiseTape { steps: Vec::new() };
    let rec = run_inner(config, y0, NoiseSource::Rng(rng), 0, Some(&mut tape))?;
    Ok((rec, tape))
}

fn run_inner<R: Rng + ?Sized>(
    config: &RunConfig,
    y0: &SpectralField,
    mut source: NoiseSource<'_, R>,
    index: u64,
    mut capture: Option<&mut NoiseTape>,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let steps = config.steps()?;
    let layout = y0.layout().clone();
    let e0 = y0.energy();
    if !e0.is_finite() {
        return Err(Error::InvalidParameter("initial energy is not finite".into()));
    }
    if let NoiseSource::Tape(tape) = &source {
        if config.scheme.is_stochastic() && tape.steps.len() < steps {
            return Err(Error::InvalidParameter(format!(
                "noise tape has {} steps, run needs {steps}",
                tape.steps.len()
            )));
        }
        if let Some(s) = tape.steps.iter().find(|s| (s.dt - config.dt).abs() > 1e-12 * config.dt) {
            return Err(Error::InvalidParameter(format!("tape dt {} differs from run dt {}", s.dt, config.dt)));
        }
    }

    let mut stepper = Stepper::new(Dynamics::new(layout.clone(), config.params));
    let mut y = y0.clone();
    let mut raw = RawNoise::zeros(&layout, config.dt);
    let mut dw = NoiseIncrement::zeros(layout.clone(), config.dt);
    let mut girsanov = config.track_girsanov.then(GirsanovAccumulator::new);

    let mut rec = TrajectoryRecord {
        config: *config,
        index,
        seed: config.seed ^ index,
        times: Vec::new(),
        energy: Vec::new(),
        snapshots: config.keep_snapshots.then(Vec::new),
        girsanov: girsanov.map(|_| Vec::new()),
        violations: Vec::new(),
        final_state: y0.clone(),
    };
    let rate = stepper.dynamics().rate_scale(e0, config.linear_only);
    record(&mut rec, 0.0, &y, girsanov.as_ref(), e0, rate);

    for n in 0..steps {
        let t_next = (n + 1) as f64 * config.dt;
        if config.scheme.is_stochastic() {
            match &mut source {
                NoiseSource::Rng(rng) => fill_raw(*rng, &mut raw),
                NoiseSource::Tape(tape) => raw.clone_from(&tape.steps[n]),
            }
            if let Some(tape) = capture.as_deref_mut() {
                tape.steps.push(raw.clone());
            }
            dw.project_from(&raw);
            if let Some(acc) = girsanov.as_mut() {
                acc.step(&y, &raw, config.params.sigma)?;
            }
        }
        stepper
            .step(config.scheme, &mut y, config.dt, &dw, config.linear_only)
            .map_err(|_| Error::NonFinite { t: t_next, step: n + 1 })?;
        if (n + 1) % config.record_every == 0 || n + 1 == steps {
            record(&mut rec, t_next, &y, girsanov.as_ref(), e0, rate);
        }
    }
    rec.final_state = y;
    Ok(rec)
}

fn record(rec: &mut TrajectoryRecord, t: f64, y: &SpectralField, g: Option<&GirsanovAccumulator>, e0: f64, rate: f64) {
    let e = y.energy();
    let bound = e0 * (1.0 + rec.config.scheme.energy_tolerance(rec.config.dt, t, rate));
    if e > bound {
        rec.violations.push(EnergyViolation { t, energy: e, bound });
    }
    rec.times.push(t);
    rec.energy.push(e);
    if let Some(s) = rec.snapshots.as_mut() {
        s.push(y.clone());
    }
    if let (Some(series), Some(acc)) = (rec.girsanov.as_mut(), g) {
        series.push(acc.sample());
    }
}

/// `m` independent trajectories; trajectory `i` uses the generator seeded
/// with `config.seed ^ i`. Output order is the trajectory index.
pub fn run_ensemble(config: &RunConfig, y0: &SpectralField, m: usize) -> Result<Vec<TrajectoryRecord>> {
    run_ensemble_map(config, y0, m, |rec| rec)
}

/// Run an ensemble and keep only `f(record)` per trajectory, in index order.
pub fn run_ensemble_map<T, F>(config: &RunConfig, y0: &SpectralField, m: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(TrajectoryRecord) -> T + Sync,
{
    if m == 0 {
        return Err(Error::InvalidParameter("ensemble size must be >= 1".into()));
    }
    config.validate()?;
    (0..m as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(config.seed, i);
            run_inner(config, y0, NoiseSource::Rng(&mut rng), i, None).map(&f)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{SpectrumLayout, WaveVector};

    fn params(sigma: f64) -> NoiseParams {
        NoiseParams::new(sigma, 1.0, 1.0).unwrap()
    }

    fn single_mode() -> SpectralField {
        let layout = SpectrumLayout::shared(3).unwrap();
        SpectralField::from_modes(
            layout,
            [(WaveVector::new(1, 0, 1), ComplexVec3::from_parts([1.0, 0.5, -1.0], [0.0, 1.0, 0.0]))],
        )
        .unwrap()
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in [SchemeKind::DeterministicRK4, SchemeKind::EulerMaruyamaIto, SchemeKind::HeunStratonovich] {
            assert_eq!(s.name().parse::<SchemeKind>().unwrap(), s);
        }
        assert!("milstein".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn rk4_keeps_zero_and_single_pair() {
        let y = single_mode();
        let zero = SpectralField::zeros(y.layout().clone());
        assert_eq!(det_rk4_step(&zero, 0.01, 1.0).unwrap(), zero);
        let next = det_rk4_step(&y, 0.01, 1.0).unwrap();
        for (a, b) in next.values().iter().zip(y.values()) {
            assert!((*a - *b).norm() <= 1e-15);
        }
    }

    #[test]
    fn linear_em_without_noise_is_identity() {
        let y = single_mode();
        let dw = NoiseIncrement::zeros(y.layout().clone(), 0.1);
        let next = em_step(&y, &dw, &params(0.0), true).unwrap();
        for (a, b) in next.values().iter().zip(y.values()) {
            assert!((*a - *b).norm() <= 1e-15);
        }
    }

    #[test]
    fn step_count_must_divide_horizon() {
        let mut c = RunConfig::new(params(1.0), 0.3, 1.0, SchemeKind::EulerMaruyamaIto);
        assert!(c.steps().is_err());
        c.dt = 0.25;
        assert_eq!(c.steps().unwrap(), 4);
        c.t_final = 0.0;
        assert_eq!(c.steps().unwrap(), 0);
    }

    #[test]
    fn zero_horizon_records_initial_state_only() {
        let y = single_mode();
        let mut c = RunConfig::new(params(1.0), 0.01, 0.0, SchemeKind::HeunStratonovich);
        c.keep_snapshots = true;
        let rec = run_trajectory(&c, &y, &mut trajectory_rng(0, 0)).unwrap();
        assert_eq!(rec.times, vec![0.0]);
        assert_eq!(rec.snapshots.as_ref().unwrap()[0], y);
        assert_eq!(rec.final_state, y);
    }

    #[test]
    fn girsanov_needs_linear_stochastic_run() {
        let mut c = RunConfig::new(params(1.0), 0.01, 0.1, SchemeKind::EulerMaruyamaIto);
        c.track_girsanov = true;
        assert!(c.validate().is_err());
        c.linear_only = true;
        assert!(c.validate().is_ok());
        c.params.sigma = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn missing_snapshot_is_an_error() {
        let y = single_mode();
        let c = RunConfig::new(params(1.0), 0.01, 0.02, SchemeKind::EulerMaruyamaIto);
        let rec = run_trajectory(&c, &y, &mut trajectory_rng(0, 0)).unwrap();
        assert!(matches!(rec.snapshot_at(0.0), Err(Error::MissingSnapshot(_))));
    }

    #[test]
    fn ensemble_rejects_empty() {
        let y = single_mode();
        let c = RunConfig::new(params(1.0), 0.01, 0.02, SchemeKind::EulerMaruyamaIto);
        assert!(run_ensemble(&c, &y, 0).is_err());
    }
}
