//! Change of measure between the linear and the nonlinear system.
//!
//! Along a linear trajectory driven by the raw draws `ΔB′_h` the accumulator
//! tracks `L(t) = σ⁻¹ Σ_{h∈J} ∫ ⟨Y_h, dB′_h⟩` and `[L,L](t) = σ⁻² ∫ Σ_{h∈J} ‖Y_h‖² ds`.
//! The complex integrand is paired with the noise through the real inner
//! product over the six real coordinates; under this pairing the shift
//! `W′_h = B′_h − σ⁻¹∫ Y_h ds` turns the linear diffusion into the nonlinear
//! drift plus a fresh diffusion term.

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::integrators::TrajectoryRecord;
use crate::noise::{NoiseIncrement, RawNoise};
use crate::spectral::{project_unchecked, ComplexVec3, SpectralField};
use crate::stats::MeanEstimate;

/// Running log-martingale and its quadratic variation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GirsanovAccumulator {
    pub l: f64,
    pub qv: f64,
    pub t: f64,
}

impl GirsanovAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Advance by one step; `y` is the state at the start of the step.
    pub fn step(&mut self, y: &SpectralField, raw: &RawNoise, sigma: f64) -> Result<()> {
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("measure change needs sigma > 0, got {sigma}")));
        }
        let pairing: f64 = y.values().iter().zip(&raw.values).map(|(a, b)| a.real_pairing(b)).sum();
        self.l += pairing / sigma;
        self.qv += raw.dt * y.energy() / (sigma * sigma);
        self.t += raw.dt;
        Ok(())
    }

    pub fn log_density(&self) -> f64 {
        self.l - 0.5 * self.qv
    }

    /// `dP/dQ = exp(L − ½[L,L])`.
    pub fn density(&self) -> f64 {
        self.log_density().exp()
    }

    pub fn sample(&self) -> GirsanovSample {
        GirsanovSample { t: self.t, l: self.l, qv: self.qv, density: self.density() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GirsanovSample {
    pub t: f64,
    pub l: f64,
    pub qv: f64,
    pub density: f64,
}

/// Pathwise Novikov bound `t‖y‖²_{ℓ²}/σ²`, with the full-lattice norm of `y0`.
pub fn novikov_bound(t: f64, y0: &SpectralField, sigma: f64) -> f64 {
    t * y0.l2_norm_sq() / (sigma * sigma)
}

/// Importance-weighted estimate `M⁻¹ Σ density_i · φ_i` with its standard error.
pub fn reweight_samples(samples: &[(f64, f64)]) -> MeanEstimate {
    let weighted: Vec<f64> = samples.iter().map(|(d, v)| d * v).collect();
    MeanEstimate::from_samples(&weighted)
}

/// Estimate `E^P[φ(Y)]` for the nonlinear law from linear trajectories.
///
/// Every record must come from the same linear run configuration and carry a
/// Girsanov series; the terminal density weights `φ(record)`.
pub fn reweight_expectation<F>(records: &[TrajectoryRecord], observable: F) -> Result<MeanEstimate>
where
    F: Fn(&TrajectoryRecord) -> f64,
{
    let first = records.first().ok_or_else(|| Error::InvalidParameter("empty ensemble".into()))?;
    let mut samples = Vec::with_capacity(records.len());
    for r in records {
        if !r.config.linear_only {
            return Err(Error::ConfigMismatch("reweighting needs linear-system trajectories".into()));
        }
        if r.config != first.config {
            return Err(Error::ConfigMismatch(format!(
                "trajectory with seed {} was run with a different configuration",
                r.seed
            )));
        }
        let g = r
            .girsanov
            .as_ref()
            .and_then(|g| g.last())
            .ok_or_else(|| Error::ConfigMismatch("trajectory has no Girsanov series".into()))?;
        samples.push((g.density, observable(r)));
    }
    Ok(reweight_samples(&samples))
}

/// Outcome of [`drift_shift_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct DriftShiftReport {
    pub steps: usize,
    /// max over `h` of `|σ_h/σ − (1+α‖h‖²)^{-p}|`, relative
    pub term_identity_error: f64,
    /// max over steps of `max_k ‖linear − nonlinear‖ / scale`
    pub increment_gap: f64,
    /// max over steps of `‖P_h Y_h − Y_h‖ / ‖Y‖`
    pub projection_residual: f64,
    /// the reconstructed `ΔW′` increments
    pub shifted: Vec<RawNoise>,
}

impl DriftShiftReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.term_identity_error <= tol && self.increment_gap <= tol && self.projection_residual <= tol
    }
}

/// Rebuild `ΔW′_h = ΔB′_h − Y_h dt/σ` along a stored path and verify that the
/// linear increment driven by `ΔB′` equals the nonlinear increment driven by
/// `ΔW′` on the same state, step by step.
///
/// `states[n]` must be the state at the start of step `n`.
pub fn drift_shift_check(dynamics: &Dynamics, states: &[SpectralField], tape: &[RawNoise]) -> Result<DriftShiftReport> {
    let params = dynamics.params();
    let sigma = params.sigma;
    if sigma <= 0.0 {
        return Err(Error::InvalidParameter("measure change needs sigma > 0".into()));
    }
    if states.len() < tape.len() {
        return Err(Error::InvalidParameter(format!("{} states for {} noise steps", states.len(), tape.len())));
    }
    let layout = dynamics.layout().clone();

    let mut term_identity_error: f64 = 0.0;
    for (h, _) in layout.extended_modes() {
        let lhs = params.sigma_h(&h) / sigma;
        let rhs = params.smoothing(&h);
        term_identity_error = term_identity_error.max((lhs - rhs).abs() / rhs);
    }

    let n = layout.len();
    let mut shifted = Vec::with_capacity(tape.len());
    let mut increment_gap: f64 = 0.0;
    let mut projection_residual: f64 = 0.0;
    let mut lin = vec![ComplexVec3::ZERO; n];
    let mut nl = vec![ComplexVec3::ZERO; n];
    for (y, raw) in states.iter().zip(tape) {
        let dt = raw.dt;
        let ynorm = y.energy().sqrt();
        for (h, yh) in layout.modes().iter().zip(y.values()) {
            let r = (project_unchecked(h, yh) - *yh).norm();
            if ynorm > 0.0 {
                projection_residual = projection_residual.max(r / ynorm);
            }
        }

        let mut w = raw.clone();
        for (wv, yh) in w.values.iter_mut().zip(y.values()) {
            *wv -= yh.scale(dt / sigma);
        }

        let db = NoiseIncrement::from_raw(layout.clone(), raw);
        let dw = NoiseIncrement::from_raw(layout.clone(), &w);
        dynamics.transport_into(y.values(), Some(db.values()), 0.0, &mut lin);
        dynamics.transport_into(y.values(), Some(dw.values()), dt, &mut nl);
        dynamics.add_ito_into(y.values(), dt, &mut lin);
        dynamics.add_ito_into(y.values(), dt, &mut nl);

        let scale = lin.iter().chain(&nl).map(ComplexVec3::norm).fold(0.0, f64::max);
        if scale > 0.0 {
            let gap = lin.iter().zip(&nl).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
            increment_gap = increment_gap.max(gap / scale);
        }
        shifted.push(w);
    }
    Ok(DriftShiftReport { steps: tape.len(), term_identity_error, increment_gap, projection_residual, shifted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_raw, trajectory_rng, NoiseParams};
    use crate::spectral::{SpectrumLayout, WaveVector};

    #[test]
    fn zero_state_gives_unit_density() {
        let layout = SpectrumLayout::shared(2).unwrap();
        let y = SpectralField::zeros(layout.clone());
        let mut acc = GirsanovAccumulator::new();
        let mut rng = trajectory_rng(1, 0);
        for _ in 0..10 {
            let raw = sample_raw(&mut rng, 0.01, &layout).unwrap();
            acc.step(&y, &raw, 1.0).unwrap();
        }
        assert_eq!(acc.l, 0.0);
        assert_eq!(acc.qv, 0.0);
        assert_eq!(acc.density(), 1.0);
    }

    #[test]
    fn density_arithmetic() {
        assert_eq!(GirsanovAccumulator { l: 0.0, qv: 0.0, t: 0.0 }.density(), 1.0);
        assert_eq!(GirsanovAccumulator { l: 1.0, qv: 2.0, t: 0.0 }.density(), 1.0);
        let tiny = GirsanovAccumulator { l: -800.0, qv: 10.0, t: 1.0 };
        assert!(tiny.log_density().is_finite());
        assert!(tiny.density() >= 0.0);
    }

    #[test]
    fn frozen_state_quadratic_variation() {
        let layout = SpectrumLayout::shared(2).unwrap();
        let y = SpectralField::from_modes(
            layout.clone(),
            [
                (WaveVector::new(1, 0, 0), ComplexVec3::from_parts([0.0, 1.0, 0.5], [0.0, 0.0, 1.0])),
                (WaveVector::new(0, 1, 1), ComplexVec3::from_real([2.0, 0.0, 0.0])),
            ],
        )
        .unwrap();
        let sigma = 0.5;
        let mut acc = GirsanovAccumulator::new();
        let mut rng = trajectory_rng(4, 0);
        for _ in 0..100 {
            let raw = sample_raw(&mut rng, 0.01, &layout).unwrap();
            acc.step(&y, &raw, sigma).unwrap();
        }
        let expected = 1.0 * y.energy() / (sigma * sigma);
        assert!((acc.qv - expected).abs() <= 1e-13 * expected);
        assert!(acc.qv <= novikov_bound(acc.t, &y, sigma));
    }

    #[test]
    fn zero_sigma_is_a_domain_error() {
        let layout = SpectrumLayout::shared(2).unwrap();
        let y = SpectralField::zeros(layout.clone());
        let raw = RawNoise::zeros(&layout, 0.1);
        assert!(GirsanovAccumulator::new().step(&y, &raw, 0.0).is_err());
    }

    #[test]
    fn shift_of_zero_state_is_identity() {
        let layout = SpectrumLayout::shared(2).unwrap();
        let dynamics = Dynamics::new(layout.clone(), NoiseParams::new(1.0, 1.0, 1.0).unwrap());
        let y = SpectralField::zeros(layout.clone());
        let mut rng = trajectory_rng(9, 0);
        let raw = sample_raw(&mut rng, 0.01, &layout).unwrap();
        let report = drift_shift_check(&dynamics, &[y], std::slice::from_ref(&raw)).unwrap();
        assert_eq!(report.shifted[0], raw);
        assert!(report.passes(1e-14));
    }

    #[test]
    fn single_step_shift_arithmetic() {
        let layout = SpectrumLayout::shared(2).unwrap();
        let sigma = 2.0;
        let dynamics = Dynamics::new(layout.clone(), NoiseParams::new(sigma, 1.0, 1.0).unwrap());
        let h = WaveVector::new(0, 1, 0);
        let yh = ComplexVec3::from_parts([1.0, 0.0, -0.5], [0.25, 0.0, 0.0]);
        let y = SpectralField::from_modes(layout.clone(), [(h, yh)]).unwrap();
        let raw = sample_raw(&mut trajectory_rng(2, 0), 0.01, &layout).unwrap();
        let report = drift_shift_check(&dynamics, &[y], std::slice::from_ref(&raw)).unwrap();
        let i = layout.index_of(&h).unwrap();
        assert_eq!(report.shifted[0].values[i], raw.values[i] - yh.scale(0.01 / sigma));
        assert!(report.passes(1e-13), "{report:?}");
    }

    #[test]
    fn pairing_is_real_part_of_hermitian_product() {
        let a = ComplexVec3::from_parts([1.0, -2.0, 0.5], [0.3, 0.0, -1.0]);
        let b = ComplexVec3::from_parts([0.2, 1.0, 1.0], [2.0, -1.0, 0.0]);
        assert!((a.inner(&b).re - a.real_pairing(&b)).abs() < 1e-15);
    }
}
