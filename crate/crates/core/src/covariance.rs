//! Second moments of the linear system.
//!
//! `A_k = E[Re Y_k Re Y_kᵀ + Im Y_k Im Y_kᵀ]` obeys a closed linear matrix
//! ODE. This module integrates that ODE, estimates the same matrices from a
//! Monte-Carlo ensemble, and checks the structural invariants of both.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::integrators::TrajectoryRecord;
use crate::noise::NoiseParams;
use crate::spectral::{projector_matrix, ComplexVec3, SpectralField, SpectrumLayout};
use crate::stats::{pairwise_sum, shifted_mean};

/// Tolerances on the structural invariants.
pub const SYMMETRY_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
pub const KERNEL_TOL: f64 = 1e-10;
pub const PROJECTION_TOL: f64 = 1e-10;

fn outer(a: &[f64; 3], b: &[f64; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| a[i] * b[j])
}

/// Real second-moment matrix of a single complex vector.
pub fn second_moment(v: &ComplexVec3) -> Matrix3<f64> {
    let (re, im) = (v.re(), v.im());
    outer(&re, &re) + outer(&im, &im)
}

/// One 3×3 matrix per stored mode plus a time stamp.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceState {
    layout: Arc<SpectrumLayout>,
    pub t: f64,
    mats: Vec<Matrix3<f64>>,
}

impl CovarianceState {
    pub fn zeros(layout: Arc<SpectrumLayout>) -> Self {
        let mats = vec![Matrix3::zeros(); layout.len()];
        Self { layout, t: 0.0, mats }
    }

    /// Covariance of a deterministic field.
    pub fn from_field(y: &SpectralField) -> Self {
        Self { layout: y.layout().clone(), t: 0.0, mats: y.values().iter().map(second_moment).collect() }
    }

    pub fn from_matrices(layout: Arc<SpectrumLayout>, t: f64, mats: Vec<Matrix3<f64>>) -> Result<Self> {
        if mats.len() != layout.len() {
            return Err(Error::InvalidParameter(format!("expected {} matrices, got {}", layout.len(), mats.len())));
        }
        Ok(Self { layout, t, mats })
    }

    pub fn layout(&self) -> &Arc<SpectrumLayout> {
        &self.layout
    }

    pub fn matrices(&self) -> &[Matrix3<f64>] {
        &self.mats
    }

    pub fn matrix(&self, index: usize) -> &Matrix3<f64> {
        &self.mats[index]
    }

    pub fn trace_sum(&self) -> f64 {
        pairwise_sum(&self.mats.iter().map(|m| m.trace()).collect::<Vec<_>>())
    }

    /// Largest absolute entry over all modes.
    pub fn max_abs(&self) -> f64 {
        self.mats.iter().map(|m| m.amax()).fold(0.0, f64::max)
    }

    fn axpy(&mut self, s: f64, d: &[Matrix3<f64>]) {
        for (a, b) in self.mats.iter_mut().zip(d) {
            *a += b * s;
        }
    }

    pub fn symmetrize(&mut self) {
        for m in &mut self.mats {
            *m = (*m + m.transpose()) * 0.5;
        }
    }

    /// Worst-case residuals of the structural invariants.
    pub fn invariants(&self) -> InvariantReport {
        let mut r = InvariantReport { t: self.t, trace_sum: self.trace_sum(), ..Default::default() };
        for (k, a) in self.layout.modes().iter().zip(&self.mats) {
            let norm = a.norm();
            let scale = norm.max(f64::MIN_POSITIVE);
            r.asymmetry = r.asymmetry.max((a - a.transpose()).norm() / scale);
            let tr = a.trace();
            if norm > 0.0 {
                let min_eig = SymmetricEigen::new((a + a.transpose()) * 0.5).eigenvalues.min();
                r.min_eigenvalue = r.min_eigenvalue.min(min_eig / tr.abs().max(f64::MIN_POSITIVE));
            }
            let kf = nalgebra::Vector3::from(k.as_f64());
            r.kernel = r.kernel.max((a * kf).norm() / (scale * k.norm()));
            let p = projector_matrix(k).expect("stored modes are nonzero").0;
            r.projection = r.projection.max((p * a * p - a).norm() / norm.max(1.0));
        }
        r
    }
}

/// Residuals, each relative to the natural scale of its invariant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantReport {
    pub t: f64,
    /// `max ‖A − Aᵀ‖ / ‖A‖`.
    pub asymmetry: f64,
    /// `min λ_min(A_k) / Tr(A_k)`; zero matrices count as 0.
    pub min_eigenvalue: f64,
    /// `max ‖A_k k‖ / (‖A_k‖ ‖k‖)`.
    pub kernel: f64,
    /// `max ‖P_k A_k P_k − A_k‖ / max(‖A_k‖, 1)`.
    pub projection: f64,
    pub trace_sum: f64,
}

impl Default for InvariantReport {
    fn default() -> Self {
        Self { t: 0.0, asymmetry: 0.0, min_eigenvalue: 0.0, kernel: 0.0, projection: 0.0, trace_sum: 0.0 }
    }
}

impl InvariantReport {
    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue >= -PSD_TOL
    }

    /// Descriptions of violated invariants; `trace_bound` is checked as
    /// `trace_sum ≤ trace_bound·(1 + 1e-10)` when given.
    pub fn failures(&self, trace_bound: Option<f64>) -> Vec<String> {
        let mut out = Vec::new();
        if self.asymmetry > SYMMETRY_TOL {
            out.push(format!("t={}: asymmetry {:e}", self.t, self.asymmetry));
        }
        if !self.is_psd() {
            out.push(format!("t={}: min eigenvalue/trace {:e}", self.t, self.min_eigenvalue));
        }
        if self.kernel > KERNEL_TOL {
            out.push(format!("t={}: A_k k residual {:e}", self.t, self.kernel));
        }
        if self.projection > PROJECTION_TOL {
            out.push(format!("t={}: P A P residual {:e}", self.t, self.projection));
        }
        if let Some(b) = trace_bound {
            if self.trace_sum > b * (1.0 + 1e-10) + 1e-300 {
                out.push(format!("t={}: trace sum {} exceeds {}", self.t, self.trace_sum, b));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        format!(
            "{{\"t\":{},\"trace_sum\":{},\"asymmetry\":{},\"min_eig_over_trace\":{},\"kernel\":{},\"projection\":{}}}",
            fmt_f64(self.t),
            fmt_f64(self.trace_sum),
            fmt_f64(self.asymmetry),
            fmt_f64(self.min_eigenvalue),
            fmt_f64(self.kernel),
            fmt_f64(self.projection)
        )
    }
}

/// Precomputed coefficients of the matrix ODE.
///
/// `dA_k = −(L_k A_k + A_k L_kᵀ) + 2 P_k (Σ_h w_h A_{k−h}) P_k` with
/// `w_h = σ_h²‖P_h k‖²` and `L_k = Σ_h w_h P_k P_{k−h}`.
#[derive(Clone, Debug)]
pub struct CovarianceOde {
    layout: Arc<SpectrumLayout>,
    pk: Vec<Matrix3<f64>>,
    lk: Vec<Matrix3<f64>>,
    // (index of ±(k−h) in storage, w_h), grouped by k
    offsets: Vec<usize>,
    feeds: Vec<(usize, f64)>,
}

impl CovarianceOde {
    pub fn new(layout: Arc<SpectrumLayout>, params: &NoiseParams) -> Self {
        let mut pk = Vec::with_capacity(layout.len());
        let mut lk = Vec::with_capacity(layout.len());
        let mut offsets = vec![0];
        let mut feeds = Vec::new();
        for k in layout.modes() {
            let p = projector_matrix(k).expect("stored modes are nonzero").0;
            let mut l = Matrix3::zeros();
            for (h, _) in layout.extended_modes() {
                let kmh = *k - h;
                let Some(r) = layout.locate(&kmh) else { continue };
                let s = params.sigma_h(&h);
                let w = s * s * h.perp_norm_sq(k);
                if w == 0.0 {
                    continue;
                }
                l += p * projector_matrix(&kmh).expect("shell vectors are nonzero").0 * w;
                // A_{-k} = A_k, so the conjugate flag is irrelevant here
                feeds.push((r.index, w));
            }
            pk.push(p);
            lk.push(l);
            offsets.push(feeds.len());
        }
        Self { layout, pk, lk, offsets, feeds }
    }

    pub fn layout(&self) -> &Arc<SpectrumLayout> {
        &self.layout
    }

    fn rhs_into(&self, a: &[Matrix3<f64>], out: &mut [Matrix3<f64>]) {
        for i in 0..a.len() {
            let mut s = Matrix3::zeros();
            for &(j, w) in &self.feeds[self.offsets[i]..self.offsets[i + 1]] {
                s += a[j] * w;
            }
            let l = &self.lk[i];
            let p = &self.pk[i];
            out[i] = -(l * a[i] + a[i] * l.transpose()) + p * s * p * 2.0;
        }
    }

    pub fn rhs(&self, a: &CovarianceState) -> CovarianceState {
        let mut out = CovarianceState::zeros(self.layout.clone());
        out.t = a.t;
        self.rhs_into(&a.mats, &mut out.mats);
        out
    }
}

/// Time derivative of every `A_k`.
pub fn covariance_rhs(a: &CovarianceState, params: &NoiseParams) -> CovarianceState {
    CovarianceOde::new(a.layout().clone(), params).rhs(a)
}

/// `B_k = ∫₀ᵀ A_k(t) dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeIntegratedCovariance {
    pub t: f64,
    pub b: CovarianceState,
}

impl TimeIntegratedCovariance {
    /// Largest eigenvalue of each `B_k`, in storage order.
    pub fn max_eigenvalues(&self) -> Vec<f64> {
        self.b.matrices().iter().map(|m| SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues.max()).collect()
    }

    pub fn traces(&self) -> Vec<f64> {
        self.b.matrices().iter().map(|m| m.trace()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct CovarianceEvolution {
    /// States at `t = 0` and every `record_every` steps (the last always).
    pub states: Vec<CovarianceState>,
    pub integrated: TimeIntegratedCovariance,
    /// Invariant residuals after every step, including `t = 0`.
    pub diagnostics: Vec<InvariantReport>,
    /// Human-readable invariant failures; PSD is flagged, never enforced.
    pub flags: Vec<String>,
}

impl CovarianceEvolution {
    pub fn final_state(&self) -> &CovarianceState {
        self.states.last().expect("at least the initial state")
    }

    /// `max_t |Σ Tr A(t) − Σ Tr A(0)| / max(Σ Tr A(0), tiny)`.
    pub fn trace_drift(&self) -> f64 {
        let t0 = self.diagnostics[0].trace_sum;
        let scale = t0.abs().max(f64::MIN_POSITIVE);
        self.diagnostics.iter().map(|d| (d.trace_sum - t0).abs() / scale).fold(0.0, f64::max)
    }

    pub fn diagnostics_ndjson(&self) -> String {
        let mut s = String::new();
        for d in &self.diagnostics {
            s.push_str(&d.to_json());
            s.push('\n');
        }
        let maxes = self.integrated.max_eigenvalues();
        let traces = self.integrated.traces();
        for (i, k) in self.integrated.b.layout().modes().iter().enumerate() {
            let c = k.components();
            let _ = writeln!(
                s,
                "{{\"B\":{{\"k\":[{},{},{}],\"max_eig\":{},\"trace\":{}}}}}",
                c[0],
                c[1],
                c[2],
                fmt_f64(maxes[i]),
                fmt_f64(traces[i])
            );
        }
        s
    }
}

/// RK4 on the matrix ODE up to `t_final`, symmetrizing after each step.
pub fn evolve_covariance_recorded(
    a0: &CovarianceState,
    params: &NoiseParams,
    dt: f64,
    t_final: f64,
    record_every: usize,
) -> Result<CovarianceEvolution> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::InvalidParameter(format!("T must be >= 0, got {t_final}")));
    }
    let record_every = record_every.max(1);
    let steps = (t_final / dt).round() as usize;
    let ode = CovarianceOde::new(a0.layout().clone(), params);
    let n = a0.mats.len();
    let mut a = a0.clone();
    a.t = 0.0;
    let trace_bound = a0.trace_sum();

    let z = vec![Matrix3::zeros(); n];
    let (mut k1, mut k2, mut k3, mut k4) = (z.clone(), z.clone(), z.clone(), z);
    let mut stage = a.clone();
    let mut integral = CovarianceState::zeros(a0.layout().clone());

    let first = a.invariants();
    let mut flags = first.failures(Some(trace_bound));
    let mut diagnostics = vec![first];
    let mut states = vec![a.clone()];

    for step in 0..steps {
        let prev = a.mats.clone();
        ode.rhs_into(&a.mats, &mut k1);
        stage.mats.clone_from(&a.mats);
        stage.axpy(0.5 * dt, &k1);
        ode.rhs_into(&stage.mats, &mut k2);
        stage.mats.clone_from(&a.mats);
        stage.axpy(0.5 * dt, &k2);
        ode.rhs_into(&stage.mats, &mut k3);
        stage.mats.clone_from(&a.mats);
        stage.axpy(dt, &k3);
        ode.rhs_into(&stage.mats, &mut k4);
        for i in 0..n {
            a.mats[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
        }
        a.symmetrize();
        a.t = (step + 1) as f64 * dt;
        if a.mats.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite { t: a.t, step: step + 1 });
        }
        for i in 0..n {
            integral.mats[i] += (prev[i] + a.mats[i]) * (0.5 * dt);
        }
        let rep = a.invariants();
        flags.extend(rep.failures(Some(trace_bound)));
        diagnostics.push(rep);
        if (step + 1) % record_every == 0 || step + 1 == steps {
            states.push(a.clone());
        }
    }
    integral.t = a.t;
    Ok(CovarianceEvolution { states, integrated: TimeIntegratedCovariance { t: a.t, b: integral }, diagnostics, flags })
}

/// Final state of [`evolve_covariance_recorded`].
pub fn evolve_covariance(a0: &CovarianceState, params: &NoiseParams, dt: f64, t_final: f64) -> Result<CovarianceState> {
    let run = evolve_covariance_recorded(a0, params, dt, t_final, usize::MAX)?;
    Ok(run.final_state().clone())
}

/// Monte-Carlo covariance with per-entry standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceEstimate {
    pub mean: CovarianceState,
    pub std_err: Vec<Matrix3<f64>>,
    pub count: usize,
}

impl CovarianceEstimate {
    /// Largest `|mean − reference| / max(se, floor)` over all entries; an
    /// exact match counts as 0.
    pub fn max_z_score(&self, reference: &CovarianceState, floor: f64) -> f64 {
        let mut worst = 0.0f64;
        for ((m, se), r) in self.mean.mats.iter().zip(&self.std_err).zip(&reference.mats) {
            for idx in 0..9 {
                let diff = (m[idx] - r[idx]).abs();
                if diff == 0.0 {
                    continue;
                }
                worst = worst.max(diff / se[idx].max(floor));
            }
        }
        worst
    }

    /// Per-entry z-scores, upper triangle, in storage order.
    pub fn z_scores(&self, reference: &CovarianceState, floor: f64) -> Vec<[f64; 6]> {
        self.mean
            .mats
            .iter()
            .zip(&self.std_err)
            .zip(&reference.mats)
            .map(|((m, se), r)| {
                let mut z = [0.0; 6];
                for (slot, (i, j)) in UPPER.iter().enumerate() {
                    let diff = m[(*i, *j)] - r[(*i, *j)];
                    z[slot] = if diff == 0.0 { 0.0 } else { diff / se[(*i, *j)].max(floor) };
                }
                z
            })
            .collect()
    }
}

const UPPER: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Empirical `A_k(t)` from a set of fields (one per trajectory).
pub fn mc_covariance_fields(fields: &[&SpectralField], t: f64) -> Result<CovarianceEstimate> {
    let first = fields.first().ok_or_else(|| Error::InvalidParameter("empty ensemble".into()))?;
    let layout = first.layout().clone();
    if fields.iter().any(|f| **f.layout() != *layout) {
        return Err(Error::ConfigMismatch("fields on different shells".into()));
    }
    let m = fields.len();
    let mut mean = CovarianceState::zeros(layout.clone());
    mean.t = t;
    let mut std_err = vec![Matrix3::zeros(); layout.len()];
    let mut column = vec![0.0; m];
    for i in 0..layout.len() {
        let samples: Vec<Matrix3<f64>> = fields.iter().map(|f| second_moment(&f.values()[i])).collect();
        for idx in 0..9 {
            for (c, s) in column.iter_mut().zip(&samples) {
                *c = s[idx];
            }
            let mu = shifted_mean(&column);
            mean.mats[i][idx] = mu;
            if m > 1 {
                let dev: Vec<f64> = column.iter().map(|x| (x - mu) * (x - mu)).collect();
                std_err[i][idx] = (pairwise_sum(&dev) / (m - 1) as f64 / m as f64).sqrt();
            }
        }
    }
    Ok(CovarianceEstimate { mean, std_err, count: m })
}

/// Empirical `A_k(t)` from linear-system trajectory records with snapshots.
pub fn mc_covariance(records: &[TrajectoryRecord], t: f64) -> Result<CovarianceEstimate> {
    let first = records.first().ok_or_else(|| Error::InvalidParameter("empty ensemble".into()))?;
    if !first.config.linear_only {
        return Err(Error::ConfigMismatch("covariance estimation needs linear_only runs".into()));
    }
    if records.iter().any(|r| r.config != first.config) {
        return Err(Error::ConfigMismatch("records come from different configurations".into()));
    }
    let fields = records.iter().map(|r| r.snapshot_at(t)).collect::<Result<Vec<_>>>()?;
    mc_covariance_fields(&fields, t)
}

/// CSV rows `t,k1,k2,k3,a11,a12,a13,a22,a23,a33`, no header.
pub fn covariance_csv_rows(state: &CovarianceState) -> String {
    let mut s = String::new();
    for (k, m) in state.layout.modes().iter().zip(&state.mats) {
        let c = k.components();
        let _ = write!(s, "{},{},{},{}", fmt_f64(state.t), c[0], c[1], c[2]);
        for (i, j) in UPPER {
            let _ = write!(s, ",{}", fmt_f64(m[(i, j)]));
        }
        s.push('\n');
    }
    s
}

pub const COVARIANCE_CSV_HEADER: &str = "t,k1,k2,k3,a11,a12,a13,a22,a23,a33";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::WaveVector;

    fn params(sigma: f64) -> NoiseParams {
        NoiseParams::new(sigma, 1.0, 1.0).unwrap()
    }

    fn field(n: u32) -> SpectralField {
        let layout = SpectrumLayout::shared(n).unwrap();
        SpectralField::from_modes(
            layout,
            [
                (WaveVector::new(1, 0, 0), ComplexVec3::from_parts([0.0, 1.0, 0.3], [0.0, -0.2, 0.5])),
                (WaveVector::new(0, 1, 1), ComplexVec3::from_parts([1.0, 0.4, -0.4], [0.1, 0.0, 0.0])),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_state_has_zero_rhs() {
        let a = CovarianceState::zeros(SpectrumLayout::shared(2).unwrap());
        assert_eq!(covariance_rhs(&a, &params(1.0)), a);
        let end = evolve_covariance(&a, &params(1.0), 0.01, 0.1).unwrap();
        assert_eq!(end.max_abs(), 0.0);
    }

    #[test]
    fn zero_noise_freezes_covariance() {
        let a = CovarianceState::from_field(&field(2));
        let end = evolve_covariance(&a, &params(0.0), 0.01, 0.2).unwrap();
        assert_eq!(end.matrices(), a.matrices());
    }

    #[test]
    fn deterministic_field_satisfies_invariants() {
        let a = CovarianceState::from_field(&field(3));
        let r = a.invariants();
        assert!(r.failures(Some(field(3).energy())).is_empty(), "{r:?}");
        assert!((a.trace_sum() - field(3).energy()).abs() < 1e-14);
    }

    #[test]
    fn trace_sum_of_rhs_vanishes() {
        let a = CovarianceState::from_field(&field(3));
        let d = covariance_rhs(&a, &params(1.3));
        let scale = d.max_abs().max(1.0);
        assert!(d.trace_sum().abs() <= 1e-12 * scale);
    }

    #[test]
    fn csv_has_one_row_per_mode() {
        let a = CovarianceState::from_field(&field(2));
        let csv = covariance_csv_rows(&a);
        assert_eq!(csv.lines().count(), a.layout().len());
        assert!(csv.lines().all(|l| l.split(',').count() == 10));
    }
}
