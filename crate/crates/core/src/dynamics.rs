//! Right-hand sides of the truncated Fourier system.
//!
//! Every sum over `h` runs over the symmetric interaction set
//! `Γ_N^k = {h : 0 < ‖h‖ < N, 0 < ‖k − h‖ < N}`. With this set the triad
//! pairing `(k, h) ↔ (k − h, −h)` is closed, so the nonlinear transfer and the
//! noise transfer conserve energy exactly.
//!
//! The interaction table is built once per `(layout, params)`; evaluations
//! are then a flat loop over precomputed triads.

use std::sync::Arc;

use nalgebra::Matrix3;
use num_complex::Complex64;

use crate::noise::{NoiseIncrement, NoiseParams};
use crate::spectral::{project_unchecked, projector_matrix, ComplexVec3, ModeRef, SpectralField, SpectrumLayout};

/// Time derivative of a field; same storage as the field itself.
pub type DriftField = SpectralField;

#[derive(Clone, Debug)]
struct Triad {
    h: ModeRef,
    k_minus_h: ModeRef,
    // P_h(k), exact zero for h ∥ k
    ph_k: [f64; 3],
    smoothing: f64,
    sigma_h: f64,
}

/// Precomputed Galerkin interaction table.
#[derive(Clone, Debug)]
pub struct Dynamics {
    layout: Arc<SpectrumLayout>,
    params: NoiseParams,
    offsets: Vec<usize>,
    triads: Vec<Triad>,
    // -Σ σ_h² ‖P_h k‖² P_k P_{k-h}, one per stored k
    ito: Vec<Matrix3<f64>>,
}

impl Dynamics {
    pub fn new(layout: Arc<SpectrumLayout>, params: NoiseParams) -> Self {
        let mut offsets = Vec::with_capacity(layout.len() + 1);
        let mut triads = Vec::new();
        let mut ito = Vec::with_capacity(layout.len());
        for k in layout.modes() {
            offsets.push(triads.len());
            let pk = projector_matrix(k).expect("stored modes are nonzero").0;
            let mut c = Matrix3::zeros();
            for (h, h_ref) in layout.extended_modes() {
                let kmh = *k - h;
                let Some(kmh_ref) = layout.locate(&kmh) else { continue };
                let sigma_h = params.sigma_h(&h);
                let weight = sigma_h * sigma_h * h.perp_norm_sq(k);
                if weight != 0.0 {
                    let pkmh = projector_matrix(&kmh).expect("shell vectors are nonzero").0;
                    c -= (pk * pkmh) * weight;
                }
                triads.push(Triad {
                    h: h_ref,
                    k_minus_h: kmh_ref,
                    ph_k: h.project_lattice(k),
                    smoothing: params.smoothing(&h),
                    sigma_h,
                });
            }
            ito.push(c);
        }
        offsets.push(triads.len());
        Self { layout, params, offsets, triads, ito }
    }

    pub fn layout(&self) -> &Arc<SpectrumLayout> {
        &self.layout
    }

    pub fn params(&self) -> &NoiseParams {
        &self.params
    }

    /// Number of `(k, h)` pairs with `k ∈ J_N`, `h ∈ Γ_N^k`.
    pub fn triad_count(&self) -> usize {
        self.triads.len()
    }

    /// The 3×3 matrix `C_k` with `ito_correction(Y)_k = C_k Y_k`.
    pub fn ito_matrix(&self, index: usize) -> &Matrix3<f64> {
        &self.ito[index]
    }

    /// Fastest time scale at energy `energy`: `max_k ‖C_k‖_F` for the noise
    /// plus `(N−1)·‖y‖_{l²}` for the nonlinear transport (dropped when
    /// `linear_only`).
    pub fn rate_scale(&self, energy: f64, linear_only: bool) -> f64 {
        let noise = self.ito.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if linear_only {
            noise
        } else {
            noise + (self.layout.cutoff() as f64 - 1.0) * (2.0 * energy).sqrt()
        }
    }

    /// Transport increment
    /// `−i P_k Σ_h [nl_scale · ⟨Y_h,k⟩/(1+α‖h‖²)^p + σ_h ⟨ΔW_h,k⟩] Y_{k−h}`,
    /// written into `out`. `dw = None` drops the noise part.
    pub(crate) fn transport_into(
        &self,
        y: &[ComplexVec3],
        dw: Option<&[ComplexVec3]>,
        nl_scale: f64,
        out: &mut [ComplexVec3],
    ) {
        let minus_i = Complex64::new(0.0, -1.0);
        let lookup = |vals: &[ComplexVec3], r: ModeRef| {
            let v = vals[r.index];
            if r.conj {
                v.conj()
            } else {
                v
            }
        };
        for (i, k) in self.layout.modes().iter().enumerate() {
            let kf = k.as_f64();
            let mut acc = ComplexVec3::ZERO;
            for t in &self.triads[self.offsets[i]..self.offsets[i + 1]] {
                let mut coeff = Complex64::new(0.0, 0.0);
                if nl_scale != 0.0 {
                    coeff += lookup(y, t.h).dot_real(&kf) * (nl_scale * t.smoothing);
                }
                if let Some(dw) = dw {
                    coeff += lookup(dw, t.h).dot_real(&t.ph_k) * t.sigma_h;
                }
                if coeff != Complex64::new(0.0, 0.0) {
                    acc.add_scaled(coeff, &lookup(y, t.k_minus_h));
                }
            }
            out[i] = project_unchecked(k, &acc).mul_complex(minus_i);
        }
    }

    /// `out_k += scale · C_k Y_k`.
    pub(crate) fn add_ito_into(&self, y: &[ComplexVec3], scale: f64, out: &mut [ComplexVec3]) {
        for ((c, yk), o) in self.ito.iter().zip(y).zip(out.iter_mut()) {
            *o += yk.apply(c).scale(scale);
        }
    }

    /// `−i Σ_{h∈Γ_N^k} ⟨Y_h,k⟩/(1+α‖h‖²)^p · P_k(Y_{k−h})` for every stored `k`.
    pub fn nonlinear_drift(&self, y: &SpectralField) -> DriftField {
        let mut out = SpectralField::zeros(self.layout.clone());
        self.transport_into(y.values(), None, 1.0, out.values_mut());
        out
    }

    /// `−i Σ_{h∈Γ_N^k} σ_h ⟨ΔW_h,k⟩ P_k(Y_{k−h})`; bilinear in `(Y, ΔW)`.
    pub fn diffusion_increment(&self, y: &SpectralField, dw: &NoiseIncrement) -> SpectralField {
        let mut out = SpectralField::zeros(self.layout.clone());
        self.transport_into(y.values(), Some(dw.values()), 0.0, out.values_mut());
        out
    }

    /// `−Σ_{h∈Γ_N^k} σ_h² ‖P_h(k)‖² P_k P_{k−h} Y_k`.
    pub fn ito_correction(&self, y: &SpectralField) -> DriftField {
        let mut out = SpectralField::zeros(self.layout.clone());
        self.add_ito_into(y.values(), 1.0, out.values_mut());
        out.reproject();
        out
    }
}

/// Nonlinear Leray-α drift with the standard filter `(1 + α‖h‖²)^{-1}`.
pub fn nonlinear_drift(y: &SpectralField, alpha: f64) -> DriftField {
    let params = NoiseParams { sigma: 0.0, alpha, p: 1.0 };
    Dynamics::new(y.layout().clone(), params).nonlinear_drift(y)
}

pub fn diffusion_increment(y: &SpectralField, dw: &NoiseIncrement, params: &NoiseParams) -> SpectralField {
    Dynamics::new(y.layout().clone(), *params).diffusion_increment(y, dw)
}

pub fn ito_correction(y: &SpectralField, params: &NoiseParams) -> DriftField {
    Dynamics::new(y.layout().clone(), *params).ito_correction(y)
}

/// `Re Σ_{k∈ℤ³} ⟨B_k, Y_k⟩` over the conjugate-extended shell.
pub fn energy_transfer(b: &SpectralField, y: &SpectralField) -> f64 {
    2.0 * b.values().iter().zip(y.values()).map(|(bk, yk)| bk.inner(yk).re).sum::<f64>()
}
