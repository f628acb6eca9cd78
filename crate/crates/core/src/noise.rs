//! The projected complex Brownian family `{W_h}` driving the transport noise.
//!
//! For every `h ∈ J_N` six independent real Gaussians of variance `dt` form the
//! raw increment `ΔB′_h` (real and imaginary parts of three components). The
//! increment entering the dynamics is `ΔW_h = P_h(ΔB′_h)`, extended to `−h` by
//! conjugation.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::format::{fmt_f64, fmt_f64_array};
use crate::spectral::{project_unchecked, ComplexVec3, SpectrumLayout, WaveVector};

/// Noise amplitude `σ`, filter width `α` and smoothing power `p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseParams {
    pub sigma: f64,
    pub alpha: f64,
    pub p: f64,
}

impl NoiseParams {
    pub fn new(sigma: f64, alpha: f64, p: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidParameter(format!("p must be finite and >= 1, got {p}")));
        }
        Ok(Self { sigma, alpha, p })
    }

    /// Filter factor `(1 + α‖h‖²)^{-p}` applied to `Y_h` in the advecting velocity.
    pub fn smoothing(&self, h: &WaveVector) -> f64 {
        (1.0 + self.alpha * h.norm_sq() as f64).powf(-self.p)
    }

    /// `σ_h = σ / (1 + α‖h‖²)^p`.
    pub fn sigma_h(&self, h: &WaveVector) -> f64 {
        self.sigma * self.smoothing(h)
    }

    /// `Σ σ_h²` over the conjugate-extended shell.
    pub fn sigma_sq_sum(&self, layout: &SpectrumLayout) -> f64 {
        2.0 * layout.modes().iter().map(|h| self.sigma_h(h).powi(2)).sum::<f64>()
    }

    /// Check that the truncated noise has finite total variance.
    pub fn validate_on(&self, layout: &SpectrumLayout) -> Result<()> {
        let s = self.sigma_sq_sum(layout);
        if s.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("sum of sigma_h^2 is not finite ({s})")))
        }
    }
}

/// Generator for trajectory `index` of an ensemble seeded with `base_seed`.
///
/// Streams depend only on `base_seed ^ index`, so ensembles are reproducible
/// regardless of how trajectories are scheduled.
pub fn trajectory_rng(base_seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed ^ index)
}

/// Unprojected draws `ΔB′_h`, `h ∈ J_N`, each real coordinate `N(0, dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawNoise {
    pub dt: f64,
    pub values: Vec<ComplexVec3>,
}

impl RawNoise {
    pub fn zeros(layout: &SpectrumLayout, dt: f64) -> Self {
        Self { dt, values: vec![ComplexVec3::ZERO; layout.len()] }
    }
}

pub fn sample_raw<R: Rng + ?Sized>(rng: &mut R, dt: f64, layout: &SpectrumLayout) -> Result<RawNoise> {
    check_dt(dt)?;
    let mut raw = RawNoise::zeros(layout, dt);
    fill_raw(rng, &mut raw);
    Ok(raw)
}

pub(crate) fn fill_raw<R: Rng + ?Sized>(rng: &mut R, raw: &mut RawNoise) {
    let sd = raw.dt.sqrt();
    for v in raw.values.iter_mut() {
        let mut g = [0.0f64; 6];
        for x in g.iter_mut() {
            *x = rng.sample::<f64, _>(StandardNormal) * sd;
        }
        *v = ComplexVec3::from_parts([g[0], g[1], g[2]], [g[3], g[4], g[5]]);
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")))
    }
}

/// Projected increments `ΔW_h = P_h(ΔB′_h)` for `h ∈ J_N`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseIncrement {
    layout: Arc<SpectrumLayout>,
    pub dt: f64,
    values: Vec<ComplexVec3>,
}

impl NoiseIncrement {
    pub fn zeros(layout: Arc<SpectrumLayout>, dt: f64) -> Self {
        let values = vec![ComplexVec3::ZERO; layout.len()];
        Self { layout, dt, values }
    }

    pub fn from_raw(layout: Arc<SpectrumLayout>, raw: &RawNoise) -> Self {
        let mut inc = Self::zeros(layout, raw.dt);
        inc.project_from(raw);
        inc
    }

    pub(crate) fn project_from(&mut self, raw: &RawNoise) {
        self.dt = raw.dt;
        for ((h, w), b) in self.layout.modes().iter().zip(self.values.iter_mut()).zip(&raw.values) {
            *w = project_unchecked(h, b);
        }
    }

    /// Build directly from per-mode values; each is projected onto `h^⊥`.
    pub fn from_modes<I>(layout: Arc<SpectrumLayout>, dt: f64, modes: I) -> Result<Self>
    where
        I: IntoIterator<Item = (WaveVector, ComplexVec3)>,
    {
        let mut inc = Self::zeros(layout, dt);
        for (h, v) in modes {
            let i = inc.layout.index_of(&h).ok_or(Error::OutsideShell(h))?;
            inc.values[i] = project_unchecked(&h, &v);
        }
        Ok(inc)
    }

    pub fn layout(&self) -> &Arc<SpectrumLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[ComplexVec3] {
        &self.values
    }

    /// Conjugate-extended lookup of `ΔW_h`.
    pub fn get(&self, h: &WaveVector) -> ComplexVec3 {
        match self.layout.locate(h) {
            Some(r) if r.conj => self.values[r.index].conj(),
            Some(r) => self.values[r.index],
            None => ComplexVec3::ZERO,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { layout: self.layout.clone(), dt: self.dt, values: self.values.iter().map(|v| v.scale(s)).collect() }
    }
}

pub fn sample_increment<R: Rng + ?Sized>(rng: &mut R, dt: f64, layout: &Arc<SpectrumLayout>) -> Result<NoiseIncrement> {
    let raw = sample_raw(rng, dt, layout)?;
    Ok(NoiseIncrement::from_raw(layout.clone(), &raw))
}

/// Scalar increment `⟨ΔW_h, k⟩`.
///
/// Evaluated as `⟨ΔW_h, P_h(k)⟩` with `P_h(k)` formed in integer arithmetic;
/// the two agree because `ΔW_h ⊥ h`, and the second is exactly zero when
/// `h ∥ k`. Zero when `h` lies outside the extended shell.
pub fn scalar_increment(noise: &NoiseIncrement, h: &WaveVector, k: &WaveVector) -> Complex64 {
    if h.is_zero() || noise.layout.locate(h).is_none() {
        return Complex64::new(0.0, 0.0);
    }
    noise.get(h).dot_real(&h.project_lattice(k))
}

/// Recorded raw draws for replaying one noise path through several schemes.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseTape {
    pub steps: Vec<RawNoise>,
}

impl NoiseTape {
    pub fn record<R: Rng + ?Sized>(rng: &mut R, dt: f64, steps: usize, layout: &SpectrumLayout) -> Result<Self> {
        check_dt(dt)?;
        let steps = (0..steps).map(|_| sample_raw(rng, dt, layout)).collect::<Result<_>>()?;
        Ok(Self { steps })
    }

    /// Merge consecutive pairs of steps: the tape of the same path at `2·dt`.
    pub fn coarsen(&self) -> Self {
        let steps = self
            .steps
            .chunks(2)
            .map(|c| {
                let mut out = c[0].clone();
                if let Some(b) = c.get(1) {
                    out.dt += b.dt;
                    for (x, y) in out.values.iter_mut().zip(&b.values) {
                        *x += *y;
                    }
                }
                out
            })
            .collect();
        Self { steps }
    }

    /// One line per step: `{"step":n,"dt":..,"modes":[{"h":[..],"w":[re1,re2,re3,im1,im2,im3]},..]}`.
    pub fn to_ndjson(&self, layout: &SpectrumLayout) -> String {
        let mut out = String::new();
        for (n, step) in self.steps.iter().enumerate() {
            let modes: Vec<String> = layout
                .modes()
                .iter()
                .zip(&step.values)
                .map(|(h, w)| {
                    let [a, b, c] = h.components();
                    let re = w.re();
                    let im = w.im();
                    format!(
                        "{{\"h\":[{a},{b},{c}],\"w\":{}}}",
                        fmt_f64_array(&[re[0], re[1], re[2], im[0], im[1], im[2]])
                    )
                })
                .collect();
            out.push_str(&format!("{{\"step\":{n},\"dt\":{},\"modes\":[{}]}}\n", fmt_f64(step.dt), modes.join(",")));
        }
        out
    }

    pub fn from_ndjson(layout: &SpectrumLayout, text: &str) -> Result<Self> {
        #[derive(serde::Deserialize)]
        struct Mode {
            h: [i32; 3],
            w: [f64; 6],
        }
        #[derive(serde::Deserialize)]
        struct Step {
            dt: f64,
            modes: Vec<Mode>,
        }
        let mut steps = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: lineno + 1, msg };
            let s: Step = serde_json::from_str(line).map_err(|e| perr(e.to_string()))?;
            let mut raw = RawNoise::zeros(layout, s.dt);
            for m in s.modes {
                let h = WaveVector::new(m.h[0], m.h[1], m.h[2]);
                let i = layout.index_of(&h).ok_or_else(|| perr(format!("wavevector {h} is not in J_N")))?;
                raw.values[i] = ComplexVec3::from_parts([m.w[0], m.w[1], m.w[2]], [m.w[3], m.w[4], m.w[5]]);
            }
            steps.push(raw);
        }
        Ok(Self { steps })
    }
}
