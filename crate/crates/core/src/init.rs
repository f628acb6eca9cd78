//! Named initial-condition generators.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spectral::{ComplexVec3, SpectralField, SpectrumLayout, WaveVector};

/// Unit vector perpendicular to `k`: the coordinate axis least aligned with
/// `k`, projected and normalized. Deterministic.
pub fn perpendicular_direction(k: &WaveVector) -> Result<[f64; 3]> {
    if k.is_zero() {
        return Err(Error::ZeroWaveVector);
    }
    let c = k.components();
    let axis = (0..3).min_by_key(|&i| (c[i].unsigned_abs(), i)).unwrap();
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let kf = k.as_f64();
    let kk = k.norm_sq() as f64;
    let d = kf[axis] / kk;
    let mut v = [e[0] - d * kf[0], e[1] - d * kf[1], e[2] - d * kf[2]];
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    for x in &mut v {
        *x /= n;
    }
    Ok(v)
}

/// A single real mode `amplitude · e⊥(k)` at `k` (or its stored partner).
/// The stored energy equals `amplitude²`.
pub fn single_mode(layout: Arc<SpectrumLayout>, k: &WaveVector, amplitude: f64) -> Result<SpectralField> {
    if !amplitude.is_finite() {
        return Err(Error::InvalidParameter("amplitude must be finite".into()));
    }
    let dir = perpendicular_direction(k)?;
    let v = ComplexVec3::from_real(dir.map(|x| amplitude * x));
    let stored = if k.in_half_space() { *k } else { -*k };
    let v = if stored == *k { v } else { v.conj() };
    SpectralField::from_modes(layout, [(stored, v)])
}

/// Gaussian random field on every stored mode, projected and rescaled so
/// that `Σ_{J_N} ‖Y_k‖² = energy`.
pub fn random_shell(layout: Arc<SpectrumLayout>, energy: f64, seed: u64) -> Result<SpectralField> {
    if !(energy.is_finite() && energy >= 0.0) {
        return Err(Error::InvalidParameter(format!("energy must be finite and >= 0, got {energy}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let values = (0..layout.len())
        .map(|_| ComplexVec3::from_parts([draw(), draw(), draw()], [draw(), draw(), draw()]))
        .collect();
    let f = SpectralField::from_values(layout, values)?;
    let e = f.energy();
    if e == 0.0 {
        return Ok(f);
    }
    Ok(f.scaled((energy / e).sqrt()))
}
