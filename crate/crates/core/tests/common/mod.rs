#![allow(dead_code)]

use std::collections::BTreeMap;

use leray_alpha::{ComplexVec3, NoiseParams, SpectralField, SpectrumLayout, WaveVector};
use num_complex::Complex64;

pub type C3 = [Complex64; 3];

/// Every lattice point of the closed shell `0 < ‖k‖ < N`, with its value,
/// built by walking the box and filling `−k` by conjugation.
pub fn full_lattice(y: &SpectralField) -> BTreeMap<[i32; 3], C3> {
    let n = y.layout().cutoff() as i32;
    let mut out = BTreeMap::new();
    for (k, v) in y.layout().modes().iter().zip(y.values()) {
        let c = k.components();
        out.insert(c, v.0);
        out.insert([-c[0], -c[1], -c[2]], v.0.map(|z| z.conj()));
    }
    // sanity: exactly the punctured ball
    let mut count = 0;
    for a in -n..=n {
        for b in -n..=n {
            for c in -n..=n {
                let r = a * a + b * b + c * c;
                if r > 0 && r < n * n {
                    count += 1;
                }
            }
        }
    }
    assert_eq!(count, out.len());
    out
}

pub fn sub(a: [i32; 3], b: [i32; 3]) -> [i32; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn nsq(a: [i32; 3]) -> i32 {
    a[0] * a[0] + a[1] * a[1] + a[2] * a[2]
}

/// `(I − k kᵀ/‖k‖²) v` written out by hand.
pub fn leray(k: [i32; 3], v: C3) -> C3 {
    let kk = nsq(k) as f64;
    let kf = k.map(|x| x as f64);
    let dot = v[0] * kf[0] + v[1] * kf[1] + v[2] * kf[2];
    [v[0] - dot * (kf[0] / kk), v[1] - dot * (kf[1] / kk), v[2] - dot * (kf[2] / kk)]
}

pub fn dot_k(v: &C3, k: [i32; 3]) -> Complex64 {
    v[0] * k[0] as f64 + v[1] * k[1] as f64 + v[2] * k[2] as f64
}

/// Brute-force convolution over the whole lattice:
/// `−i P_k Σ_h ⟨Y_h,k⟩ (1+α‖h‖²)^{-p} Y_{k−h}` for every stored `k`.
pub fn brute_drift(y: &SpectralField, alpha: f64, p: f64) -> Vec<C3> {
    let lat = full_lattice(y);
    let n2 = (y.layout().cutoff() as i32).pow(2);
    y.layout()
        .modes()
        .iter()
        .map(|k| {
            let k = k.components();
            let mut acc = [Complex64::new(0.0, 0.0); 3];
            for (h, yh) in &lat {
                let kmh = sub(k, *h);
                let r = nsq(kmh);
                if r == 0 || r >= n2 {
                    continue;
                }
                let w = dot_k(yh, k) * (1.0 + alpha * nsq(*h) as f64).powf(-p);
                let ykmh = lat[&kmh];
                for j in 0..3 {
                    acc[j] += w * ykmh[j];
                }
            }
            leray(k, acc).map(|z| z * Complex64::new(0.0, -1.0))
        })
        .collect()
}

pub fn max_abs_diff(a: &[ComplexVec3], b: &[C3]) -> f64 {
    a.iter().zip(b).flat_map(|(x, y)| (0..3).map(move |j| (x.0[j] - y[j]).norm())).fold(0.0, f64::max)
}

pub fn max_abs(a: &[C3]) -> f64 {
    a.iter().flat_map(|x| x.iter().map(|z| z.norm())).fold(0.0, f64::max)
}

pub fn params(sigma: f64, alpha: f64) -> NoiseParams {
    NoiseParams::new(sigma, alpha, 1.0).unwrap()
}

pub fn wv(a: i32, b: i32, c: i32) -> WaveVector {
    WaveVector::new(a, b, c)
}

pub fn layout(n: u32) -> std::sync::Arc<SpectrumLayout> {
    SpectrumLayout::shared(n).unwrap()
}
