//! Wavevector lattice, half-spectrum field storage and the Leray projector.
//!
//! A real, mean-zero, divergence-free velocity field on the periodic box
//! `[0, 2π]³` is represented by its Fourier coefficients `Y_k`. Real-valuedness
//! gives `Y_{-k} = conj(Y_k)`, so only one wavevector of every `±k` pair is
//! stored: the canonical half-set `J` (first nonzero coordinate positive),
//! truncated to the open ball `‖k‖ < N`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_f64;

/// Integer lattice vector `k ∈ ℤ³`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WaveVector {
    c: [i32; 3],
}

impl WaveVector {
    pub const fn new(k1: i32, k2: i32, k3: i32) -> Self {
        Self { c: [k1, k2, k3] }
    }

    pub fn components(&self) -> [i32; 3] {
        self.c
    }

    pub fn norm_sq(&self) -> i64 {
        self.c.iter().map(|&x| (x as i64) * (x as i64)).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.c == [0, 0, 0]
    }

    pub fn dot(&self, other: &WaveVector) -> i64 {
        (0..3).map(|j| self.c[j] as i64 * other.c[j] as i64).sum()
    }

    pub fn as_f64(&self) -> [f64; 3] {
        [self.c[0] as f64, self.c[1] as f64, self.c[2] as f64]
    }

    /// Membership in the canonical half-space `J`: `k1 > 0`, or `k1 = 0, k2 > 0`,
    /// or `k1 = k2 = 0, k3 > 0`.
    pub fn in_half_space(&self) -> bool {
        let [a, b, c] = self.c;
        a > 0 || (a == 0 && b > 0) || (a == 0 && b == 0 && c > 0)
    }

    /// True when `self` and `other` are parallel (integer cross product vanishes).
    pub fn is_parallel(&self, other: &WaveVector) -> bool {
        let [a1, a2, a3] = self.c.map(|x| x as i64);
        let [b1, b2, b3] = other.c.map(|x| x as i64);
        a2 * b3 - a3 * b2 == 0 && a3 * b1 - a1 * b3 == 0 && a1 * b2 - a2 * b1 == 0
    }

    /// `P_self(k)` evaluated in integer arithmetic and scaled once, so that
    /// parallel vectors give an exact zero.
    pub fn project_lattice(&self, k: &WaveVector) -> [f64; 3] {
        let n2 = self.norm_sq();
        let kh = self.dot(k);
        let kc = k.components();
        let mut out = [0.0; 3];
        for j in 0..3 {
            let num = n2 * kc[j] as i64 - kh * self.c[j] as i64;
            out[j] = num as f64 / n2 as f64;
        }
        out
    }

    /// `‖P_self(k)‖² = ‖k‖² sin²θ`, computed exactly from integers before the final division.
    pub fn perp_norm_sq(&self, k: &WaveVector) -> f64 {
        let n2 = self.norm_sq();
        let kh = self.dot(k);
        (n2 * k.norm_sq() - kh * kh) as f64 / n2 as f64
    }
}

impl Neg for WaveVector {
    type Output = WaveVector;
    fn neg(self) -> WaveVector {
        WaveVector::new(-self.c[0], -self.c[1], -self.c[2])
    }
}

impl Sub for WaveVector {
    type Output = WaveVector;
    fn sub(self, rhs: WaveVector) -> WaveVector {
        WaveVector::new(self.c[0] - rhs.c[0], self.c[1] - rhs.c[1], self.c[2] - rhs.c[2])
    }
}

impl Add for WaveVector {
    type Output = WaveVector;
    fn add(self, rhs: WaveVector) -> WaveVector {
        WaveVector::new(self.c[0] + rhs.c[0], self.c[1] + rhs.c[1], self.c[2] + rhs.c[2])
    }
}

impl fmt::Display for WaveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.c[0], self.c[1], self.c[2])
    }
}

/// Complex 3-vector: a Fourier amplitude such as `Y_k` or a noise increment.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ComplexVec3(pub [Complex64; 3]);

impl ComplexVec3 {
    pub const ZERO: ComplexVec3 = ComplexVec3([Complex64::new(0.0, 0.0); 3]);

    pub fn new(c: [Complex64; 3]) -> Self {
        Self(c)
    }

    pub fn from_parts(re: [f64; 3], im: [f64; 3]) -> Self {
        Self([0, 1, 2].map(|j| Complex64::new(re[j], im[j])))
    }

    pub fn from_real(re: [f64; 3]) -> Self {
        Self::from_parts(re, [0.0; 3])
    }

    pub fn re(&self) -> [f64; 3] {
        self.0.map(|z| z.re)
    }

    pub fn im(&self) -> [f64; 3] {
        self.0.map(|z| z.im)
    }

    pub fn conj(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    /// `Σ_j v_j k_j` for a real vector `k`; equals `⟨v, k⟩` since `k` is real.
    pub fn dot_real(&self, k: &[f64; 3]) -> Complex64 {
        self.0[0] * k[0] + self.0[1] * k[1] + self.0[2] * k[2]
    }

    /// Hermitian inner product `⟨x, y⟩ = Σ_j x_j conj(y_j)`.
    pub fn inner(&self, other: &ComplexVec3) -> Complex64 {
        (0..3).map(|j| self.0[j] * other.0[j].conj()).sum()
    }

    /// Real pairing over the six real coordinates: `Σ Re·Re + Im·Im`.
    pub fn real_pairing(&self, other: &ComplexVec3) -> f64 {
        (0..3).map(|j| self.0[j].re * other.0[j].re + self.0[j].im * other.0[j].im).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn mul_complex(&self, c: Complex64) -> Self {
        Self(self.0.map(|z| z * c))
    }

    /// Apply a real 3×3 matrix to the real and imaginary parts separately.
    pub fn apply(&self, m: &Matrix3<f64>) -> Self {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for (i, o) in out.iter_mut().enumerate() {
            for j in 0..3 {
                *o += self.0[j] * m[(i, j)];
            }
        }
        Self(out)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `self += c · other`.
    pub fn add_scaled(&mut self, c: Complex64, other: &ComplexVec3) {
        for j in 0..3 {
            self.0[j] += c * other.0[j];
        }
    }
}

impl Add for ComplexVec3 {
    type Output = ComplexVec3;
    fn add(mut self, rhs: ComplexVec3) -> ComplexVec3 {
        self += rhs;
        self
    }
}

impl Sub for ComplexVec3 {
    type Output = ComplexVec3;
    fn sub(mut self, rhs: ComplexVec3) -> ComplexVec3 {
        self -= rhs;
        self
    }
}

impl AddAssign for ComplexVec3 {
    fn add_assign(&mut self, rhs: ComplexVec3) {
        for j in 0..3 {
            self.0[j] += rhs.0[j];
        }
    }
}

impl SubAssign for ComplexVec3 {
    fn sub_assign(&mut self, rhs: ComplexVec3) {
        for j in 0..3 {
            self.0[j] -= rhs.0[j];
        }
    }
}

impl Mul<f64> for ComplexVec3 {
    type Output = ComplexVec3;
    fn mul(self, rhs: f64) -> ComplexVec3 {
        self.scale(rhs)
    }
}

impl Mul<Complex64> for ComplexVec3 {
    type Output = ComplexVec3;
    fn mul(self, rhs: Complex64) -> ComplexVec3 {
        self.mul_complex(rhs)
    }
}

/// `P_k = I − k kᵀ / ‖k‖²`, the orthogonal projector onto `k^⊥`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectorMatrix(pub Matrix3<f64>);

impl ProjectorMatrix {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, v: &ComplexVec3) -> ComplexVec3 {
        v.apply(&self.0)
    }
}

pub fn projector_matrix(k: &WaveVector) -> Result<ProjectorMatrix> {
    if k.is_zero() {
        return Err(Error::ZeroWaveVector);
    }
    let kf = k.as_f64();
    let n2 = k.norm_sq() as f64;
    let m = Matrix3::from_fn(|i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - kf[i] * kf[j] / n2
    });
    Ok(ProjectorMatrix(m))
}

/// `P_k(v) = v − ⟨v,k⟩/⟨k,k⟩ · k`, acting on real and imaginary parts alike.
pub fn project(k: &WaveVector, v: &ComplexVec3) -> Result<ComplexVec3> {
    if k.is_zero() {
        return Err(Error::ZeroWaveVector);
    }
    Ok(project_unchecked(k, v))
}

pub(crate) fn project_unchecked(k: &WaveVector, v: &ComplexVec3) -> ComplexVec3 {
    let kf = k.as_f64();
    let c = v.dot_real(&kf) / k.norm_sq() as f64;
    let mut out = *v;
    for j in 0..3 {
        out.0[j] -= c * kf[j];
    }
    out
}

/// Reference to a mode of the conjugate-extended shell: a stored index, and
/// whether the value has to be conjugated (the vector is `−k` for stored `k`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeRef {
    pub index: usize,
    pub conj: bool,
}

/// The truncated half-shell `J_N = {k ∈ J : 0 < ‖k‖ < N}` with a fixed
/// enumeration order: ascending `‖k‖²`, then lexicographic.
#[derive(Debug, Clone)]
pub struct SpectrumLayout {
    cutoff: u32,
    modes: Vec<WaveVector>,
    // dense table over the box [-(N-1), N-1]^3; entry is signed (index + 1),
    // negative for the conjugate partner, 0 outside the shell
    table: Vec<i32>,
}

impl SpectrumLayout {
    pub fn new(cutoff: u32) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::InvalidParameter("cutoff must be positive".into()));
        }
        let n = cutoff as i32;
        let r = n - 1;
        let mut modes = Vec::new();
        for a in -r..=r {
            for b in -r..=r {
                for c in -r..=r {
                    let k = WaveVector::new(a, b, c);
                    if k.in_half_space() && k.norm_sq() < (n as i64) * (n as i64) {
                        modes.push(k);
                    }
                }
            }
        }
        modes.sort_by_key(|k| (k.norm_sq(), k.components()));

        let side = (2 * r + 1) as usize;
        let mut table = vec![0i32; side * side * side];
        let mut layout = Self { cutoff, modes, table: Vec::new() };
        for (i, k) in layout.modes.iter().enumerate() {
            table[layout.box_offset(k).unwrap()] = i as i32 + 1;
            table[layout.box_offset(&-*k).unwrap()] = -(i as i32 + 1);
        }
        layout.table = table;
        Ok(layout)
    }

    pub fn shared(cutoff: u32) -> Result<Arc<Self>> {
        Self::new(cutoff).map(Arc::new)
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[WaveVector] {
        &self.modes
    }

    pub fn mode(&self, index: usize) -> WaveVector {
        self.modes[index]
    }

    /// Strict shell test `0 < ‖k‖² < N²` on the full lattice.
    pub fn in_shell(&self, k: &WaveVector) -> bool {
        let n = self.cutoff as i64;
        !k.is_zero() && k.norm_sq() < n * n
    }

    pub fn contains(&self, k: &WaveVector) -> bool {
        matches!(self.locate(k), Some(ModeRef { conj: false, .. }))
    }

    pub fn index_of(&self, k: &WaveVector) -> Option<usize> {
        match self.locate(k) {
            Some(ModeRef { index, conj: false }) => Some(index),
            _ => None,
        }
    }

    /// Locate `k` in the conjugate-extended shell.
    pub fn locate(&self, k: &WaveVector) -> Option<ModeRef> {
        let off = self.box_offset(k)?;
        let e = self.table[off];
        match e.cmp(&0) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(ModeRef { index: (e - 1) as usize, conj: false }),
            std::cmp::Ordering::Less => Some(ModeRef { index: (-e - 1) as usize, conj: true }),
        }
    }

    /// All vectors of the conjugate-extended shell, stored ones first.
    pub fn extended_modes(&self) -> impl Iterator<Item = (WaveVector, ModeRef)> + '_ {
        let stored = self.modes.iter().enumerate().map(|(i, k)| (*k, ModeRef { index: i, conj: false }));
        let partners = self.modes.iter().enumerate().map(|(i, k)| (-*k, ModeRef { index: i, conj: true }));
        stored.chain(partners)
    }

    fn box_offset(&self, k: &WaveVector) -> Option<usize> {
        let r = self.cutoff as i32 - 1;
        let side = (2 * r + 1) as usize;
        let [a, b, c] = k.components();
        if a.abs() > r || b.abs() > r || c.abs() > r {
            return None;
        }
        let (a, b, c) = ((a + r) as usize, (b + r) as usize, (c + r) as usize);
        Some((a * side + b) * side + c)
    }
}

impl PartialEq for SpectrumLayout {
    fn eq(&self, other: &Self) -> bool {
        self.cutoff == other.cutoff
    }
}

/// Half-spectrum velocity field `{Y_k}_{k ∈ J_N}`.
#[derive(Debug, Clone)]
pub struct SpectralField {
    layout: Arc<SpectrumLayout>,
    values: Vec<ComplexVec3>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout && self.values == other.values
    }
}

impl SpectralField {
    pub fn zeros(layout: Arc<SpectrumLayout>) -> Self {
        let values = vec![ComplexVec3::ZERO; layout.len()];
        Self { layout, values }
    }

    /// Build from dense values in layout order; every value is projected.
    pub fn from_values(layout: Arc<SpectrumLayout>, values: Vec<ComplexVec3>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::InvalidParameter(format!("expected {} modes, got {}", layout.len(), values.len())));
        }
        let mut f = Self { layout, values };
        f.reproject();
        Ok(f)
    }

    /// Build from `(k, Y_k)` pairs; vectors outside `J_N` are rejected.
    pub fn from_modes<I>(layout: Arc<SpectrumLayout>, modes: I) -> Result<Self>
    where
        I: IntoIterator<Item = (WaveVector, ComplexVec3)>,
    {
        let mut f = Self::zeros(layout);
        let mut seen = vec![false; f.values.len()];
        for (k, v) in modes {
            let i = f.layout.index_of(&k).ok_or(Error::OutsideShell(k))?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::DuplicateMode(k));
            }
            f.values[i] = project_unchecked(&k, &v);
        }
        Ok(f)
    }

    pub fn layout(&self) -> &Arc<SpectrumLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[ComplexVec3] {
        &self.values
    }

    /// Raw mutable access; callers must [`reproject`](Self::reproject) afterwards.
    pub(crate) fn values_mut(&mut self) -> &mut [ComplexVec3] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<ComplexVec3> {
        self.values
    }

    /// Set a stored mode; `k` must be in `J_N`. The value is projected.
    pub fn set_mode(&mut self, k: &WaveVector, v: ComplexVec3) -> Result<()> {
        let i = self.layout.index_of(k).ok_or(Error::OutsideShell(*k))?;
        self.values[i] = project_unchecked(k, &v);
        Ok(())
    }

    /// Conjugate-extended lookup; zero outside the shell and at the origin.
    pub fn get_mode(&self, k: &WaveVector) -> ComplexVec3 {
        match self.layout.locate(k) {
            Some(r) => self.get_ref(r),
            None => ComplexVec3::ZERO,
        }
    }

    #[inline]
    pub fn get_ref(&self, r: ModeRef) -> ComplexVec3 {
        let v = self.values[r.index];
        if r.conj {
            v.conj()
        } else {
            v
        }
    }

    /// Apply `P_k` to every stored mode.
    pub fn reproject(&mut self) {
        for (k, v) in self.layout.modes.iter().zip(self.values.iter_mut()) {
            *v = project_unchecked(k, v);
        }
    }

    /// `½ Σ_{k∈ℤ³} ‖Y_k‖² = Σ_{k∈J_N} ‖Y_k‖²`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(ComplexVec3::norm_sqr).sum()
    }

    /// Full-lattice `ℓ²` norm squared, `Σ_{k∈ℤ³} ‖Y_k‖² = 2·energy`.
    pub fn l2_norm_sq(&self) -> f64 {
        2.0 * self.energy()
    }

    /// Largest `|⟨Y_k, k⟩| / (‖Y_k‖‖k‖)` over stored modes (0 for empty modes).
    pub fn max_divergence(&self) -> f64 {
        self.layout
            .modes
            .iter()
            .zip(&self.values)
            .map(|(k, v)| {
                let n = v.norm() * k.norm();
                if n == 0.0 {
                    0.0
                } else {
                    v.dot_real(&k.as_f64()).norm() / n
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(ComplexVec3::is_finite)
    }

    /// `self += s · other` without reprojection.
    pub(crate) fn axpy(&mut self, s: f64, other: &[ComplexVec3]) {
        for (a, b) in self.values.iter_mut().zip(other) {
            for j in 0..3 {
                a.0[j] += b.0[j] * s;
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { layout: self.layout.clone(), values: self.values.iter().map(|v| v.scale(s)).collect() }
    }

    /// Velocity at a physical point, `Σ_k Y_k e^{i⟨x,k⟩}` over the full shell.
    pub fn evaluate_physical(&self, x: [f64; 3]) -> Result<[f64; 3]> {
        let mut sum = ComplexVec3::ZERO;
        let mut magnitude = 0.0;
        for (k, r) in self.layout.extended_modes() {
            let kf = k.as_f64();
            let phase = x[0] * kf[0] + x[1] * kf[1] + x[2] * kf[2];
            let y = self.get_ref(r);
            sum += y * Complex64::from_polar(1.0, phase);
            magnitude += y.norm();
        }
        let residual = sum.im().iter().map(|v| v.abs()).fold(0.0, f64::max);
        if residual > 1e-10 * magnitude.max(f64::MIN_POSITIVE) {
            return Err(Error::Consistency(format!(
                "imaginary residual {residual:e} in physical evaluation (field magnitude {magnitude:e})"
            )));
        }
        Ok(sum.re())
    }

    /// Snapshot as NDJSON, one `{"k":..,"re":..,"im":..}` object per stored mode.
    /// All stored modes as one JSON array of `{"k","re","im"}` objects.
    pub fn modes_json(&self) -> String {
        let parts: Vec<String> = self.layout.modes.iter().zip(&self.values).map(|(k, v)| mode_json(k, v)).collect();
        format!("[{}]", parts.join(","))
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.layout.modes.iter().zip(&self.values) {
            out.push_str(&mode_json(k, v));
            out.push('\n');
        }
        out
    }

    /// Parse an NDJSON snapshot; vectors outside `J_N` are rejected.
    ///
    /// Values that are already divergence-free to roundoff are kept verbatim,
    /// so a written snapshot reloads bit-for-bit; others are projected.
    pub fn from_ndjson(layout: Arc<SpectrumLayout>, text: &str) -> Result<Self> {
        let mut f = Self::zeros(layout);
        let mut seen = vec![false; f.values.len()];
        for (line, k, v) in read_modes_ndjson(text)? {
            let perr = |msg: String| Error::Parse { line, msg };
            let i = f.layout.index_of(&k).ok_or_else(|| perr(format!("wavevector {k} is not in J_N")))?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(perr(format!("wavevector {k} appears twice")));
            }
            let div = v.dot_real(&k.as_f64()).norm();
            f.values[i] = if div <= 1e-12 * v.norm() * k.norm() { v } else { project_unchecked(&k, &v) };
        }
        Ok(f)
    }
}

/// Raw `(line, k, value)` records of an NDJSON snapshot, unvalidated.
pub fn read_modes_ndjson(text: &str) -> Result<Vec<(usize, WaveVector, ComplexVec3)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let rec: ModeRecord =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: lineno + 1, msg: e.to_string() })?;
        let [a, b, c] = rec.k;
        out.push((lineno + 1, WaveVector::new(a, b, c), ComplexVec3::from_parts(rec.re, rec.im)));
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ModeRecord {
    k: [i32; 3],
    re: [f64; 3],
    im: [f64; 3],
}

pub(crate) fn mode_json(k: &WaveVector, v: &ComplexVec3) -> String {
    let [a, b, c] = k.components();
    let re = v.re().map(fmt_f64);
    let im = v.im().map(fmt_f64);
    format!("{{\"k\":[{a},{b},{c}],\"re\":[{},{},{}],\"im\":[{},{},{}]}}", re[0], re[1], re[2], im[0], im[1], im[2])
}
