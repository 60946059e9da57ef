//! Truncated mode lattice `[-M, M]^n` and complex mode fields on it.
//!
//! Fields are stored densely, component-major: amplitude `(i, α)` lives at
//! `i * lattice.len() + lattice.index_of(α)`. Products whose index falls off
//! the lattice are dropped (sharp Galerkin truncation, no aliasing).

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;

/// Solenoidality tolerance relative to the field norm.
pub const TOL_DIV: f64 = 1e-12;

/// Relative slack allowed when testing an envelope, to absorb the rounding
/// of `|r·e^{iφ}|` back to `r`.
pub const ENVELOPE_RTOL: f64 = 1e-12;

/// A lattice index α ∈ ℤⁿ.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeIndex(pub Vec<i64>);

impl ModeIndex {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn neg(&self) -> ModeIndex {
        ModeIndex(self.0.iter().map(|a| -a).collect())
    }
}

impl From<&[i64]> for ModeIndex {
    fn from(c: &[i64]) -> Self {
        ModeIndex(c.to_vec())
    }
}

#[derive(Debug)]
struct Tables {
    coords: Vec<i64>,
    norm_sq: Vec<i64>,
    strides: Vec<usize>,
}

/// Cubic truncation `|α_j| ≤ M` in dimension `n`, on a torus of side `l`.
#[derive(Debug, Clone)]
pub struct Lattice {
    dim: usize,
    trunc: i64,
    length: f64,
    tables: Arc<Tables>,
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.trunc == other.trunc && self.length == other.length
    }
}

impl Lattice {
    pub fn new(dim: usize, trunc: i64, length: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("lattice dimension must be at least 1".into()));
        }
        if trunc < 0 {
            return Err(Error::Config(format!("truncation must be non-negative, got {trunc}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Config(format!("torus length must be positive, got {length}")));
        }
        let side = (2 * trunc + 1) as usize;
        let len = side
            .checked_pow(dim as u32)
            .filter(|&l| l <= 1 << 26)
            .ok_or_else(|| Error::Config(format!("lattice (n={dim}, M={trunc}) is too large")))?;
        // Last coordinate varies fastest.
        let mut strides = vec![1usize; dim];
        for d in (0..dim.saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * side;
        }
        let mut coords = Vec::with_capacity(len * dim);
        let mut norm_sq = Vec::with_capacity(len);
        for k in 0..len {
            let mut rem = k;
            let mut nsq = 0;
            for &stride in &strides {
                let c = (rem / stride) as i64 - trunc;
                rem %= stride;
                coords.push(c);
                nsq += c * c;
            }
            norm_sq.push(nsq);
        }
        Ok(Lattice { dim, trunc, length, tables: Arc::new(Tables { coords, norm_sq, strides }) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trunc(&self) -> i64 {
        self.trunc
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of lattice sites (per component).
    pub fn len(&self) -> usize {
        self.tables.norm_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of α = 0.
    pub fn center(&self) -> usize {
        self.len() / 2
    }

    pub fn coords(&self, k: usize) -> &[i64] {
        &self.tables.coords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn mode(&self, k: usize) -> ModeIndex {
        ModeIndex(self.coords(k).to_vec())
    }

    pub fn norm_sq(&self, k: usize) -> i64 {
        self.tables.norm_sq[k]
    }

    pub fn norm(&self, k: usize) -> f64 {
        (self.tables.norm_sq[k] as f64).sqrt()
    }

    /// Index of −α.
    pub fn neg_index(&self, k: usize) -> usize {
        2 * self.center() - k
    }

    pub fn index_of(&self, alpha: &[i64]) -> Option<usize> {
        if alpha.len() != self.dim || alpha.iter().any(|a| a.abs() > self.trunc) {
            return None;
        }
        Some(
            alpha
                .iter()
                .zip(&self.tables.strides)
                .map(|(&a, &s)| (a + self.trunc) as usize * s)
                .sum(),
        )
    }

    pub fn ensure_same(&self, other: &Lattice) -> Result<()> {
        if self != other {
            return Err(Error::LatticeMismatch(format!(
                "(n={}, M={}, l={}) vs (n={}, M={}, l={})",
                self.dim, self.trunc, self.length, other.dim, other.trunc, other.length
            )));
        }
        Ok(())
    }

    /// Calls `f(γ, α−γ)` for every γ such that both γ and α−γ lie on the
    /// lattice, in increasing γ order.
    #[inline]
    pub fn for_each_pair<F: FnMut(usize, usize)>(&self, alpha: usize, mut f: F) {
        let m = self.trunc;
        let a = self.coords(alpha);
        let n = self.dim;
        let mut lo = [0i64; 8];
        let mut hi = [0i64; 8];
        let (lo, hi) = if n <= 8 {
            (&mut lo[..n], &mut hi[..n])
        } else {
            // Dimensions above 8 are never used at desk scale; fall back to a
            // full scan.
            for g in 0..self.len() {
                let d = alpha as isize - g as isize + self.center() as isize;
                let c = self.coords(g);
                if a.iter().zip(c).all(|(x, y)| (x - y).abs() <= m) {
                    f(g, d as usize);
                }
            }
            return;
        };
        for d in 0..n {
            lo[d] = (a[d] - m).max(-m);
            hi[d] = (a[d] + m).min(m);
        }
        let strides = &self.tables.strides;
        let center = self.center();
        let mut cur = [0i64; 8];
        cur[..n].copy_from_slice(lo);
        loop {
            let g: usize = (0..n).map(|d| (cur[d] + m) as usize * strides[d]).sum();
            f(g, alpha + center - g);
            // odometer over the last axis first
            let mut d = n;
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                if cur[d] < hi[d] {
                    cur[d] += 1;
                    break;
                }
                cur[d] = lo[d];
            }
        }
    }

    /// Direct truncated convolution `out_α = Σ_γ a_{α−γ} b_γ`.
    pub fn convolve(&self, a: &[Complex64], b: &[Complex64]) -> Result<Vec<Complex64>> {
        self.convolve_with(Exec::default(), a, b)
    }

    pub fn convolve_with(
        &self,
        exec: Exec,
        a: &[Complex64],
        b: &[Complex64],
    ) -> Result<Vec<Complex64>> {
        if a.len() != self.len() || b.len() != self.len() {
            return Err(Error::LatticeMismatch(format!(
                "component lengths {} and {} on a lattice of {} sites",
                a.len(),
                b.len(),
                self.len()
            )));
        }
        Ok(exec.map(self.len(), |k| {
            let mut acc = Complex64::new(0.0, 0.0);
            self.for_each_pair(k, |g, d| acc += a[d] * b[g]);
            acc
        }))
    }
}

/// A vector field of complex Fourier amplitudes `v_{iα}`, `i = 0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeField {
    lattice: Lattice,
    data: Vec<Complex64>,
    pub real_valued: bool,
    pub solenoidal: bool,
}

impl ModeField {
    pub fn zeros(lattice: &Lattice) -> Self {
        ModeField {
            data: vec![Complex64::new(0.0, 0.0); lattice.dim() * lattice.len()],
            lattice: lattice.clone(),
            real_valued: true,
            solenoidal: true,
        }
    }

    pub fn from_data(lattice: &Lattice, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != lattice.dim() * lattice.len() {
            return Err(Error::LatticeMismatch(format!(
                "expected {} amplitudes, got {}",
                lattice.dim() * lattice.len(),
                data.len()
            )));
        }
        Ok(ModeField { lattice: lattice.clone(), data, real_valued: false, solenoidal: false })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn components(&self) -> usize {
        self.lattice.dim()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn component(&self, i: usize) -> &[Complex64] {
        let l = self.lattice.len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [Complex64] {
        let l = self.lattice.len();
        &mut self.data[i * l..(i + 1) * l]
    }

    pub fn at(&self, i: usize, k: usize) -> Complex64 {
        self.data[i * self.lattice.len() + k]
    }

    pub fn at_mut(&mut self, i: usize, k: usize) -> &mut Complex64 {
        let l = self.lattice.len();
        &mut self.data[i * l + k]
    }

    pub fn get(&self, i: usize, alpha: &[i64]) -> Option<Complex64> {
        self.lattice.index_of(alpha).map(|k| self.at(i, k))
    }

    pub fn set(&mut self, i: usize, alpha: &[i64], value: Complex64) -> Result<()> {
        let k = self.lattice.index_of(alpha).ok_or_else(|| {
            Error::Domain(format!("mode {alpha:?} is not on the lattice"))
        })?;
        *self.at_mut(i, k) = value;
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// ℓ² norm, rescaled internally so huge amplitudes do not overflow.
    pub fn l2_norm(&self) -> f64 {
        let plain = self.data.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if plain.is_finite() && plain > 1e-280 {
            return plain.sqrt();
        }
        let scale = self.sup_norm();
        if scale == 0.0 || !scale.is_finite() {
            return scale;
        }
        scale * self.data.iter().map(|z| (z / scale).norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> ModeField {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= factor);
        out
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, factor: f64, other: &ModeField) -> Result<()> {
        self.lattice.ensure_same(&other.lattice)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b * factor);
        Ok(())
    }

    /// `self - other` in the max-modulus sense.
    pub fn max_diff(&self, other: &ModeField) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// max over (i, α) of `|v_{i,−α} − conj(v_{iα})|`.
    pub fn reality_defect(&self) -> f64 {
        let lat = &self.lattice;
        let mut worst: f64 = 0.0;
        for i in 0..self.components() {
            let c = self.component(i);
            for k in 0..lat.len() {
                worst = worst.max((c[lat.neg_index(k)] - c[k].conj()).norm());
            }
        }
        worst
    }

    /// max over α of `|Σ_j α_j v_{jα}|`.
    pub fn divergence_defect(&self) -> f64 {
        let lat = &self.lattice;
        (0..lat.len())
            .map(|k| {
                let a = lat.coords(k);
                (0..self.components())
                    .map(|j| self.at(j, k) * a[j] as f64)
                    .sum::<Complex64>()
                    .norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn check_solenoidal(&self) -> bool {
        self.divergence_defect() <= TOL_DIV * self.l2_norm().max(f64::MIN_POSITIVE)
    }

    /// `d_α = Σ_j (2πi α_j / l) v_{jα}`.
    pub fn divergence(&self) -> Vec<Complex64> {
        let lat = &self.lattice;
        let scale = 2.0 * PI / lat.length();
        (0..lat.len())
            .map(|k| {
                let a = lat.coords(k);
                (0..self.components())
                    .map(|j| Complex64::new(0.0, scale * a[j] as f64) * self.at(j, k))
                    .sum()
            })
            .collect()
    }

    /// Mode-space Leray projection `P(α) = I − ααᵀ/|α|²`, identity at α = 0.
    pub fn leray_project(&self) -> Result<ModeField> {
        let lat = &self.lattice;
        let n = lat.dim();
        if n < 2 {
            return Err(Error::Config("Leray projection needs dimension n >= 2".into()));
        }
        let mut out = self.clone();
        project_in_place(lat, &mut out.data);
        out.solenoidal = true;
        Ok(out)
    }

    /// Dual Sobolev norm `sqrt(Σ (1+|α|^{2s}) |v_{iα}|²)`; `s = 0` is the
    /// plain ℓ² norm.
    pub fn hs_norm(&self, s: f64) -> f64 {
        if s == 0.0 {
            return self.l2_norm();
        }
        let weights = hs_weights(&self.lattice, s);
        let l = self.lattice.len();
        self.data
            .iter()
            .enumerate()
            .map(|(idx, z)| weights[idx % l] * z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Replace every amplitude pair by its conjugate-symmetric part.
    pub fn symmetrize_reality(&mut self) {
        let lat = self.lattice.clone();
        for i in 0..self.components() {
            let c = self.component_mut(i);
            for k in 0..lat.len() {
                let nk = lat.neg_index(k);
                if nk < k {
                    continue;
                }
                let avg = (c[k] + c[nk].conj()) * 0.5;
                c[k] = avg;
                c[nk] = avg.conj();
            }
        }
        self.real_valued = true;
    }

    /// Field with `|v_{iα}| = C/(1+|α|^s)` and phases drawn from `rng`,
    /// conjugate-symmetric so the physical field is real.
    pub fn from_envelope<R: Rng + ?Sized>(
        lattice: &Lattice,
        env: &DecayEnvelope,
        rng: &mut R,
    ) -> ModeField {
        let mut out = ModeField::zeros(lattice);
        let center = lattice.center();
        for i in 0..lattice.dim() {
            for k in center..lattice.len() {
                let r = env.bound(lattice.norm(k));
                let c = out.component_mut(i);
                if k == center {
                    c[k] = Complex64::new(if rng.gen::<bool>() { r } else { -r }, 0.0);
                } else {
                    let z = Complex64::from_polar(r, rng.gen_range(0.0..2.0 * PI));
                    c[k] = z;
                    c[lattice.neg_index(k)] = z.conj();
                }
            }
        }
        out.real_valued = true;
        out.solenoidal = false;
        out
    }

    pub fn to_json(&self) -> FieldRecord {
        let lat = &self.lattice;
        let mut entries = Vec::new();
        for i in 0..self.components() {
            for k in 0..lat.len() {
                let z = self.at(i, k);
                if z.re != 0.0 || z.im != 0.0 {
                    entries.push(FieldEntry { i: i + 1, alpha: lat.coords(k).to_vec(), re: z.re, im: z.im });
                }
            }
        }
        FieldRecord {
            n: lat.dim(),
            m: lat.trunc(),
            l: lat.length(),
            flags: FieldFlags { real_valued: self.real_valued, solenoidal: self.solenoidal },
            entries,
        }
    }

    pub fn from_json(rec: &FieldRecord) -> Result<ModeField> {
        let lat = Lattice::new(rec.n, rec.m, rec.l)?;
        let mut out = ModeField::zeros(&lat);
        for e in &rec.entries {
            if e.i == 0 || e.i > rec.n {
                return Err(Error::Config(format!("component index {} outside 1..={}", e.i, rec.n)));
            }
            out.set(e.i - 1, &e.alpha, Complex64::new(e.re, e.im))?;
        }
        out.real_valued = rec.flags.real_valued;
        out.solenoidal = rec.flags.solenoidal;
        Ok(out)
    }
}

pub(crate) fn hs_weights(lattice: &Lattice, s: f64) -> Vec<f64> {
    (0..lattice.len())
        .map(|k| {
            let nsq = lattice.norm_sq(k) as f64;
            if nsq == 0.0 {
                1.0
            } else {
                1.0 + nsq.powf(s)
            }
        })
        .collect()
}

/// In-place Leray projection of component-major data.
pub(crate) fn project_in_place(lat: &Lattice, data: &mut [Complex64]) {
    let n = lat.dim();
    let l = lat.len();
    for k in 0..l {
        let nsq = lat.norm_sq(k);
        if nsq == 0 {
            continue;
        }
        let a = lat.coords(k);
        let dot: Complex64 = (0..n).map(|j| data[j * l + k] * a[j] as f64).sum();
        let coef = dot / nsq as f64;
        for i in 0..n {
            data[i * l + k] -= coef * a[i] as f64;
        }
    }
}

/// Polynomial decay envelope `|v_{iα}| ≤ C/(1+|α|^s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayEnvelope {
    pub c: f64,
    pub s: f64,
}

impl DecayEnvelope {
    pub fn new(c: f64, s: f64) -> Result<Self> {
        if !(c > 0.0 && s >= 0.0 && c.is_finite() && s.is_finite()) {
            return Err(Error::Config(format!("envelope needs C > 0, s >= 0; got ({c}, {s})")));
        }
        Ok(DecayEnvelope { c, s })
    }

    /// `C/(1+|α|^s)` at Euclidean norm `norm`.
    pub fn bound(&self, norm: f64) -> f64 {
        if norm == 0.0 {
            self.c
        } else {
            self.c / (1.0 + norm.powf(self.s))
        }
    }

    /// Smallest relative slack `1 − |v|/bound` over all amplitudes; negative
    /// means the envelope is violated somewhere. All-zero fields give +∞.
    pub fn margin(&self, field: &ModeField) -> f64 {
        let lat = field.lattice();
        let mut worst = f64::INFINITY;
        for i in 0..field.components() {
            for (k, z) in field.component(i).iter().enumerate() {
                let a = z.norm();
                if a == 0.0 {
                    continue;
                }
                worst = worst.min(1.0 - a / self.bound(lat.norm(k)));
            }
        }
        worst
    }

    pub fn satisfied(&self, field: &ModeField) -> bool {
        self.margin(field) >= -ENVELOPE_RTOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldFlags {
    pub real_valued: bool,
    pub solenoidal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEntry {
    /// 1-based component index.
    pub i: usize,
    pub alpha: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

/// On-disk JSON shape of a [`ModeField`]; zero amplitudes are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: i64,
    pub l: f64,
    pub flags: FieldFlags,
    pub entries: Vec<FieldEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn brute_convolve(lat: &Lattice, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![c(0.0); lat.len()];
        for (ka, slot) in out.iter_mut().enumerate() {
            let alpha = lat.coords(ka);
            for (g, &bg) in b.iter().enumerate() {
                let gamma = lat.coords(g);
                let diff: Vec<i64> = alpha.iter().zip(gamma).map(|(x, y)| x - y).collect();
                if let Some(d) = lat.index_of(&diff) {
                    *slot += a[d] * bg;
                }
            }
        }
        out
    }

    #[test]
    fn index_roundtrip_and_negation() {
        let lat = Lattice::new(3, 2, 1.0).unwrap();
        for k in 0..lat.len() {
            let m = lat.mode(k);
            assert_eq!(lat.index_of(&m.0), Some(k));
            assert_eq!(lat.mode(lat.neg_index(k)), m.neg());
        }
        assert_eq!(lat.coords(lat.center()), &[0, 0, 0]);
        assert_eq!(lat.index_of(&[3, 0, 0]), None);
    }

    #[test]
    fn pair_iteration_matches_full_scan() {
        let lat = Lattice::new(2, 3, 1.0).unwrap();
        for k in 0..lat.len() {
            let mut fast = Vec::new();
            lat.for_each_pair(k, |g, d| fast.push((g, d)));
            let mut slow = Vec::new();
            for g in 0..lat.len() {
                let diff: Vec<i64> =
                    lat.coords(k).iter().zip(lat.coords(g)).map(|(x, y)| x - y).collect();
                if let Some(d) = lat.index_of(&diff) {
                    slow.push((g, d));
                }
            }
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn convolve_with_delta_is_identity() {
        let lat = Lattice::new(2, 2, 1.0).unwrap();
        let mut delta = vec![c(0.0); lat.len()];
        delta[lat.center()] = c(1.0);
        let b: Vec<Complex64> =
            (0..lat.len()).map(|k| Complex64::new(k as f64, -(k as f64) * 0.5)).collect();
        assert_eq!(lat.convolve(&delta, &b).unwrap(), b);
    }

    #[test]
    fn convolve_drops_products_off_lattice() {
        let lat = Lattice::new(1, 1, 1.0).unwrap();
        let a = vec![c(0.0), c(0.0), c(1.0)];
        let out = lat.convolve(&a, &a).unwrap();
        assert!(out.iter().all(|z| *z == c(0.0)));
    }

    #[test]
    fn convolve_fixture_n1_m2() {
        // a_α = 1/(1+|α|³); out_0 by brute-force double loop:
        // Σ_{γ=-2..2} a_{-γ} a_γ = 1 + 2·(1/2)² + 2·(1/9)² = 1.5 + 2/81.
        let lat = Lattice::new(1, 2, 1.0).unwrap();
        let a: Vec<Complex64> =
            (0..lat.len()).map(|k| c(1.0 / (1.0 + lat.norm(k).powi(3)))).collect();
        let out = lat.convolve(&a, &a).unwrap();
        assert_abs_diff_eq!(out[lat.center()].re, 1.5 + 2.0 / 81.0, epsilon = 1e-15);
        assert_eq!(out, brute_convolve(&lat, &a, &a));
    }

    #[test]
    fn convolve_rejects_mismatch() {
        let lat = Lattice::new(1, 2, 1.0).unwrap();
        assert!(matches!(
            lat.convolve(&[c(1.0)], &[c(1.0)]),
            Err(Error::LatticeMismatch(_))
        ));
    }

    #[test]
    fn leray_annihilates_pure_gradient() {
        let lat = Lattice::new(2, 1, 1.0).unwrap();
        let mut v = ModeField::zeros(&lat);
        v.set(0, &[1, 0], c(1.0)).unwrap();
        let p = v.leray_project().unwrap();
        assert_eq!(p.get(0, &[1, 0]).unwrap(), c(0.0));
        assert_eq!(p.get(1, &[1, 0]).unwrap(), c(0.0));
    }

    #[test]
    fn leray_fixture_122() {
        // P = I − ααᵀ/|α|² with α = (1,2,2), |α|² = 9, applied to e_1.
        let lat = Lattice::new(3, 2, 1.0).unwrap();
        let mut v = ModeField::zeros(&lat);
        v.set(0, &[1, 2, 2], c(1.0)).unwrap();
        let p = v.leray_project().unwrap();
        let alpha = [1.0, 2.0, 2.0];
        for (i, want) in [8.0 / 9.0, -2.0 / 9.0, -2.0 / 9.0].iter().enumerate() {
            let brute = if i == 0 { 1.0 } else { 0.0 } - alpha[i] * alpha[0] / 9.0;
            assert_abs_diff_eq!(brute, *want, epsilon = 1e-15);
            assert_abs_diff_eq!(p.get(i, &[1, 2, 2]).unwrap().re, *want, epsilon = 1e-15);
        }
    }

    #[test]
    fn leray_needs_two_dimensions() {
        let lat = Lattice::new(1, 2, 1.0).unwrap();
        assert!(ModeField::zeros(&lat).leray_project().is_err());
    }

    #[test]
    fn divergence_of_gradient_field() {
        let lat = Lattice::new(2, 2, 0.5).unwrap();
        let mut v = ModeField::zeros(&lat);
        let g: Vec<Complex64> =
            (0..lat.len()).map(|k| Complex64::new(1.0 + k as f64, 0.3 * k as f64)).collect();
        for (k, &gk) in g.iter().enumerate() {
            for j in 0..2 {
                *v.at_mut(j, k) = gk * lat.coords(k)[j] as f64;
            }
        }
        let d = v.divergence();
        for k in 0..lat.len() {
            let want = Complex64::new(0.0, 2.0 * PI / 0.5) * lat.norm_sq(k) as f64 * g[k];
            assert!((d[k] - want).norm() <= 1e-12 * want.norm().max(1.0));
        }
    }

    #[test]
    fn hs_norm_basics() {
        let lat = Lattice::new(1, 2, 1.0).unwrap();
        let mut v = ModeField::zeros(&lat);
        assert_eq!(v.hs_norm(3.0), 0.0);
        v.set(0, &[0], c(1.0)).unwrap();
        for s in [0.0, 0.5, 2.0, 7.0] {
            assert_eq!(v.hs_norm(s), 1.0);
        }
    }

    #[test]
    fn hs_norm_fixture_n1_m2_s1() {
        // Direct sum: Σ (1+|α|²)/(1+|α|³)² over α = -2..2
        // = 1 + 2·(2/4) + 2·(5/81).
        let lat = Lattice::new(1, 2, 1.0).unwrap();
        let data: Vec<Complex64> =
            (0..lat.len()).map(|k| c(1.0 / (1.0 + lat.norm(k).powi(3)))).collect();
        let v = ModeField::from_data(&lat, data).unwrap();
        let want = (2.0_f64 + 10.0 / 81.0).sqrt();
        assert_abs_diff_eq!(v.hs_norm(1.0), want, epsilon = 1e-15);
    }

    #[test]
    fn envelope_generated_field_is_real_and_on_envelope() {
        let lat = Lattice::new(3, 2, 1.0).unwrap();
        let env = DecayEnvelope::new(1.0, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = ModeField::from_envelope(&lat, &env, &mut rng);
        assert_eq!(v.reality_defect(), 0.0);
        assert!(env.satisfied(&v));
        assert!(env.margin(&v).abs() < 1e-12);
        assert!(!DecayEnvelope::new(0.99, 5.0).unwrap().satisfied(&v));
    }

    #[test]
    fn json_roundtrip_omits_zeros() {
        let lat = Lattice::new(2, 1, 1.0).unwrap();
        let mut v = ModeField::zeros(&lat);
        v.set(1, &[1, -1], Complex64::new(0.25, -2.0)).unwrap();
        let rec = v.to_json();
        assert_eq!(rec.entries.len(), 1);
        assert_eq!(rec.entries[0].i, 2);
        let text = serde_json::to_string(&rec).unwrap();
        assert!(text.contains("\"M\":1"));
        let back = ModeField::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, v);
    }
}
