//! Right-hand sides of the truncated mode systems.
//!
//! Sign conventions. Navier-Stokes:
//!
//! ```text
//! dv_{iα}/dt = −ν(4π²|α|²/l²) v_{iα} − P(α)·[Σ_j Σ_γ (2πiγ_j/l) v_{j(α−γ)} v_{iγ}] + f_{iα}(t)
//! ```
//!
//! with `P(α)` the Leray projector. Burgers, taken literally from the mode form
//! of the inviscid equation (no `2πi`, positive sign):
//!
//! ```text
//! du_{iα}/dt = −ν(4π²|α|²/l²) u_{iα} + Σ_j Σ_{γ≠0} u_{j(α−γ)} γ_j u_{iγ}
//! ```
//!
//! Both nonlinearities share the transport sum `T_{iα} = Σ_j Σ_γ γ_j v_{j(α−γ)} v_{iγ}`;
//! the `γ = 0` term vanishes on its own because of the `γ_j` factor.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dilatation::DilatationChart;
use crate::error::{Error, Result};
use crate::lattice::{project_in_place, Lattice, ModeField};
use crate::par::Exec;

pub const MAX_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub nu: f64,
    pub length: f64,
    pub dim: usize,
}

impl FluidParams {
    pub fn new(nu: f64, length: f64, dim: usize) -> Result<Self> {
        let p = FluidParams { nu, length, dim };
        let mut errs = Vec::new();
        if !(nu >= 0.0 && nu.is_finite()) {
            errs.push(format!("fluid.nu must be >= 0, got {nu}"));
        }
        if !(length > 0.0 && length.is_finite()) {
            errs.push(format!("lattice.l must be > 0, got {length}"));
        }
        if dim == 0 || dim > MAX_DIM {
            errs.push(format!("lattice.n must lie in 1..={MAX_DIM}, got {dim}"));
        }
        if errs.is_empty() {
            Ok(p)
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn for_lattice(lat: &Lattice, nu: f64) -> Result<Self> {
        FluidParams::new(nu, lat.length(), lat.dim())
    }

    fn check(&self, lat: &Lattice) -> Result<()> {
        if self.dim != lat.dim() || self.length != lat.length() {
            return Err(Error::LatticeMismatch(format!(
                "fluid parameters (n={}, l={}) vs lattice (n={}, l={})",
                self.dim,
                self.length,
                lat.dim(),
                lat.length()
            )));
        }
        if lat.dim() > MAX_DIM {
            return Err(Error::Config(format!("dimension {} exceeds {MAX_DIM}", lat.dim())));
        }
        Ok(())
    }
}

/// Viscous decay rates `ν·4π²|α|²/l²`, one per lattice site.
pub fn viscous_rates(lat: &Lattice, nu: f64) -> Vec<f64> {
    let c = nu * 4.0 * PI * PI / (lat.length() * lat.length());
    (0..lat.len()).map(|k| c * lat.norm_sq(k) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    NavierStokes,
    Burgers,
    Off,
}

/// Time profile of a forcing coefficient `c_i(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coefficient {
    Constant { value: f64 },
    /// `offset + amplitude·sin(omega·t + phase)`.
    Sinusoid {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Piecewise linear through `(times, values)`, constant outside.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl Coefficient {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Coefficient::Constant { value } => *value,
            Coefficient::Sinusoid { amplitude, omega, phase, offset } => {
                offset + amplitude * (omega * t + phase).sin()
            }
            Coefficient::Table { times, values } => {
                if t <= times[0] {
                    return values[0];
                }
                let last = times.len() - 1;
                if t >= times[last] {
                    return values[last];
                }
                let j = times.partition_point(|&x| x <= t);
                let (t0, t1) = (times[j - 1], times[j]);
                let th = (t - t0) / (t1 - t0);
                values[j - 1] * (1.0 - th) + values[j] * th
            }
        }
    }

    fn validate(&self, path: &str, errs: &mut Vec<String>) {
        match self {
            Coefficient::Constant { value } if !value.is_finite() => {
                errs.push(format!("{path}.value must be finite"))
            }
            Coefficient::Sinusoid { amplitude, omega, phase, offset }
                if ![amplitude, omega, phase, offset].iter().all(|x| x.is_finite()) =>
            {
                errs.push(format!("{path}: sinusoid parameters must be finite"))
            }
            Coefficient::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    errs.push(format!("{path}: times and values must be non-empty and equally long"));
                } else if times.windows(2).any(|w| w[1] <= w[0]) {
                    errs.push(format!("{path}.times must be strictly increasing"));
                }
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingKind {
    None,
    StaticOrthant,
    DynamicCounterexample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSpec {
    pub kind: ForcingKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// One coefficient per component, or a single one shared by all.
    #[serde(default)]
    pub coefficients: Vec<Coefficient>,
}

fn default_epsilon() -> f64 {
    0.1
}

impl Default for ForcingSpec {
    fn default() -> Self {
        ForcingSpec::none()
    }
}

impl ForcingSpec {
    pub fn none() -> Self {
        ForcingSpec { kind: ForcingKind::None, epsilon: default_epsilon(), coefficients: vec![] }
    }

    pub fn counterexample(epsilon: f64, c: f64) -> Self {
        ForcingSpec {
            kind: ForcingKind::DynamicCounterexample,
            epsilon,
            coefficients: vec![Coefficient::Constant { value: c }],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut errs = Vec::new();
        if self.kind != ForcingKind::None {
            if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
                errs.push(format!("forcing.epsilon must be > 0, got {}", self.epsilon));
            }
            if self.coefficients.len() != 1 && self.coefficients.len() != n {
                errs.push(format!(
                    "forcing.coefficients needs 1 or {n} entries, got {}",
                    self.coefficients.len()
                ));
            }
        }
        for (i, c) in self.coefficients.iter().enumerate() {
            c.validate(&format!("forcing.coefficients[{i}]"), &mut errs);
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    fn coefficient(&self, i: usize, t: f64) -> f64 {
        match self.coefficients.len() {
            0 => 0.0,
            1 => self.coefficients[0].eval(t),
            _ => self.coefficients[i].eval(t),
        }
    }

    /// The orthant forcing `c_i(t)/(1+|α|^{(3+ε)/2})` on `α_j ≥ 0`, zero elsewhere.
    /// Zero for `kind = none`.
    pub fn static_field(&self, lat: &Lattice, t: f64) -> ModeField {
        let mut out = ModeField::zeros(lat);
        out.solenoidal = false;
        if self.kind == ForcingKind::None {
            return out;
        }
        let p = (3.0 + self.epsilon) / 2.0;
        for i in 0..lat.dim() {
            let c = self.coefficient(i, t);
            let comp = out.component_mut(i);
            for (k, z) in comp.iter_mut().enumerate() {
                if lat.coords(k).iter().all(|&a| a >= 0) {
                    *z = Complex64::new(c / (1.0 + lat.norm(k).powf(p)), 0.0);
                }
            }
        }
        out
    }
}

/// `T_{iα} = Σ_j Σ_γ γ_j v_{j(α−γ)} v_{iγ}`, component-major.
pub fn transport_sum_with(exec: Exec, v: &ModeField) -> Result<Vec<Complex64>> {
    let lat = v.lattice();
    let n = lat.dim();
    let l = lat.len();
    if n > MAX_DIM {
        return Err(Error::Config(format!("dimension {n} exceeds {MAX_DIM}")));
    }
    let data = v.data();
    let per_site: Vec<[Complex64; MAX_DIM]> = exec.map(l, |k| {
        let mut acc = [Complex64::new(0.0, 0.0); MAX_DIM];
        lat.for_each_pair(k, |g, d| {
            let gc = lat.coords(g);
            let mut w = Complex64::new(0.0, 0.0);
            for j in 0..n {
                if gc[j] != 0 {
                    w += data[j * l + d] * gc[j] as f64;
                }
            }
            if w.re != 0.0 || w.im != 0.0 {
                for i in 0..n {
                    acc[i] += w * data[i * l + g];
                }
            }
        });
        acc
    });
    let mut out = vec![Complex64::new(0.0, 0.0); n * l];
    for (k, acc) in per_site.iter().enumerate() {
        for i in 0..n {
            out[i * l + k] = acc[i];
        }
    }
    Ok(out)
}

/// The quadratic term `N(v)` alone, as a field.
pub fn nonlinear_term_with(exec: Exec, v: &ModeField, kind: Nonlinearity) -> Result<ModeField> {
    let lat = v.lattice();
    let data = match kind {
        Nonlinearity::Off => vec![Complex64::new(0.0, 0.0); lat.dim() * lat.len()],
        Nonlinearity::Burgers => transport_sum_with(exec, v)?,
        Nonlinearity::NavierStokes => {
            if lat.dim() < 2 {
                return Err(Error::Config("Navier-Stokes needs dimension n >= 2".into()));
            }
            let mut t = transport_sum_with(exec, v)?;
            let c = Complex64::new(0.0, -2.0 * PI / lat.length());
            t.iter_mut().for_each(|z| *z *= c);
            project_in_place(lat, &mut t);
            t
        }
    };
    let mut out = ModeField::from_data(lat, data)?;
    out.real_valued = v.real_valued && kind != Nonlinearity::Burgers;
    out.solenoidal = kind != Nonlinearity::Burgers;
    Ok(out)
}

pub fn nonlinear_term(v: &ModeField, kind: Nonlinearity) -> Result<ModeField> {
    nonlinear_term_with(Exec::default(), v, kind)
}

fn linear_plus(
    v: &ModeField,
    rates: &[f64],
    lin_coef: f64,
    nonlin: &ModeField,
    nonlin_coef: f64,
    damping: f64,
) -> ModeField {
    let lat = v.lattice();
    let l = lat.len();
    let mut out = nonlin.clone();
    for (idx, (o, x)) in out.data_mut().iter_mut().zip(v.data()).enumerate() {
        let decay = lin_coef * rates[idx % l] + damping;
        *o = *o * nonlin_coef - *x * decay;
    }
    out
}

/// Navier-Stokes right-hand side with optional orthant forcing evaluated at `t`.
/// For `kind = dynamic_counterexample` only the static part is included here;
/// see [`dynamic_forcing_update`].
pub fn ns_rhs(v: &ModeField, p: &FluidParams, f: &ForcingSpec, t: f64) -> Result<ModeField> {
    ns_rhs_with(Exec::default(), v, p, f, t)
}

pub fn ns_rhs_with(
    exec: Exec,
    v: &ModeField,
    p: &FluidParams,
    f: &ForcingSpec,
    t: f64,
) -> Result<ModeField> {
    let lat = v.lattice();
    p.check(lat)?;
    let nl = nonlinear_term_with(exec, v, Nonlinearity::NavierStokes)?;
    let mut out = linear_plus(v, &viscous_rates(lat, p.nu), 1.0, &nl, 1.0, 0.0);
    out.real_valued = v.real_valued;
    out.solenoidal = true;
    if f.kind != ForcingKind::None {
        out.add_scaled(1.0, &f.static_field(lat, t))?;
        out.solenoidal = false;
    }
    Ok(out)
}

pub fn burgers_rhs(u: &ModeField, p: &FluidParams) -> Result<ModeField> {
    let lat = u.lattice();
    p.check(lat)?;
    let nl = nonlinear_term(u, Nonlinearity::Burgers)?;
    Ok(linear_plus(u, &viscous_rates(lat, p.nu), 1.0, &nl, 1.0, 0.0))
}

/// `dv/dt = −ν4π²|α|²/l²·v + N(v)` for the chosen nonlinearity, unforced.
pub fn base_rhs(v: &ModeField, p: &FluidParams, kind: Nonlinearity) -> Result<ModeField> {
    let lat = v.lattice();
    p.check(lat)?;
    let nl = nonlinear_term(v, kind)?;
    Ok(linear_plus(v, &viscous_rates(lat, p.nu), 1.0, &nl, 1.0, 0.0))
}

/// Damped comparison dynamics in chart time:
/// `du/dσ = ρμ_τ1·(−ν4π²|α|²/l²)u + ρλμ_τ2·N(u) − μu`.
pub fn damped_rhs(
    u: &ModeField,
    chart: &DilatationChart,
    sigma: f64,
    p: &FluidParams,
    kind: Nonlinearity,
) -> Result<ModeField> {
    let lat = u.lattice();
    p.check(lat)?;
    let m = chart.mu_at(sigma)?;
    let nl = nonlinear_term(u, kind)?;
    let mut out = linear_plus(
        u,
        &viscous_rates(lat, p.nu),
        chart.rho * m.mu_tau1,
        &nl,
        chart.rho * chart.lambda * m.mu_tau2,
        m.mu,
    );
    out.real_valued = u.real_valued && kind != Nonlinearity::Burgers;
    out.solenoidal = u.solenoidal && kind != Nonlinearity::Burgers;
    Ok(out)
}

/// Forcing for one Euler step of the counterexample run. On the all-negative
/// orthant it cancels `rhs_parts` and the current value so the updated mode is
/// exactly zero; on the all-nonnegative orthant it is the static profile;
/// elsewhere zero.
pub fn dynamic_forcing_update(
    v: &ModeField,
    rhs_parts: &ModeField,
    spec: &ForcingSpec,
    dt: f64,
    t: f64,
) -> Result<ModeField> {
    if spec.kind != ForcingKind::DynamicCounterexample {
        return Err(Error::Config("dynamic forcing needs kind = dynamic_counterexample".into()));
    }
    let lat = v.lattice();
    lat.ensure_same(rhs_parts.lattice())?;
    let mut f = spec.static_field(lat, t);
    let l = lat.len();
    let negative: Vec<usize> =
        (0..l).filter(|&k| lat.coords(k).iter().all(|&a| a < 0)).collect();
    for i in 0..lat.dim() {
        for &k in &negative {
            *f.at_mut(i, k) = -(v.at(i, k) / dt) - rhs_parts.at(i, k);
        }
    }
    f.real_valued = false;
    Ok(f)
}

/// One explicit Euler step of the forced counterexample system.
pub fn counterexample_euler_step(
    v: &ModeField,
    p: &FluidParams,
    spec: &ForcingSpec,
    t: f64,
    dt: f64,
) -> Result<ModeField> {
    let parts = ns_rhs(v, p, &ForcingSpec::none(), t)?;
    let f = dynamic_forcing_update(v, &parts, spec, dt, t)?;
    let mut out = v.clone();
    for ((o, r), g) in out.data_mut().iter_mut().zip(parts.data()).zip(f.data()) {
        *o += (*r + *g) * dt;
    }
    out.real_valued = false;
    out.solenoidal = false;
    Ok(out)
}

/// Dense frozen nonlinearity matrix `E(v)` with `E(v)·v = N(v)`:
/// `E[(i,α),(j,γ)] = c·(α_j−γ_j)·v_{i(α−γ)}`, followed by the Leray projector
/// (and `c = −2πi/l`) for Navier-Stokes, `c = 1` for Burgers.
pub fn euler_matrix(v: &ModeField, kind: Nonlinearity) -> Result<DMatrix<Complex64>> {
    let lat = v.lattice();
    let n = lat.dim();
    let l = lat.len();
    let rows = n * l;
    let mut m = DMatrix::<Complex64>::zeros(rows, rows);
    if kind == Nonlinearity::Off {
        return Ok(m);
    }
    if kind == Nonlinearity::NavierStokes && n < 2 {
        return Err(Error::Config("Navier-Stokes needs dimension n >= 2".into()));
    }
    let c = match kind {
        Nonlinearity::NavierStokes => Complex64::new(0.0, -2.0 * PI / lat.length()),
        _ => Complex64::new(1.0, 0.0),
    };
    for a in 0..l {
        lat.for_each_pair(a, |g, d| {
            // g plays γ, d = α−γ
            let dc = lat.coords(d);
            for i in 0..n {
                let vi = v.at(i, d);
                if vi == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    if dc[j] != 0 {
                        m[(i * l + a, j * l + g)] += c * vi * dc[j] as f64;
                    }
                }
            }
        });
    }
    if kind == Nonlinearity::NavierStokes {
        let mut col = vec![Complex64::new(0.0, 0.0); rows];
        for cidx in 0..rows {
            for r in 0..rows {
                col[r] = m[(r, cidx)];
            }
            project_in_place(lat, &mut col);
            for r in 0..rows {
                m[(r, cidx)] = col[r];
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::DecayEnvelope;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Independent evaluator looping over every (i, j, α, γ).
    fn brute_transport(v: &ModeField) -> Vec<Complex64> {
        let lat = v.lattice();
        let n = lat.dim();
        let l = lat.len();
        let mut out = vec![c(0.0, 0.0); n * l];
        for i in 0..n {
            for a in 0..l {
                let ac = lat.coords(a).to_vec();
                for j in 0..n {
                    for g in 0..l {
                        let gc = lat.coords(g);
                        let diff: Vec<i64> = ac.iter().zip(gc).map(|(x, y)| x - y).collect();
                        if let Some(d) = lat.index_of(&diff) {
                            out[i * l + a] += v.at(j, d) * gc[j] as f64 * v.at(i, g);
                        }
                    }
                }
            }
        }
        out
    }

    fn brute_ns(v: &ModeField, nu: f64) -> Vec<Complex64> {
        let lat = v.lattice();
        let n = lat.dim();
        let l = lat.len();
        let t = brute_transport(v);
        let mut out = vec![c(0.0, 0.0); n * l];
        for a in 0..l {
            let ac = lat.coords(a);
            let nsq = lat.norm_sq(a) as f64;
            let adv: Vec<Complex64> =
                (0..n).map(|i| c(0.0, 2.0 * PI / lat.length()) * t[i * l + a]).collect();
            for i in 0..n {
                let mut proj = adv[i];
                if nsq > 0.0 {
                    for k in 0..n {
                        proj -= adv[k] * (ac[i] * ac[k]) as f64 / nsq;
                    }
                }
                let rate = nu * 4.0 * PI * PI * nsq / (lat.length() * lat.length());
                out[i * l + a] = -rate * v.at(i, a) - proj;
            }
        }
        out
    }

    fn random_field(n: usize, m: i64, seed: u64) -> ModeField {
        let lat = Lattice::new(n, m, 1.0).unwrap();
        let env = DecayEnvelope::new(1.0, 2.0).unwrap();
        ModeField::from_envelope(&lat, &env, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_field_gives_zero_rhs() {
        let lat = Lattice::new(3, 2, 1.0).unwrap();
        let p = FluidParams::for_lattice(&lat, 0.3).unwrap();
        let z = ModeField::zeros(&lat);
        assert!(ns_rhs(&z, &p, &ForcingSpec::none(), 0.0).unwrap().is_zero());
        assert!(burgers_rhs(&z, &p).unwrap().is_zero());
    }

    #[test]
    fn off_lattice_products_are_dropped() {
        // v at α = (1,1) only: every product lands at (2,2), outside M = 1
        let lat = Lattice::new(2, 1, 1.0).unwrap();
        let mut v = ModeField::zeros(&lat);
        v.set(0, &[1, 1], c(1.0, 0.0)).unwrap();
        v.set(1, &[1, 1], c(-1.0, 0.0)).unwrap();
        let p = FluidParams::for_lattice(&lat, 0.0).unwrap();
        assert!(ns_rhs(&v, &p, &ForcingSpec::none(), 0.0).unwrap().is_zero());
    }

    #[test]
    fn ns_matches_brute_force_single_seed() {
        let lat = Lattice::new(3, 1, 1.0).unwrap();
        let mut v = ModeField::zeros(&lat);
        v.set(0, &[0, 1, 0], c(1.0, 0.0)).unwrap();
        v.set(0, &[0, -1, 0], c(1.0, 0.0)).unwrap();
        v.set(1, &[1, 0, 0], c(0.0, 1.0)).unwrap();
        v.set(1, &[-1, 0, 0], c(0.0, -1.0)).unwrap();
        let p = FluidParams::for_lattice(&lat, 0.2).unwrap();
        let got = ns_rhs(&v, &p, &ForcingSpec::none(), 0.0).unwrap();
        let want = brute_ns(&v, 0.2);
        assert!(max_abs_diff(got.data(), &want) < 1e-13);
        assert!(got.l2_norm() > 0.0);
    }

    #[test]
    fn ns_matches_brute_force_random() {
        let v = random_field(3, 1, 3).leray_project().unwrap();
        let p = FluidParams::for_lattice(v.lattice(), 0.05).unwrap();
        let got = ns_rhs(&v, &p, &ForcingSpec::none(), 0.0).unwrap();
        assert!(max_abs_diff(got.data(), &brute_ns(&v, 0.05)) < 1e-12);
        assert!(got.divergence_defect() <= 1e-12 * got.l2_norm());
        assert!(got.reality_defect() < 1e-13);
    }

    #[test]
    fn burgers_fixture_n1_m2() {
        let lat = Lattice::new(1, 2, 1.0).unwrap();
        let data: Vec<Complex64> =
            (0..5).map(|k| c(1.0 / (1.0 + (k as f64 - 2.0).abs().powi(3)), 0.0)).collect();
        let u = ModeField::from_data(&lat, data.clone()).unwrap();
        let p = FluidParams::for_lattice(&lat, 0.0).unwrap();
        let got = burgers_rhs(&u, &p).unwrap();
        // direct double loop: out_a = Σ_k u_{a−k} k u_k
        for a in -2i64..=2 {
            let mut want = 0.0;
            for k in -2i64..=2 {
                let d = a - k;
                if d.abs() <= 2 {
                    want += data[(d + 2) as usize].re * k as f64 * data[(k + 2) as usize].re;
                }
            }
            assert!((got.get(0, &[a]).unwrap().re - want).abs() < 1e-15);
        }
        // out_1 = u_2·(−1)·u_{−1} + u_0·1·u_1 + u_{−1}·2·u_2 = −1/18 + 1/2 + 1/9
        assert!((got.get(0, &[1]).unwrap().re - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn burgers_zero_mode_only_is_inert() {
        let lat = Lattice::new(2, 2, 1.0).unwrap();
        let mut u = ModeField::zeros(&lat);
        u.set(0, &[0, 0], c(3.0, 0.0)).unwrap();
        u.set(1, &[0, 0], c(-1.5, 0.0)).unwrap();
        let p = FluidParams::for_lattice(&lat, 0.7).unwrap();
        assert!(burgers_rhs(&u, &p).unwrap().is_zero());
    }

    #[test]
    fn transport_seq_par_identical() {
        let v = random_field(3, 2, 9);
        let a = transport_sum_with(Exec::Seq, &v).unwrap();
        let b = transport_sum_with(Exec::Par, &v).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn damped_rhs_single_mode_at_origin() {
        let lat = Lattice::new(2, 2, 1.0).unwrap();
        let mut u = ModeField::zeros(&lat);
        // single mode: every product lands at 2α, off the lattice for α=(2,0)
        u.set(1, &[2, 0], c(0.3, 0.1)).unwrap();
        let (rho, nu, t0) = (0.25, 0.1, 1.5);
        let chart = DilatationChart::global(t0).with_rho(rho);
        let p = FluidParams::for_lattice(&lat, nu).unwrap();
        let got = damped_rhs(&u, &chart, 0.0, &p, Nonlinearity::NavierStokes).unwrap();
        let coef = -rho * nu * 4.0 * PI * PI * 4.0 - 1.0 / (1.0 + t0);
        let want = c(0.3, 0.1) * coef;
        assert!((got.get(1, &[2, 0]).unwrap() - want).norm() < 1e-14);
        assert_eq!(got.l2_norm(), want.norm());
    }

    #[test]
    fn damped_rhs_is_exponential_decay_without_spatial_terms() {
        let u = random_field(2, 2, 4);
        let chart = DilatationChart::localized(0.0).with_rho(1.0);
        // ρ·(viscous + nonlinear) vanishes when both are switched off
        let p = FluidParams::for_lattice(u.lattice(), 0.0).unwrap();
        let got = damped_rhs(&u, &chart, 0.4, &p, Nonlinearity::Off).unwrap();
        let mu = chart.mu_at(0.4).unwrap().mu;
        assert!(got.max_diff(&u.scaled(-mu)) < 1e-15);
    }

    #[test]
    fn forcing_profile_and_counterexample_step() {
        let lat = Lattice::new(3, 2, 1.0).unwrap();
        let spec = ForcingSpec::counterexample(0.1, 1.0);
        spec.validate(3).unwrap();
        let f0 = spec.static_field(&lat, 0.0);
        assert_eq!(f0.get(0, &[0, 0, 0]).unwrap(), c(1.0, 0.0));
        let want = 1.0 / (1.0 + 3f64.sqrt().powf(1.55));
        assert!((f0.get(2, &[1, 1, 1]).unwrap().re - want).abs() < 1e-15);
        assert_eq!(f0.get(0, &[1, -1, 0]).unwrap(), c(0.0, 0.0));

        let p = FluidParams::for_lattice(&lat, 0.0).unwrap();
        let dt = 0.05;
        let v1 = counterexample_euler_step(&ModeField::zeros(&lat), &p, &spec, 0.0, dt).unwrap();
        assert!(v1.max_diff(&f0.scaled(dt)) == 0.0);
        let mut v = v1;
        for step in 1..6 {
            v = counterexample_euler_step(&v, &p, &spec, step as f64 * dt, dt).unwrap();
            for k in 0..lat.len() {
                if lat.coords(k).iter().all(|&a| a < 0) {
                    for i in 0..3 {
                        assert_eq!(v.at(i, k), c(0.0, 0.0));
                    }
                }
            }
        }
        assert!(v.l2_norm() > 0.0);
    }

    #[test]
    fn coefficient_table_interpolates() {
        let tab = Coefficient::Table { times: vec![0.0, 1.0, 3.0], values: vec![0.0, 2.0, -2.0] };
        assert_eq!(tab.eval(-1.0), 0.0);
        assert_eq!(tab.eval(0.5), 1.0);
        assert_eq!(tab.eval(2.0), 0.0);
        assert_eq!(tab.eval(5.0), -2.0);
        let s = Coefficient::Sinusoid { amplitude: 2.0, omega: PI, phase: 0.0, offset: 1.0 };
        assert!((s.eval(0.5) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn euler_matrix_reproduces_nonlinearity() {
        for kind in [Nonlinearity::NavierStokes, Nonlinearity::Burgers] {
            let v = random_field(2, 1, 11).leray_project().unwrap();
            let m = euler_matrix(&v, kind).unwrap();
            let x = nalgebra::DVector::from_column_slice(v.data());
            let y = &m * x;
            let want = nonlinear_term(&v, kind).unwrap();
            assert!(max_abs_diff(y.as_slice(), want.data()) < 1e-13, "{kind:?}");
        }
    }

    #[test]
    fn viscosity_lowers_energy_rate() {
        let v = random_field(3, 1, 5).leray_project().unwrap();
        let rate = |nu: f64| {
            let p = FluidParams::for_lattice(v.lattice(), nu).unwrap();
            let r = ns_rhs(&v, &p, &ForcingSpec::none(), 0.0).unwrap();
            v.data().iter().zip(r.data()).map(|(a, b)| (a.conj() * b).re).sum::<f64>()
        };
        assert!(rate(0.2) < rate(0.1));
    }
}
