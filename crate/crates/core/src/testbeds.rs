//! Closed-form testbeds: the scalar ODE `ẋ = λx²` under the time-dilatation
//! transform, and the Katz-Pavlovic shell model.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::NormSeries;
use crate::error::{Error, Result};
use crate::lattice::{Lattice, ModeField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarOdeConfig {
    pub x0: f64,
    pub lambda: f64,
    #[serde(default)]
    pub t0: f64,
}

impl ScalarOdeConfig {
    pub fn new(x0: f64, lambda: f64, t0: f64) -> Result<Self> {
        let c = ScalarOdeConfig { x0, lambda, t0 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.x0 == 0.0 || !self.x0.is_finite() {
            errs.push(format!("ode.x0 must be finite and nonzero, got {}", self.x0));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            errs.push(format!("ode.lambda must be > 0, got {}", self.lambda));
        }
        if !(self.t0 >= 0.0) {
            errs.push(format!("ode.t0 must be >= 0, got {}", self.t0));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// `1/(λx0)` for `x0 > 0`.
    pub fn blowup_time(&self) -> Option<f64> {
        (self.x0 > 0.0).then(|| 1.0 / (self.lambda * self.x0))
    }

    pub fn rhs(&self, x: f64) -> f64 {
        self.lambda * x * x
    }
}

/// `x(t) = x0/(1−λx0t)`.
pub fn ode_analytic(cfg: &ScalarOdeConfig, t: f64) -> Result<f64> {
    if let Some(tb) = cfg.blowup_time() {
        if t >= tb {
            return Err(Error::Domain(format!("t = {t} is at or past the blow-up time {tb}")));
        }
    }
    Ok(cfg.x0 / (1.0 - cfg.lambda * cfg.x0 * t))
}

fn chart_time(cfg: &ScalarOdeConfig, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("s must be >= 0, got {s}")));
    }
    Ok(cfg.t0 + s / (1.0 + s * s).sqrt())
}

/// `y(s) = x(t(s))/(λ(1+t(s)))`, `t(s) = t0 + s/√(1+s²)`. For `t0 = 0`,
/// `λ = x0 = 1` this is `1/((1+t)(1−t)) = 1+s²`.
pub fn ode_transformed_analytic(cfg: &ScalarOdeConfig, s: f64) -> Result<f64> {
    let t = chart_time(cfg, s)?;
    Ok(ode_analytic(cfg, t)? / (cfg.lambda * (1.0 + t)))
}

/// `dy/ds` by the chain rule applied to the closed form.
pub fn ode_transformed_derivative(cfg: &ScalarOdeConfig, s: f64) -> Result<f64> {
    let t = chart_time(cfg, s)?;
    let x = ode_analytic(cfg, t)?;
    let w = (1.0 + s * s).powf(-1.5);
    Ok(w * (cfg.lambda * x * x * (1.0 + t) - x) / (cfg.lambda * (1.0 + t) * (1.0 + t)))
}

/// `ẏ = w·(λ²(1+t)·y² − y/(1+t))`, `w = (1−(t−t0)²)^{3/2} = (1+s²)^{−3/2}`.
pub fn ode_transformed_rhs(cfg: &ScalarOdeConfig, y: f64, s: f64) -> Result<f64> {
    let t = chart_time(cfg, s)?;
    let w = (1.0 + s * s).powf(-1.5);
    Ok(w * (cfg.lambda * cfg.lambda * (1.0 + t) * y * y - y / (1.0 + t)))
}

pub fn rk4_scalar<F: Fn(f64, f64) -> f64>(f: &F, t: f64, x: f64, h: f64) -> f64 {
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, x + 0.5 * h * k1);
    let k3 = f(t + 0.5 * h, x + 0.5 * h * k2);
    let k4 = f(t + h, x + h * k3);
    x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// RK4 trajectory of `ẋ = λx²` sampled at every step up to `t_end`.
pub fn ode_rk4(cfg: &ScalarOdeConfig, dt: f64, t_end: f64) -> Vec<(f64, f64)> {
    let f = |_t: f64, x: f64| cfg.rhs(x);
    let steps = (t_end / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = cfg.x0;
    out.push((0.0, x));
    for k in 0..steps {
        x = rk4_scalar(&f, k as f64 * dt, x, dt);
        out.push(((k + 1) as f64 * dt, x));
        if !x.is_finite() {
            break;
        }
    }
    out
}

/// Time at which the RK4 solution first exceeds `threshold`, by linear
/// interpolation between the bracketing steps (the step time if it jumps to
/// a non-finite value).
pub fn ode_crossing_time(cfg: &ScalarOdeConfig, dt: f64, threshold: f64, t_max: f64) -> Option<f64> {
    let f = |_t: f64, x: f64| cfg.rhs(x);
    let mut x = cfg.x0;
    let mut t = 0.0;
    let mut k = 0usize;
    while t < t_max {
        let next = rk4_scalar(&f, t, x, dt);
        let tn = (k + 1) as f64 * dt;
        if !next.is_finite() {
            return Some(tn);
        }
        if next.abs() > threshold {
            let th = (threshold - x.abs()) / (next.abs() - x.abs());
            return Some(t + th * dt);
        }
        x = next;
        t = tn;
        k += 1;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupEstimate {
    pub coarse: f64,
    pub fine: f64,
    /// First-order Richardson extrapolation `2·fine − coarse`.
    pub extrapolated: f64,
}

/// Crossing times of `|x| = threshold` at `dt` and `dt/2`, extrapolated.
pub fn ode_blowup_estimate(cfg: &ScalarOdeConfig, dt: f64, threshold: f64) -> Result<BlowupEstimate> {
    let t_max = cfg.blowup_time().map_or(1e6, |t| 2.0 * t);
    let coarse = ode_crossing_time(cfg, dt, threshold, t_max);
    let fine = ode_crossing_time(cfg, dt / 2.0, threshold, t_max);
    match (coarse, fine) {
        (Some(c), Some(f)) => Ok(BlowupEstimate { coarse: c, fine: f, extrapolated: 2.0 * f - c }),
        _ => Err(Error::Degenerate(format!("no threshold crossing before t = {t_max}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellConfig {
    /// Lacunarity `μ` of the model.
    pub mu: f64,
    /// Dissipation exponent.
    pub alpha: f64,
    /// Sign of the dissipation term; `−1` is dissipative.
    #[serde(default = "default_s_visc")]
    pub s_visc: f64,
    pub m_min: i64,
    pub m_max: i64,
    /// `K_m(0)` for `m = m_min..=m_max`; missing trailing entries are zero.
    pub initial: Vec<f64>,
}

fn default_s_visc() -> f64 {
    -1.0
}

impl ShellConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.mu > 0.0) {
            errs.push(format!("kp.mu must be > 0, got {}", self.mu));
        }
        if self.s_visc != 1.0 && self.s_visc != -1.0 {
            errs.push(format!("kp.s_visc must be -1 or +1, got {}", self.s_visc));
        }
        if self.m_max < self.m_min {
            errs.push("kp.m_max must be >= kp.m_min".into());
        }
        if self.initial.len() as i64 > self.m_max - self.m_min + 1 {
            errs.push("kp.initial has more entries than shells".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn shells(&self) -> usize {
        (self.m_max - self.m_min + 1) as usize
    }

    pub fn initial_state(&self) -> ShellState {
        let mut amps = self.initial.clone();
        amps.resize(self.shells(), 0.0);
        ShellState { m_min: self.m_min, amps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellState {
    pub m_min: i64,
    pub amps: Vec<f64>,
}

impl ShellState {
    pub fn l2_norm(&self) -> f64 {
        self.amps.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn axpy(&self, h: f64, d: &ShellState) -> ShellState {
        ShellState {
            m_min: self.m_min,
            amps: self.amps.iter().zip(&d.amps).map(|(a, b)| a + h * b).collect(),
        }
    }
}

/// `dK_m/dt = s_visc·μ^{2mα}K_m + μ^{m−1}K²_{m−1} − μ^m·K_m·K_{m−1}`, with
/// `K_{m_min−1} = 0`.
pub fn kp_rhs(state: &ShellState, cfg: &ShellConfig) -> ShellState {
    let amps = (0..state.amps.len())
        .map(|idx| {
            let m = (state.m_min + idx as i64) as f64;
            let k = state.amps[idx];
            let prev = if idx == 0 { 0.0 } else { state.amps[idx - 1] };
            cfg.s_visc * cfg.mu.powf(2.0 * m * cfg.alpha) * k + cfg.mu.powf(m - 1.0) * prev * prev
                - cfg.mu.powf(m) * k * prev
        })
        .collect();
    ShellState { m_min: state.m_min, amps }
}

pub fn kp_rk4_step(state: &ShellState, cfg: &ShellConfig, dt: f64) -> ShellState {
    let k1 = kp_rhs(state, cfg);
    let k2 = kp_rhs(&state.axpy(0.5 * dt, &k1), cfg);
    let k3 = kp_rhs(&state.axpy(0.5 * dt, &k2), cfg);
    let k4 = kp_rhs(&state.axpy(dt, &k3), cfg);
    let mut out = state.clone();
    for i in 0..out.amps.len() {
        out.amps[i] += dt / 6.0 * (k1.amps[i] + 2.0 * k2.amps[i] + 2.0 * k3.amps[i] + k4.amps[i]);
    }
    out
}

/// RK4 run recording the ℓ² norm every `cadence` steps; stops at the first
/// non-finite state and marks it in the series.
pub fn kp_run(cfg: &ShellConfig, dt: f64, steps: usize, cadence: usize) -> Result<(NormSeries, ShellState)> {
    cfg.validate()?;
    let cadence = cadence.max(1);
    let mut series = NormSeries::new(&[]);
    let mut state = cfg.initial_state();
    let sup = |s: &ShellState| s.amps.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    series.record_values(0.0, state.l2_norm(), vec![], sup(&state))?;
    for k in 1..=steps {
        let next = kp_rk4_step(&state, cfg, dt);
        let t = k as f64 * dt;
        if next.amps.iter().any(|a| !a.is_finite()) {
            series.nonfinite_at = Some(t);
            break;
        }
        state = next;
        if k % cadence == 0 || k == steps {
            series.record_values(t, state.l2_norm(), vec![], sup(&state))?;
        }
    }
    Ok((series, state))
}

/// Place shell `m` on the lattice diagonal `α = (m−m_min)·(1,…,1)` of
/// component 0, mirrored for reality.
pub fn kp_to_lattice(state: &ShellState, lattice: &Lattice) -> Result<ModeField> {
    let mut v = ModeField::zeros(lattice);
    let n = lattice.dim();
    for (j, &k) in state.amps.iter().enumerate() {
        let j = j as i64;
        if j > lattice.trunc() {
            if k != 0.0 {
                return Err(Error::Config(format!(
                    "shell offset {j} does not fit a lattice with M = {}",
                    lattice.trunc()
                )));
            }
            continue;
        }
        v.set(0, &vec![j; n], Complex64::new(k, 0.0))?;
        v.set(0, &vec![-j; n], Complex64::new(k, 0.0))?;
    }
    v.real_valued = true;
    v.solenoidal = false;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ode_values() {
        let c = ScalarOdeConfig::new(1.0, 1.0, 0.0).unwrap();
        assert_eq!(ode_analytic(&c, 0.0).unwrap(), 1.0);
        assert_eq!(ode_analytic(&c, 0.5).unwrap(), 2.0);
        assert!(ode_analytic(&c, 1.0).is_err());
        let c2 = ScalarOdeConfig::new(1.0, 2.0, 0.0).unwrap();
        let mut prev = 0.0;
        for k in 1..50 {
            let v = ode_analytic(&c2, 0.5 - 0.5f64.powi(k)).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(prev > 1e14);
    }

    #[test]
    fn transformed_values() {
        let c = ScalarOdeConfig::new(1.0, 1.0, 0.0).unwrap();
        assert_eq!(ode_transformed_analytic(&c, 0.0).unwrap(), 1.0);
        assert!((ode_transformed_analytic(&c, 1.0).unwrap() - 2.0).abs() < 1e-14);
        let ratio = ode_transformed_analytic(&c, 1e4).unwrap() / 1e8;
        assert!((ratio - 1.0).abs() < 1e-6);
        assert_eq!(ode_transformed_rhs(&c, 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn transformed_rhs_matches_central_differences() {
        for (x0, lambda, t0) in [(1.0, 1.0, 0.0), (1.0, 0.5, 0.0), (0.2, 1.5, 0.3)] {
            let c = ScalarOdeConfig::new(x0, lambda, t0).unwrap();
            for s in [0.1, 0.7, 2.0, 4.5] {
                let h = 1e-4;
                let fd = (ode_transformed_analytic(&c, s + h).unwrap()
                    - ode_transformed_analytic(&c, s - h).unwrap())
                    / (2.0 * h);
                let y = ode_transformed_analytic(&c, s).unwrap();
                let rhs = ode_transformed_rhs(&c, y, s).unwrap();
                assert!((fd - rhs).abs() < 1e-6 * (1.0 + rhs.abs()), "{x0} {lambda} {t0} {s}");
            }
        }
    }

    #[test]
    fn printed_lambda_form_misses_a_factor() {
        // with λ instead of λ² in front of y², the residual is not zero for λ ≠ 1
        let c = ScalarOdeConfig::new(1.0, 0.5, 0.0).unwrap();
        let s = 1.0;
        let t = s / (1.0f64 + s * s).sqrt();
        let w = (1.0f64 + s * s).powf(-1.5);
        let y = ode_transformed_analytic(&c, s).unwrap();
        let printed = w * (c.lambda * (1.0 + t) * y * y - y / (1.0 + t));
        let exact = ode_transformed_derivative(&c, s).unwrap();
        assert!((printed - exact).abs() > 1e-2);
    }

    #[test]
    fn kp_hand_values() {
        let cfg = ShellConfig { mu: 2.0, alpha: 0.0, s_visc: -1.0, m_min: 0, m_max: 3, initial: vec![1.0] };
        let d = kp_rhs(&cfg.initial_state(), &cfg);
        assert_eq!(d.amps, vec![-1.0, 1.0, 0.0, 0.0]);
        let zero = ShellState { m_min: 0, amps: vec![0.0; 4] };
        assert!(kp_rhs(&zero, &cfg).amps.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn blowup_estimate_converges() {
        let c = ScalarOdeConfig::new(1.0, 1.0, 0.0).unwrap();
        let est = ode_blowup_estimate(&c, 1e-4, 1e8).unwrap();
        assert!((est.extrapolated - 1.0).abs() < 0.01);
    }

    #[test]
    fn lattice_diagonal_mapping() {
        let lat = Lattice::new(3, 3, 1.0).unwrap();
        let st = ShellState { m_min: 2, amps: vec![-3.0, 0.5, 0.25] };
        let v = kp_to_lattice(&st, &lat).unwrap();
        assert_eq!(v.get(0, &[1, 1, 1]).unwrap().re, 0.5);
        assert_eq!(v.get(0, &[-2, -2, -2]).unwrap().re, 0.25);
        assert!(v.reality_defect() == 0.0);
        let long = ShellState { m_min: 0, amps: vec![1.0; 5] };
        assert!(kp_to_lattice(&long, &lat).is_err());
    }
}
