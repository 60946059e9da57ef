//! Time-dilatation charts.
//!
//! A chart anchored at `t0` maps chart time `τ ∈ [t0, t0+1)` onto
//! `σ = (τ−t0)/√(1−(τ−t0)²) ∈ [0, ∞)` and rescales amplitudes by
//! `λ·D(τ)`, with `D = 1+τ` (global) or `D = 1+(τ−t0)` (localized).
//!
//! If `v` solves `dv/dτ = ρ·(L v + N(v))` with `L` linear and `N` quadratic,
//! the comparison function `u(σ) = v(τ(σ)) / (λ·D(τ(σ)))` solves
//!
//! ```text
//! du/dσ = ρ·μ_τ1·L u + ρ·λ·μ_τ2·N(u) − μ·u
//! ```
//!
//! with `w = (1−(τ−t0)²)^{3/2}`, `μ = w/D`, `μ_τ1 = w = D·μ`, `μ_τ2 = D²·μ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::ModeField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartMode {
    /// Amplitude factor `λ(1+τ)`.
    GlobalFactor,
    /// Amplitude factor `λ(1+(τ−t0))`.
    LocalizedFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DilatationChart {
    pub t0: f64,
    pub rho: f64,
    pub lambda: f64,
    pub mode: ChartMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuCoefficients {
    /// Damping coefficient.
    pub mu: f64,
    /// Viscosity coefficient `D·μ`.
    pub mu_tau1: f64,
    /// Nonlinearity coefficient `D²·μ`.
    pub mu_tau2: f64,
}

impl DilatationChart {
    pub fn new(t0: f64, rho: f64, lambda: f64, mode: ChartMode) -> Result<Self> {
        let chart = DilatationChart { t0, rho, lambda, mode };
        chart.validate()?;
        Ok(chart)
    }

    pub fn global(t0: f64) -> Self {
        DilatationChart { t0, rho: 1.0, lambda: 1.0, mode: ChartMode::GlobalFactor }
    }

    pub fn localized(t0: f64) -> Self {
        DilatationChart { t0, rho: 1.0, lambda: 1.0, mode: ChartMode::LocalizedFactor }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.t0 >= 0.0 && self.t0.is_finite()) {
            errs.push(format!("chart.t0 must be >= 0, got {}", self.t0));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            errs.push(format!("chart.rho must lie in (0, 1], got {}", self.rho));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            errs.push(format!("chart.lambda must be > 0, got {}", self.lambda));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    fn offset(&self, tau: f64) -> Result<f64> {
        let x = tau - self.t0;
        if !(0.0..1.0).contains(&x) {
            return Err(Error::Domain(format!(
                "τ−t0 = {x} is outside the chart domain [0, 1)"
            )));
        }
        Ok(x)
    }

    pub fn sigma_of_tau(&self, tau: f64) -> Result<f64> {
        let x = self.offset(tau)?;
        Ok(x / ((1.0 - x) * (1.0 + x)).sqrt())
    }

    pub fn tau_of_sigma(&self, sigma: f64) -> Result<f64> {
        if !(sigma >= 0.0) {
            return Err(Error::Domain(format!("σ must be >= 0, got {sigma}")));
        }
        let x = if sigma <= 1.0 {
            sigma / (1.0 + sigma * sigma).sqrt()
        } else {
            1.0 / (1.0 + (sigma * sigma).recip()).sqrt()
        };
        Ok(self.t0 + x)
    }

    pub fn dsigma_dtau(&self, tau: f64) -> Result<f64> {
        let x = self.offset(tau)?;
        Ok(((1.0 - x) * (1.0 + x)).powf(-1.5))
    }

    /// Amplitude factor `D(τ)` (without λ).
    pub fn factor(&self, tau: f64) -> f64 {
        match self.mode {
            ChartMode::GlobalFactor => 1.0 + tau,
            ChartMode::LocalizedFactor => 1.0 + (tau - self.t0),
        }
    }

    pub fn mu_at(&self, sigma: f64) -> Result<MuCoefficients> {
        let tau = self.tau_of_sigma(sigma)?;
        // 1 − (τ−t0)² = 1/(1+σ²) exactly on the chart.
        let w = (1.0 + sigma * sigma).powf(-1.5);
        let d = self.factor(tau);
        Ok(MuCoefficients { mu: w / d, mu_tau1: w, mu_tau2: w * d })
    }

    /// `u = v / (λ·D(τ))`.
    pub fn to_comparison(&self, v: &ModeField, tau: f64) -> Result<ModeField> {
        self.offset(tau)?;
        Ok(v.scaled(1.0 / (self.lambda * self.factor(tau))))
    }

    /// `v = λ·D(τ(σ))·u`.
    pub fn from_comparison(&self, u: &ModeField, sigma: f64) -> Result<ModeField> {
        let tau = self.tau_of_sigma(sigma)?;
        Ok(u.scaled(self.lambda * self.factor(tau)))
    }

    /// Closed-form `(inf μ, sup μ_τ2)` over `σ ∈ [0, 1/√3]`, i.e. over
    /// `τ−t0 ∈ [0, 1/2]`: `3√3/(12+8t0)` and `3/2+t0`. The localized chart
    /// behaves like the global chart anchored at 0.
    pub fn mu_bounds_half_horizon(&self) -> (f64, f64) {
        let t = match self.mode {
            ChartMode::GlobalFactor => self.t0,
            ChartMode::LocalizedFactor => 0.0,
        };
        (3.0 * 3f64.sqrt() / (12.0 + 8.0 * t), 1.5 + t)
    }
}

/// σ at the end of the half horizon `τ−t0 = 1/2`.
pub fn half_horizon_sigma() -> f64 {
    1.0 / 3f64.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    #[test]
    fn sigma_values() {
        let ch = DilatationChart::global(2.0);
        assert_eq!(ch.sigma_of_tau(2.0).unwrap(), 0.0);
        assert!((ch.sigma_of_tau(2.5).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((ch.sigma_of_tau(2.8).unwrap() - 4.0 / 3.0).abs() < 1e-14);
        assert!(matches!(ch.sigma_of_tau(3.0), Err(Error::Domain(_))));
        assert!(matches!(ch.sigma_of_tau(1.9), Err(Error::Domain(_))));
    }

    #[test]
    fn tau_values() {
        let ch = DilatationChart::localized(0.7);
        assert_eq!(ch.tau_of_sigma(0.0).unwrap(), 0.7);
        assert!((ch.tau_of_sigma(1.0 / 3f64.sqrt()).unwrap() - 1.2).abs() < 1e-15);
        let far = ch.tau_of_sigma(1e6).unwrap();
        assert!(far < 1.7 && far > 1.7 - 1e-11);
        assert!(ch.tau_of_sigma(1e5).unwrap() < far);
        assert!(ch.tau_of_sigma(-1e-3).is_err());
    }

    #[test]
    fn dsigma_dtau_values() {
        let ch = DilatationChart::global(0.0);
        assert_eq!(ch.dsigma_dtau(0.0).unwrap(), 1.0);
        assert_relative_eq!(
            ch.dsigma_dtau(0.5).unwrap(),
            8.0 / (3.0 * 3f64.sqrt()),
            max_relative = 1e-15
        );
    }

    #[test]
    fn mu_coefficients() {
        let g = DilatationChart::global(0.0);
        let m = g.mu_at(0.0).unwrap();
        assert_eq!((m.mu, m.mu_tau1, m.mu_tau2), (1.0, 1.0, 1.0));
        let g3 = DilatationChart::global(3.0);
        let m = g3.mu_at(0.0).unwrap();
        assert_relative_eq!(m.mu, 0.25);
        assert_relative_eq!(m.mu_tau1, 1.0);
        for sigma in [0.1, 0.5, 2.0, 40.0] {
            for ch in [g3, DilatationChart::localized(3.0)] {
                let m = ch.mu_at(sigma).unwrap();
                let d = ch.factor(ch.tau_of_sigma(sigma).unwrap());
                assert_relative_eq!(m.mu_tau1, d * m.mu, max_relative = 1e-15);
                assert_relative_eq!(m.mu_tau2, d * d * m.mu, max_relative = 1e-15);
                assert!(m.mu > 0.0);
            }
        }
    }

    #[test]
    fn comparison_roundtrip_and_factor() {
        let lat = Lattice::new(2, 1, 1.0).unwrap();
        let mut v = ModeField::zeros(&lat);
        v.set(0, &[1, 0], Complex64::new(0.7, -0.2)).unwrap();
        v.set(1, &[0, -1], Complex64::new(1.5, 0.0)).unwrap();

        let g = DilatationChart::global(0.0);
        assert_eq!(g.to_comparison(&v, 0.0).unwrap(), v);

        let loc = DilatationChart::localized(4.0).with_lambda(0.5);
        assert_eq!(loc.to_comparison(&v, 4.0).unwrap(), v.scaled(2.0));

        let ch = DilatationChart::global(2.0).with_lambda(0.1);
        assert_relative_eq!(ch.lambda * ch.factor(2.5), 0.35, max_relative = 1e-15);
        let tau = 2.5;
        let u = ch.to_comparison(&v, tau).unwrap();
        let back = ch.from_comparison(&u, ch.sigma_of_tau(tau).unwrap()).unwrap();
        assert!(back.max_diff(&v) <= 1e-14 * v.sup_norm());

        let zero = ModeField::zeros(&lat);
        assert!(ch.from_comparison(&zero, 0.3).unwrap().is_zero());
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(DilatationChart::new(-1.0, 0.5, 1.0, ChartMode::GlobalFactor).is_err());
        assert!(DilatationChart::new(0.0, 0.0, 1.0, ChartMode::GlobalFactor).is_err());
        assert!(DilatationChart::new(0.0, 1.5, 1.0, ChartMode::GlobalFactor).is_err());
        assert!(DilatationChart::new(0.0, 0.5, 0.0, ChartMode::GlobalFactor).is_err());
        assert!(DilatationChart::new(0.0, 1.0, 1.0, ChartMode::LocalizedFactor).is_ok());
    }
}
