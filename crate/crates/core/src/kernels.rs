//! Heat-kernel checks: the Gaussian with a frozen time coefficient, its
//! gradient, the half-ball antisymmetry identity, first-order Levy term bounds
//! and the Fourier viscous multiplier.
//!
//! With `a = ρ·ν·μ′(s)·(σ−s)` the kernel is
//! `G(σ,x;s,y) = (4πa)^{−n/2}·exp(−|x−y|²/(4a))`.

use std::f64::consts::{E, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dilatation::DilatationChart;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::quadrature::Rule;

/// Time coefficient `μ′` of the viscous term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MuPrime {
    Constant { value: f64 },
    /// `μ_τ1(σ) = (1+σ²)^{−3/2}` of a chart.
    Chart { chart: DilatationChart },
}

impl MuPrime {
    pub fn eval(&self, sigma: f64) -> Result<f64> {
        match self {
            MuPrime::Constant { value } => Ok(*value),
            MuPrime::Chart { chart } => Ok(chart.mu_at(sigma)?.mu_tau1),
        }
    }

    /// Lipschitz constant on `[a, b]`, exact for both variants.
    pub fn lipschitz_on(&self, a: f64, b: f64) -> f64 {
        match self {
            MuPrime::Constant { .. } => 0.0,
            // |d/dσ (1+σ²)^{−3/2}| = 3σ(1+σ²)^{−5/2}, maximal at σ = 1/2
            MuPrime::Chart { .. } => {
                let x = 0.5f64.clamp(a.max(0.0), b.max(0.0));
                3.0 * x * (1.0 + x * x).powf(-2.5)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    pub n: usize,
    pub rho: f64,
    pub nu: f64,
    pub mu_prime: MuPrime,
}

impl GaussianKernel {
    pub fn new(n: usize, rho: f64, nu: f64, mu_prime: MuPrime) -> Result<Self> {
        let mut errs = Vec::new();
        if !(1..=3).contains(&n) {
            errs.push(format!("kernel checks support n in 1..=3, got {n}"));
        }
        if !(rho > 0.0) {
            errs.push(format!("kernel.rho must be > 0, got {rho}"));
        }
        if !(nu > 0.0) {
            errs.push(format!("kernel.nu must be > 0, got {nu}"));
        }
        if let MuPrime::Constant { value } = mu_prime {
            if !(value > 0.0) {
                errs.push(format!("kernel.mu_prime must be > 0, got {value}"));
            }
        }
        if errs.is_empty() {
            Ok(GaussianKernel { n, rho, nu, mu_prime })
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Variance scale `a = ρνμ′(s)(σ−s)`.
    pub fn spread(&self, sigma: f64, s: f64) -> Result<f64> {
        if !(sigma > s) {
            return Err(Error::Domain(format!("kernel needs σ > s, got σ={sigma}, s={s}")));
        }
        Ok(self.rho * self.nu * self.mu_prime.eval(s)? * (sigma - s))
    }
}

fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn gauss_with_spread(n: usize, a: f64, r2: f64) -> f64 {
    (4.0 * PI * a).powf(-(n as f64) / 2.0) * (-r2 / (4.0 * a)).exp()
}

pub fn gaussian_eval(k: &GaussianKernel, sigma: f64, x: &[f64], s: f64, y: &[f64]) -> Result<f64> {
    let a = k.spread(sigma, s)?;
    Ok(gauss_with_spread(k.n, a, dist_sq(x, y)))
}

/// `∂G/∂x_j = −(x_j−y_j)/(2a)·G`.
pub fn gaussian_grad(
    k: &GaussianKernel,
    sigma: f64,
    x: &[f64],
    s: f64,
    y: &[f64],
    j: usize,
) -> Result<f64> {
    let a = k.spread(sigma, s)?;
    Ok(-(x[j] - y[j]) / (2.0 * a) * gauss_with_spread(k.n, a, dist_sq(x, y)))
}

/// `exp(−ρνμ′|ξ|²Δ′)`.
pub fn fourier_damping_factor(xi: &[f64], dprime: f64, rho: f64, nu: f64, mu_prime: f64) -> f64 {
    let xi2: f64 = xi.iter().map(|v| v * v).sum();
    (-rho * nu * mu_prime * xi2 * dprime).exp()
}

/// `∫ G(σ,x;s,y) dy` by radial quadrature out to 12 standard deviations.
pub fn gaussian_mass(k: &GaussianKernel, sigma: f64, s: f64, nodes: usize) -> Result<f64> {
    let a = k.spread(sigma, s)?;
    let area = match k.n {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    };
    let rmax = 12.0 * (2.0 * a).sqrt();
    let rule = Rule::composite(nodes, 0.0, rmax, 8);
    Ok(rule.integrate(|r| area * r.powi(k.n as i32 - 1) * gauss_with_spread(k.n, a, r * r)))
}

/// Sup of `|G_{,j}|·(σ−s)^δ·|x−y|^{n+1−2δ}` over all arguments, in closed form.
pub fn gradient_local_constant(k: &GaussianKernel, s: f64, delta: f64) -> Result<f64> {
    let kappa = k.rho * k.nu * k.mu_prime.eval(s)?;
    let n = k.n as f64;
    let p = (n + 2.0 - 2.0 * delta) / 2.0;
    Ok((4.0 * kappa).powf(p) * p.powf(p) * (-p).exp() / (2.0 * kappa)
        * (4.0 * PI * kappa).powf(-n / 2.0))
}

/// Integrate `g(y)` over the ball `B_r(x)` (or its half `y_j ≤ x_j`) using
/// radial × angular Gauss-Legendre, polar axis along `e_j`.
fn ball_integrate<G: Fn(&[f64]) -> f64>(
    n: usize,
    x: &[f64],
    r: f64,
    j: usize,
    nodes: usize,
    half: bool,
    g: G,
) -> f64 {
    let radial = Rule::composite(nodes, 0.0, r, 8);
    let mut y = x.to_vec();
    match n {
        1 => {
            let dirs: &[f64] = if half { &[-1.0] } else { &[-1.0, 1.0] };
            radial.integrate(|rad| {
                dirs.iter()
                    .map(|d| {
                        y[0] = x[0] + d * rad;
                        g(&y)
                    })
                    .sum()
            })
        }
        2 => {
            let other = 1 - j;
            let angle = if half {
                Rule::composite(nodes, 0.5 * PI, 1.5 * PI, 2)
            } else {
                Rule::composite(nodes, 0.0, 2.0 * PI, 4)
            };
            radial.integrate(|rad| {
                rad * angle.integrate(|phi| {
                    y[j] = x[j] + rad * phi.cos();
                    y[other] = x[other] + rad * phi.sin();
                    g(&y)
                })
            })
        }
        _ => {
            let (o1, o2) = match j {
                0 => (1, 2),
                1 => (2, 0),
                _ => (0, 1),
            };
            let polar = if half {
                Rule::composite(nodes, -1.0, 0.0, 2)
            } else {
                Rule::composite(nodes, -1.0, 1.0, 4)
            };
            let azimuth = Rule::composite(nodes, 0.0, 2.0 * PI, 4);
            radial.integrate(|rad| {
                rad * rad
                    * polar.integrate(|t| {
                        let st = (1.0 - t * t).max(0.0).sqrt();
                        azimuth.integrate(|phi| {
                            y[j] = x[j] + rad * t;
                            y[o1] = x[o1] + rad * st * phi.cos();
                            y[o2] = x[o2] + rad * st * phi.sin();
                            g(&y)
                        })
                    })
            })
        }
    }
}

/// `full = ∫_{B_r(x)} f(y)·(x_j−y_j)/(σ−s)·G dy` and the same integral over
/// `{y_j ≤ x_j}` with `f(y) − f(y^{−j})`, `y^{−j}` the reflection of `y_j`
/// about `x_j`. The two agree analytically.
#[allow(clippy::too_many_arguments)]
pub fn antisym_half_ball_check<F: Fn(&[f64]) -> f64>(
    k: &GaussianKernel,
    f: F,
    x: &[f64],
    r: f64,
    sigma: f64,
    s: f64,
    j: usize,
    nodes: usize,
) -> Result<(f64, f64)> {
    if x.len() != k.n || j >= k.n {
        return Err(Error::Config(format!("point of length {} or index {j} does not fit n = {}", x.len(), k.n)));
    }
    if !(r > 0.0) || nodes == 0 {
        return Err(Error::Quadrature(format!("need r > 0 and nodes > 0, got r={r}, nodes={nodes}")));
    }
    let a = k.spread(sigma, s)?;
    let dt = sigma - s;
    let weight = |y: &[f64]| (x[j] - y[j]) / dt * gauss_with_spread(k.n, a, dist_sq(x, y));
    let full = ball_integrate(k.n, x, r, j, nodes, false, |y| f(y) * weight(y));
    let half = ball_integrate(k.n, x, r, j, nodes, true, |y| {
        let mut refl = y.to_vec();
        refl[j] = 2.0 * x[j] - y[j];
        (f(y) - f(&refl)) * weight(y)
    });
    if !(full.is_finite() && half.is_finite()) {
        return Err(Error::Quadrature("half-ball integrals are not finite".into()));
    }
    Ok((full, half))
}

/// `C⁰ = sup_z 2z²e^{−z²} = 2/e`.
pub const C_ZERO: f64 = 2.0 / E;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevySampling {
    pub samples: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Sampled `|x−y|` ranges over `[0, reach·√(2a)]`.
    pub reach: f64,
    pub seed: u64,
}

impl Default for LevySampling {
    fn default() -> Self {
        LevySampling { samples: 10_000, sigma_min: 0.1, sigma_max: 0.5, reach: 6.0, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub samples: usize,
    /// Violations of the dimensionally consistent bound.
    pub violations: usize,
    /// Largest and smallest relative slack `1 − |LG|/bound` over samples.
    pub max_slack: f64,
    pub min_slack: f64,
    /// Violations of the bound with the prefactor read literally
    /// (`C⁰ + c/(2μ′)`, no `ν` in the spread), reported for comparison.
    pub literal_violations: usize,
    pub config: serde_json::Value,
}

/// Check `|L G| = |ρν(μ′(σ)−μ′(s))ΔG|` against
/// `(c·C⁰/μ′(s) + n·c/(2μ′(s)))·(2π·2a)^{−n/2}·exp(−|x−y|²/(8a))`,
/// `c` the Lipschitz constant of `μ′` on the sampled interval.
pub fn levy_term_bound_check(k: &GaussianKernel, grid: &LevySampling) -> Result<BoundReport> {
    if !(grid.sigma_max > grid.sigma_min && grid.sigma_min >= 0.0) {
        return Err(Error::Config("levy sampling needs 0 <= sigma_min < sigma_max".into()));
    }
    let c_lip = k.mu_prime.lipschitz_on(grid.sigma_min, grid.sigma_max);
    let n = k.n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    let draws: Vec<(f64, f64, Vec<f64>)> = (0..grid.samples)
        .map(|_| {
            let mut s = rng.gen_range(grid.sigma_min..grid.sigma_max);
            let mut sigma = rng.gen_range(grid.sigma_min..grid.sigma_max);
            if sigma < s {
                std::mem::swap(&mut s, &mut sigma);
            }
            if sigma == s {
                sigma = (s + 1e-9).min(grid.sigma_max);
            }
            let dir: Vec<f64> = (0..k.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let radius = rng.gen_range(0.0..1.0);
            (s, sigma, dir.into_iter().map(|d| d * radius).collect())
        })
        .collect();
    let eval = |(s, sigma, dir): &(f64, f64, Vec<f64>)| -> Result<(f64, f64, bool)> {
        let (s, sigma) = (*s, *sigma);
        let a = k.spread(sigma, s)?;
        let mp_s = k.mu_prime.eval(s)?;
        let mp_t = k.mu_prime.eval(sigma)?;
        let scale = grid.reach * (2.0 * a).sqrt() / n.sqrt();
        let r2: f64 = dir.iter().map(|d| (d * scale) * (d * scale)).sum();
        let g = gauss_with_spread(k.n, a, r2);
        let lap = g * (r2 / (4.0 * a * a) - n / (2.0 * a));
        let lg = (k.rho * k.nu * (mp_t - mp_s) * lap).abs();
        let envelope = (4.0 * PI * a).powf(-n / 2.0) * (-r2 / (8.0 * a)).exp();
        let bound = (c_lip * C_ZERO / mp_s + n * c_lip / (2.0 * mp_s)) * envelope;
        let slack = if bound > 0.0 { 1.0 - lg / bound } else if lg == 0.0 { 1.0 } else { f64::NEG_INFINITY };
        let a_lit = k.rho * mp_s * (sigma - s);
        let literal = (C_ZERO + c_lip / (2.0 * mp_s))
            * (2f64.sqrt() / (8.0 * PI * a_lit).sqrt()).powf(n)
            * (-r2 / (8.0 * a_lit)).exp();
        Ok((slack, lg, lg > literal))
    };
    let results = Exec::default().map(draws.len(), |i| eval(&draws[i]));
    let mut violations = 0;
    let mut literal_violations = 0;
    let mut max_slack = f64::NEG_INFINITY;
    let mut min_slack = f64::INFINITY;
    for res in results {
        let (slack, _, lit) = res?;
        if slack < 0.0 {
            violations += 1;
        }
        if lit {
            literal_violations += 1;
        }
        max_slack = max_slack.max(slack);
        min_slack = min_slack.min(slack);
    }
    Ok(BoundReport {
        samples: grid.samples,
        violations,
        max_slack,
        min_slack,
        literal_violations,
        config: serde_json::json!({
            "kernel": k,
            "sampling": grid,
            "lipschitz": c_lip,
            "c_zero": C_ZERO,
        }),
    })
}
