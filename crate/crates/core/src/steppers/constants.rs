//! Constants entering the explicit step-size bound.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dilatation::{half_horizon_sigma, DilatationChart};
use crate::error::{Error, Result};
use crate::lattice::{hs_weights, Lattice};
use crate::quadrature::Rule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionConstants {
    /// Norm bound of the comparison data.
    pub c: f64,
    /// Substep length in σ.
    pub delta: f64,
    pub alpha_h: f64,
    pub delta_k: f64,
    pub c_mu: f64,
    pub c_sup_mu: f64,
    pub c_g: f64,
    pub c_k: f64,
    pub c_m: f64,
}

impl ContractionConstants {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let pos = [
            ("c", self.c),
            ("delta", self.delta),
            ("c_mu", self.c_mu),
            ("c_sup_mu", self.c_sup_mu),
            ("c_g", self.c_g),
            ("c_k", self.c_k),
            ("c_m", self.c_m),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("constants.{name} must be positive, got {v}"));
            }
        }
        if !(self.alpha_h > 0.5 && self.alpha_h <= 1.0) {
            errs.push(format!("constants.alpha_h must lie in (1/2, 1], got {}", self.alpha_h));
        }
        if !(self.delta_k > 0.5 && self.delta_k < 1.0) {
            errs.push(format!("constants.delta_k must lie in (1/2, 1), got {}", self.delta_k));
        }
        if self.c_mu > self.c_sup_mu {
            errs.push("constants.c_mu must not exceed constants.c_sup_mu".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// Choices and quadrature settings for [`estimate_constants`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationSpec {
    pub chart: DilatationChart,
    /// Norm bound `C`; the callers use `hs_norm(u0, sobolev_order)`.
    pub c: f64,
    pub delta: f64,
    pub alpha_h: f64,
    pub delta_k: f64,
    /// Sobolev order `q` of the product estimate.
    pub sobolev_order: f64,
    /// Gauss-Legendre points per panel; refinement doubles it.
    pub nodes: usize,
    /// Number of sampled field pairs for `C_m`.
    pub samples: usize,
    /// Number of σ samples for the μ extrema.
    pub mu_samples: usize,
    pub seed: u64,
}

impl Default for EstimationSpec {
    fn default() -> Self {
        EstimationSpec {
            chart: DilatationChart::localized(0.0),
            c: 1.0,
            delta: half_horizon_sigma() / 8.0,
            alpha_h: 1.0,
            delta_k: 0.75,
            sobolev_order: 2.0,
            nodes: 24,
            samples: 32,
            mu_samples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub constants: ContractionConstants,
    /// Relative change of `C_K` and `C_G` when the rule is doubled.
    pub c_k_refinement: f64,
    pub c_g_refinement: f64,
    pub mu_sampled_inf: f64,
    pub mu_tau2_sampled_sup: f64,
    pub sample_policy: String,
    pub norm_surrogate: String,
}

pub fn estimate_constants(n: usize, m: i64, spec: &EstimationSpec) -> Result<ContractionConstants> {
    Ok(estimate_constants_report(n, m, spec)?.constants)
}

pub fn estimate_constants_report(n: usize, m: i64, spec: &EstimationSpec) -> Result<ConstantsReport> {
    if n < 3 {
        return Err(Error::Config(format!(
            "the Laplacian-kernel constant needs n >= 3, got n = {n}"
        )));
    }
    spec.chart.validate()?;
    let (ck, ck2) = (laplace_kernel_constant(n, spec.nodes)?, laplace_kernel_constant(n, 2 * spec.nodes)?);
    let ck_ref = ((ck2 - ck) / ck2).abs();
    if ck_ref > 0.01 {
        return Err(Error::Quadrature(format!(
            "C_K changed by {:.3}% under refinement ({ck} -> {ck2})",
            100.0 * ck_ref
        )));
    }
    let (cg, cg2) = (gaussian_derivative_constant(n, spec.nodes), gaussian_derivative_constant(n, 2 * spec.nodes));
    let cg_ref = ((cg2 - cg) / cg2).abs();
    if cg_ref > 0.01 {
        return Err(Error::Quadrature(format!(
            "C_G changed by {:.3}% under refinement ({cg} -> {cg2})",
            100.0 * cg_ref
        )));
    }
    let lat = Lattice::new(n, m, 1.0)?;
    let cm = product_constant(&lat, spec.sobolev_order, spec.samples, spec.seed)?;
    let (inf_mu, sup_mu2) = sampled_mu_extrema(&spec.chart, spec.mu_samples)?;
    let (c_mu_closed, c_sup_closed) = spec.chart.mu_bounds_half_horizon();
    let constants = ContractionConstants {
        c: spec.c,
        delta: spec.delta,
        alpha_h: spec.alpha_h,
        delta_k: spec.delta_k,
        c_mu: c_mu_closed.min(inf_mu),
        c_sup_mu: c_sup_closed.max(sup_mu2),
        c_g: cg2,
        c_k: ck2,
        c_m: cm,
    };
    constants.validate()?;
    Ok(ConstantsReport {
        constants,
        c_k_refinement: ck_ref,
        c_g_refinement: cg_ref,
        mu_sampled_inf: inf_mu,
        mu_tau2_sampled_sup: sup_mu2,
        sample_policy: format!(
            "{} scalar field pairs on n={n}, M={m}; |f_α| = U(0.5,1)/(1+|α|^s) with s ~ U(q, q+n+2), \
             uniform phases, conjugate-symmetric; ChaCha8 seed {}",
            spec.samples, spec.seed
        ),
        norm_surrogate: format!("C is the lattice h^q norm with q = {}", spec.sobolev_order),
    })
}

/// `ρ ≤ (c_μ·Δ^{α+δ−1}·C/2 − ε) / (c^μ·n·C_G·C_m·(1+n·C_K)·C²)`.
pub fn step_size_bound(k: &ContractionConstants, n: usize, eps: f64) -> Result<f64> {
    k.validate()?;
    if !(eps > 0.0) {
        return Err(Error::Config(format!("ε must be > 0, got {eps}")));
    }
    let nf = n as f64;
    let numerator = k.c_mu * k.delta.powf(k.alpha_h + k.delta_k - 1.0) * k.c / 2.0 - eps;
    if !(numerator > 0.0) {
        return Err(Error::NoAdmissibleStep { numerator });
    }
    let denominator = k.c_sup_mu * nf * k.c_g * k.c_m * (1.0 + nf * k.c_k) * k.c * k.c;
    Ok(numerator / denominator)
}

fn unit_sphere_area(n: usize) -> f64 {
    // |S^{n−1}| = 2π^{n/2}/Γ(n/2), with Γ on half-integers by recursion
    let half = n as f64 / 2.0;
    let gamma = if n.is_multiple_of(2) {
        (1..n / 2).map(|k| k as f64).product::<f64>()
    } else {
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while x < half {
            g *= x;
            x += 1.0;
        }
        g
    };
    2.0 * PI.powf(half) / gamma
}

/// `K_{n,1}(x) = x_1 / (|S^{n−1}|·|x|^n)`.
fn laplace_kernel(n: usize, x1: f64, r: f64) -> f64 {
    x1 / (unit_sphere_area(n) * r.powi(n as i32))
}

/// `‖K_{n,1}‖_{L¹(B_1)} + ‖K_{n,1}‖_{L²(B_1^c)}` by radial × polar quadrature,
/// with the polar axis along `x_1`.
fn laplace_kernel_constant(n: usize, nodes: usize) -> Result<f64> {
    if n != 3 {
        return Err(Error::Config(format!("kernel quadrature is implemented for n = 3, got {n}")));
    }
    let radial = Rule::composite(nodes, 0.0, 1.0, 4);
    // polar variable t = cos θ, split at the kink of |t|
    let polar_neg = Rule::new(nodes, -1.0, 0.0);
    let polar_pos = Rule::new(nodes, 0.0, 1.0);
    let azimuth = 2.0 * PI;
    let polar = |f: &dyn Fn(f64) -> f64| polar_neg.integrate(f) + polar_pos.integrate(f);

    let ball = radial.integrate(|r| {
        r * r * azimuth * polar(&|t| laplace_kernel(n, r * t, r).abs())
    });
    // outside: r = 1/u, dr = du/u²
    let outside_sq = radial.integrate(|u| {
        let r = 1.0 / u;
        r * r * azimuth * polar(&|t| laplace_kernel(n, r * t, r).powi(2)) / (u * u)
    });
    let out = ball + outside_sq.sqrt();
    if !out.is_finite() {
        return Err(Error::Quadrature("C_K is not finite".into()));
    }
    Ok(out)
}

/// `∫_0^1 ∫_{ℝⁿ} |∂_1 G(τ, z)| dz dτ` for the unit-diffusivity heat kernel,
/// with `τ = u²` and each coordinate integrated over `[−12√τ, 12√τ]`.
fn gaussian_derivative_constant(n: usize, nodes: usize) -> f64 {
    let time = Rule::new(nodes, 0.0, 1.0);
    let unit = Rule::composite(nodes, 0.0, 12.0, 4);
    time.integrate(|u| {
        if u == 0.0 {
            return 0.0;
        }
        let tau = u * u;
        let s = tau.sqrt();
        let g = |z: f64| (-z * z / (4.0 * tau)).exp() / (4.0 * PI * tau).sqrt();
        // symmetric integrands: twice the half line, z = s·y
        let deriv = 2.0 * unit.integrate(|y| {
            let z = s * y;
            z / (2.0 * tau) * g(z) * s
        });
        let mass = 2.0 * unit.integrate(|y| g(s * y) * s);
        2.0 * u * deriv * mass.powi(n as i32 - 1)
    })
}

/// `sup ‖f*g‖_{h^q} / (‖f‖_{h^q}‖g‖_{h^q})` over seeded samples.
fn product_constant(lat: &Lattice, q: f64, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = hs_weights(lat, q);
    let norm = |a: &[Complex64]| {
        a.iter().zip(&w).map(|(z, wk)| wk * z.norm_sqr()).sum::<f64>().sqrt()
    };
    let n = lat.dim() as f64;
    let mut best: f64 = 0.0;
    for _ in 0..samples.max(1) {
        let f = sample_scalar(lat, q, n, &mut rng);
        let g = sample_scalar(lat, q, n, &mut rng);
        let fg = lat.convolve(&f, &g)?;
        best = best.max(norm(&fg) / (norm(&f) * norm(&g)));
    }
    Ok(best)
}

fn sample_scalar(lat: &Lattice, q: f64, n: f64, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let s = rng.gen_range(q..q + n + 2.0);
    let mut out = vec![Complex64::new(0.0, 0.0); lat.len()];
    let center = lat.center();
    for k in center..lat.len() {
        let amp = rng.gen_range(0.5..1.0) / (1.0 + lat.norm(k).powf(s));
        if k == center {
            out[k] = Complex64::new(amp, 0.0);
        } else {
            let z = Complex64::from_polar(amp, rng.gen_range(0.0..2.0 * PI));
            out[k] = z;
            out[lat.neg_index(k)] = z.conj();
        }
    }
    out
}

/// Sampled `(inf μ, sup μ_τ2)` on an evenly spaced grid over `[0, 1/√3]`,
/// endpoints included.
pub fn sampled_mu_extrema(chart: &DilatationChart, samples: usize) -> Result<(f64, f64)> {
    let end = half_horizon_sigma();
    let count = samples.max(2);
    let mut inf = f64::INFINITY;
    let mut sup: f64 = 0.0;
    for k in 0..count {
        let sigma = end * k as f64 / (count - 1) as f64;
        let m = chart.mu_at(sigma)?;
        inf = inf.min(m.mu);
        sup = sup.max(m.mu_tau2);
    }
    Ok((inf, sup))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_constants() -> ContractionConstants {
        ContractionConstants {
            c: 1.0,
            delta: 0.1,
            alpha_h: 1.0,
            delta_k: 0.75,
            c_mu: 3f64.sqrt() / 4.0,
            c_sup_mu: 1.5,
            c_g: 1.128,
            c_k: 0.663,
            c_m: 1.5,
        }
    }

    #[test]
    fn laplace_constant_matches_closed_form() {
        // ball: ∫|θ_1|/|S²| = 1/2; outside: sqrt(1/(12π))
        let want = 0.5 + (1.0 / (12.0 * PI)).sqrt();
        let got = laplace_kernel_constant(3, 16).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn gaussian_constant_matches_closed_form() {
        // ∫|∂_1 G| dz = 1/√(πτ), integrated over (0,1]: 2/√π
        for n in [1, 3] {
            let got = gaussian_derivative_constant(n, 24);
            assert!((got - 2.0 / PI.sqrt()).abs() < 1e-9, "n={n}: {got}");
        }
    }

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn mu_constants_for_origin_chart() {
        let spec = EstimationSpec { chart: DilatationChart::global(0.0), samples: 4, ..Default::default() };
        let k = estimate_constants(3, 2, &spec).unwrap();
        assert!((k.c_mu - 3f64.sqrt() / 4.0).abs() < 1e-15);
        assert_eq!(k.c_sup_mu, 1.5);
        assert!(k.c_m > 0.0);
    }

    #[test]
    fn bound_scaling() {
        let k = sample_constants();
        let num = k.c_mu * k.delta.powf(0.75) * k.c / 2.0;
        let tiny = step_size_bound(&k, 3, 1e-300).unwrap();
        let half = step_size_bound(&k, 3, num / 2.0).unwrap();
        assert!((half / tiny - 0.5).abs() < 1e-12);
        let doubled = ContractionConstants { c: 2.0, ..k };
        let r = step_size_bound(&doubled, 3, 1e-300).unwrap() / tiny;
        assert!((r - 0.5).abs() < 1e-12);
        assert!(matches!(step_size_bound(&k, 3, num * 1.01), Err(Error::NoAdmissibleStep { .. })));
    }

    #[test]
    fn needs_three_dimensions() {
        assert!(estimate_constants(2, 2, &EstimationSpec::default()).is_err());
    }
}
