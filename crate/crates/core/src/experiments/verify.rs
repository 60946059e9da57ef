//! Acceptance fixtures, one function per criterion, and the suite runner.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{admissible_rho, envelope_initial};
use crate::diagnostics::{
    blowup_detect, convolution_rule_oracle, envelope_fit, envelope_preserved, rule_sums_by_norm,
    RuleWeight,
};
use crate::dilatation::{half_horizon_sigma, DilatationChart};
use crate::dynamics::{
    base_rhs, counterexample_euler_step, damped_rhs, viscous_rates, FluidParams, ForcingSpec,
    Nonlinearity,
};
use crate::error::{Error, Result};
use crate::kernels::{
    antisym_half_ball_check, fourier_damping_factor, gaussian_eval, gaussian_grad, gaussian_mass,
    gradient_local_constant, levy_term_bound_check, GaussianKernel, LevySampling, MuPrime,
};
use crate::lattice::{hs_weights, DecayEnvelope, Lattice, ModeField};
use crate::steppers::{
    euler_step, rk4_step, sampled_mu_extrema, trotter_step, TrotterVariant,
};
use crate::testbeds::{
    kp_run, kp_to_lattice, ode_analytic, ode_blowup_estimate, ode_rk4, ode_transformed_analytic,
    ode_transformed_derivative, ode_transformed_rhs, ScalarOdeConfig, ShellConfig,
};

/// Pinned tolerances of the acceptance criteria. Tests may corrupt a single
/// entry to check that the runner names the failing criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub ode_rel_err: f64,
    pub ode_blowup_window: [f64; 2],
    pub transformed_residual: f64,
    pub chart_roundtrip: f64,
    pub chart_half_sigma: f64,
    /// Accepted deviation of a measured convergence order from 2.
    pub fd_order_slack: f64,
    pub divergence_rel: f64,
    pub reality: f64,
    pub idempotence: f64,
    pub heat_rel: f64,
    pub two_route_order_min: f64,
    pub two_route_k: f64,
    pub damping_fixtures: usize,
    pub rule_stability: [f64; 2],
    pub kernel_mass: f64,
    pub half_ball: f64,
    pub levy_violations: usize,
    pub kp_ratio: f64,
    pub cascade_run: usize,
    pub decay_fraction: f64,
    /// Wall-clock budgets in seconds, keyed by criterion id.
    pub runtime_budgets: Vec<(u8, f64)>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            ode_rel_err: 1e-6,
            ode_blowup_window: [0.99, 1.01],
            transformed_residual: 1e-8,
            chart_roundtrip: 1e-12,
            chart_half_sigma: 1e-15,
            fd_order_slack: 0.1,
            divergence_rel: 1e-10,
            reality: 1e-12,
            idempotence: 1e-14,
            heat_rel: 1e-8,
            two_route_order_min: 0.9,
            two_route_k: 10.0,
            damping_fixtures: 100,
            rule_stability: [0.9, 1.1],
            kernel_mass: 1e-6,
            half_ball: 1e-8,
            levy_violations: 0,
            kp_ratio: 10.0,
            cascade_run: 3,
            decay_fraction: 0.01,
            runtime_budgets: vec![(1, 5.0), (2, 1.0), (4, 1.0), (10, 60.0), (11, 30.0), (14, 120.0)],
        }
    }
}

impl Tolerances {
    fn budget(&self, id: u8) -> Option<f64> {
        self.runtime_budgets.iter().find(|(k, _)| *k == id).map(|(_, b)| *b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Acceptance,
    Kernel,
    Envelope,
    Testbeds,
    All,
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acceptance" => Ok(Suite::Acceptance),
            "kernel" => Ok(Suite::Kernel),
            "envelope" => Ok(Suite::Envelope),
            "testbeds" => Ok(Suite::Testbeds),
            "all" => Ok(Suite::All),
            other => Err(Error::Validation(vec![format!(
                "suite must be one of acceptance, kernel, envelope, testbeds, all; got {other:?}"
            )])),
        }
    }
}

impl Suite {
    pub fn criteria(self) -> Vec<u8> {
        match self {
            Suite::Acceptance | Suite::All => (1..=14).collect(),
            Suite::Kernel => vec![3, 4, 6, 11],
            Suite::Envelope => vec![5, 7, 8, 9, 10, 13, 14],
            Suite::Testbeds => vec![1, 2, 12],
        }
    }
}

pub const CRITERION_NAMES: [&str; 14] = [
    "ode blow-up",
    "transformed ode identity",
    "dilatation chart",
    "mu-coefficient extrema",
    "leray and structure invariants",
    "pure-heat trotter",
    "two-route consistency",
    "envelope preservation",
    "damping dominance",
    "convolution-rule oracle",
    "kernel suite",
    "blow-up contrast",
    "forced-counterexample cascade",
    "long-run decay",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub measured: String,
    pub required: String,
    pub seconds: f64,
    pub budget: Option<f64>,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub outcomes: Vec<CriterionOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failing(&self) -> Vec<&CriterionOutcome> {
        self.outcomes.iter().filter(|o| !o.passed).collect()
    }

    /// One line per criterion: status, id, name, measured, required, time.
    pub fn table(&self) -> String {
        let mut s = String::new();
        for o in &self.outcomes {
            let budget = o.budget.map_or(String::new(), |b| format!(" / {b:.0}s"));
            let _ = writeln!(
                s,
                "{} #{:<2} {:<32} measured: {} | required: {} | {:.2}s{}",
                if o.passed { "PASS" } else { "FAIL" },
                o.id,
                o.name,
                o.measured,
                o.required,
                o.seconds,
                budget
            );
        }
        s
    }
}

struct Check {
    passed: bool,
    measured: String,
    required: String,
    details: serde_json::Value,
}

pub fn run_criterion(id: u8, tol: &Tolerances) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let check = match id {
        1 => ode_blowup(tol),
        2 => transformed_ode(tol),
        3 => chart(tol),
        4 => mu_extrema(tol),
        5 => structure_invariants(tol),
        6 => pure_heat(tol),
        7 => two_route(tol),
        8 => envelope_preservation(tol),
        9 => damping_dominance(tol),
        10 => rule_oracle(tol),
        11 => kernel_suite(tol),
        12 => blowup_contrast(tol),
        13 => forced_cascade(tol),
        14 => long_run_decay(tol),
        _ => return Err(Error::Config(format!("no acceptance criterion #{id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let budget = tol.budget(id);
    let name = CRITERION_NAMES[id as usize - 1].to_string();
    let check = match check {
        Ok(c) => c,
        Err(e) => Check {
            passed: false,
            measured: format!("error: {e}"),
            required: "completes".into(),
            details: serde_json::Value::Null,
        },
    };
    let in_budget = budget.is_none_or(|b| seconds < b);
    Ok(CriterionOutcome {
        id,
        name,
        passed: check.passed && in_budget,
        measured: check.measured,
        required: check.required,
        seconds,
        budget,
        details: check.details,
    })
}

pub fn verify(suite: Suite, tol: &Tolerances) -> Result<VerifyReport> {
    let outcomes = suite.criteria().into_iter().map(|id| run_criterion(id, tol)).collect::<Result<_>>()?;
    Ok(VerifyReport { suite, outcomes })
}

fn order(e_coarse: f64, e_fine: f64) -> f64 {
    (e_coarse / e_fine).log2()
}

// 1
fn ode_blowup(tol: &Tolerances) -> Result<Check> {
    let cfg = ScalarOdeConfig::new(1.0, 1.0, 0.0)?;
    let dt = 1e-5;
    let mut worst = 0.0f64;
    for (t, x) in ode_rk4(&cfg, dt, 0.9) {
        let exact = 1.0 / (1.0 - t);
        debug_assert!((ode_analytic(&cfg, t)? - exact).abs() <= 1e-12 * exact);
        worst = worst.max(((x - exact) / exact).abs());
    }
    let est = ode_blowup_estimate(&cfg, dt, 1e8)?;
    let [lo, hi] = tol.ode_blowup_window;
    Ok(Check {
        passed: worst <= tol.ode_rel_err && (lo..=hi).contains(&est.extrapolated),
        measured: format!("rel err {worst:.2e}, T* ≈ {:.6}", est.extrapolated),
        required: format!("rel err ≤ {:.0e}, T* ∈ [{lo}, {hi}]", tol.ode_rel_err),
        details: json!({ "max_rel_err": worst, "estimate": est }),
    })
}

// 2
fn transformed_ode(tol: &Tolerances) -> Result<Check> {
    let points = 10_000;
    let mut worst = 0.0f64;
    let mut formula_gap = 0.0f64;
    let mut per_case = Vec::new();
    for lambda in [1.0, 0.5] {
        let cfg = ScalarOdeConfig::new(1.0, lambda, 0.0)?;
        let mut case = 0.0f64;
        for k in 0..=points {
            let s = 5.0 * k as f64 / points as f64;
            let y = ode_transformed_analytic(&cfg, s)?;
            let t = s / (1.0 + s * s).sqrt();
            let printed = 1.0 / (lambda * (1.0 + t) * (1.0 - lambda * t));
            formula_gap = formula_gap.max(((y - printed) / printed).abs());
            let r = (ode_transformed_derivative(&cfg, s)? - ode_transformed_rhs(&cfg, y, s)?).abs();
            case = case.max(r);
        }
        worst = worst.max(case);
        per_case.push(json!({ "lambda": lambda, "max_residual": case }));
    }
    Ok(Check {
        passed: worst <= tol.transformed_residual && formula_gap <= 1e-14,
        measured: format!("max residual {worst:.2e}"),
        required: format!("≤ {:.0e} on s ∈ [0,5], λ ∈ {{1, 0.5}}", tol.transformed_residual),
        details: json!({ "cases": per_case, "closed_form_gap": formula_gap }),
    })
}

// 3
fn chart(tol: &Tolerances) -> Result<Check> {
    let mut roundtrip = 0.0f64;
    let mut half = 0.0f64;
    let mut orders = Vec::new();
    for t0 in [0.0, 2.5] {
        let ch = DilatationChart::global(t0);
        let points = 10_000;
        for k in 0..points {
            let tau = t0 + 0.999 * k as f64 / (points - 1) as f64;
            let back = ch.tau_of_sigma(ch.sigma_of_tau(tau)?)?;
            roundtrip = roundtrip.max((back - tau).abs());
        }
        half = half.max((ch.sigma_of_tau(t0 + 0.5)? - half_horizon_sigma()).abs());
        let err = |h: f64| -> Result<f64> {
            let mut e = 0.0f64;
            for x in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let tau = t0 + x;
                let fd = (ch.sigma_of_tau(tau + h)? - ch.sigma_of_tau(tau - h)?) / (2.0 * h);
                e = e.max((fd - ch.dsigma_dtau(tau)?).abs());
            }
            Ok(e)
        };
        orders.push(order(err(1e-3)?, err(5e-4)?));
    }
    let worst_order = orders.iter().map(|o| (o - 2.0).abs()).fold(0.0, f64::max);
    Ok(Check {
        passed: roundtrip <= tol.chart_roundtrip
            && half <= tol.chart_half_sigma
            && worst_order <= tol.fd_order_slack,
        measured: format!("roundtrip {roundtrip:.1e}, |σ(½)−1/√3| {half:.1e}, FD orders {orders:.3?}"),
        required: format!(
            "roundtrip ≤ {:.0e}, σ gap ≤ {:.0e}, order 2 ± {}",
            tol.chart_roundtrip, tol.chart_half_sigma, tol.fd_order_slack
        ),
        details: json!({ "roundtrip": roundtrip, "half_sigma_gap": half, "orders": orders }),
    })
}

// 4
fn mu_extrema(_tol: &Tolerances) -> Result<Check> {
    let mut ok = true;
    let mut rows = Vec::new();
    for t0 in [0.0, 1.0, 5.0] {
        let ch = DilatationChart::global(t0);
        let (inf_mu, sup_mu2) = sampled_mu_extrema(&ch, 10_000)?;
        let (c_mu, c_sup) = ch.mu_bounds_half_horizon();
        // The infimum is attained at the endpoint σ = 1/√3, where sampled and
        // closed form agree up to rounding; compare at 4-ulp resolution.
        let ulp = 4.0 * f64::EPSILON;
        ok &= inf_mu >= c_mu * (1.0 - ulp) && sup_mu2 <= c_sup * (1.0 + ulp);
        rows.push(json!({ "t0": t0, "inf_mu": inf_mu, "closed_inf": c_mu, "sup_mu_tau2": sup_mu2, "closed_sup": c_sup }));
    }
    Ok(Check {
        passed: ok,
        measured: rows
            .iter()
            .map(|r| format!("t0={}: inf {:.6} sup {:.4}", r["t0"], r["inf_mu"].as_f64().unwrap_or(f64::NAN), r["sup_mu_tau2"].as_f64().unwrap_or(f64::NAN)))
            .collect::<Vec<_>>()
            .join("; "),
        required: "inf μ ≥ 3√3/(12+8t0), sup μ_τ2 ≤ 3/2+t0 (4 ulp), t0 ∈ {0,1,5}".into(),
        details: json!(rows),
    })
}

fn ns_invariant_field(lat: &Lattice, seed: u64) -> Result<ModeField> {
    envelope_initial(lat, &DecayEnvelope::new(1.0, 3.0)?, seed, true, true)
}

// 5
fn structure_invariants(tol: &Tolerances) -> Result<Check> {
    let lat = Lattice::new(3, 4, 1.0)?;
    let p = FluidParams::for_lattice(&lat, 0.1)?;
    let v0 = ns_invariant_field(&lat, 11)?;
    let once = v0.leray_project()?;
    let idem = once.max_diff(&v0) / v0.sup_norm();
    let mut v = v0;
    for _ in 0..100 {
        v = trotter_step(&v, &p, Nonlinearity::NavierStokes, None, 1e-3, TrotterVariant::FirstOrder)?;
    }
    let div = v.divergence().iter().map(|z| z.norm()).fold(0.0, f64::max) / v.l2_norm();
    let real = v.reality_defect();
    Ok(Check {
        passed: div <= tol.divergence_rel && real <= tol.reality && idem <= tol.idempotence,
        measured: format!("div/‖v‖ {div:.1e}, reality {real:.1e}, idempotence {idem:.1e}"),
        required: format!(
            "div ≤ {:.0e}·‖v‖, reality ≤ {:.0e}, idempotence ≤ {:.0e}",
            tol.divergence_rel, tol.reality, tol.idempotence
        ),
        details: json!({ "divergence_rel": div, "reality": real, "idempotence": idem }),
    })
}

// 6
fn pure_heat(tol: &Tolerances) -> Result<Check> {
    let lat = Lattice::new(3, 4, 1.0)?;
    let nu = 0.1;
    let p = FluidParams::for_lattice(&lat, nu)?;
    let v0 = ns_invariant_field(&lat, 12)?;
    let (k, dt) = (100, 1e-3);
    let mut v = v0.clone();
    for _ in 0..k {
        v = trotter_step(&v, &p, Nonlinearity::Off, None, dt, TrotterVariant::FirstOrder)?;
    }
    let rates = viscous_rates(&lat, nu);
    let mut worst = 0.0f64;
    let mut kernel_gap = 0.0f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    for i in 0..lat.dim() {
        for (m, &rate) in rates.iter().enumerate() {
            let z0 = v0.at(i, m);
            if z0.norm() == 0.0 {
                continue;
            }
            let mult = (-rate * k as f64 * dt).exp();
            let xi: Vec<f64> = lat.coords(m).iter().map(|&a| two_pi * a as f64 / lat.length()).collect();
            let f = fourier_damping_factor(&xi, k as f64 * dt, 1.0, nu, 1.0);
            kernel_gap = kernel_gap.max((f - mult).abs() / mult);
            worst = worst.max((v.at(i, m) - z0 * mult).norm() / (z0 * mult).norm());
        }
    }
    Ok(Check {
        passed: worst <= tol.heat_rel && kernel_gap <= tol.heat_rel,
        measured: format!("max rel err {worst:.1e}, kernel multiplier gap {kernel_gap:.1e}"),
        required: format!("≤ {:.0e} per mode", tol.heat_rel),
        details: json!({ "max_rel_err": worst, "fourier_factor_gap": kernel_gap }),
    })
}

// 7
fn two_route(tol: &Tolerances) -> Result<Check> {
    let lat = Lattice::new(1, 8, 1.0)?;
    let p = FluidParams::for_lattice(&lat, 0.05)?;
    let chart = DilatationChart::global(0.0).with_rho(0.5);
    let u0 = envelope_initial(&lat, &DecayEnvelope::new(0.5, 3.0)?, 7, false, false)?;
    let horizon = 0.5;
    let tau_end = chart.tau_of_sigma(horizon)?;

    // Route A: v in physical time, transformed at the end.
    let mut v = chart.from_comparison(&u0, 0.0)?;
    let fine = 20_000;
    let h = (tau_end - chart.t0) / fine as f64;
    for _ in 0..fine {
        v = rk4_step(&v, |w| Ok(base_rhs(w, &p, Nonlinearity::Burgers)?.scaled(chart.rho)), h)?;
    }
    let v_a = v;

    // Route B: explicit Euler on the damped comparison system, mapped back.
    let mut errs = Vec::new();
    let steps_list = [50usize, 100, 200];
    for &steps in &steps_list {
        let ds = horizon / steps as f64;
        let mut u = u0.clone();
        for k in 0..steps {
            let sigma = k as f64 * ds;
            u = euler_step(&u, |w| damped_rhs(w, &chart, sigma, &p, Nonlinearity::Burgers), ds)?;
        }
        let v_b = chart.from_comparison(&u, horizon)?;
        errs.push((ds, v_b.max_diff(&v_a)));
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| order(w[0].1, w[1].1)).collect();
    let k_max = errs.iter().map(|(ds, e)| e / ds).fold(0.0, f64::max);
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Check {
        passed: min_order >= tol.two_route_order_min && k_max <= tol.two_route_k,
        measured: format!(
            "errors [{}], orders {orders:.3?}, K {k_max:.3}",
            errs.iter().map(|e| format!("{:.2e}", e.1)).collect::<Vec<_>>().join(", ")
        ),
        required: format!("order ≥ {}, error ≤ {}·δσ", tol.two_route_order_min, tol.two_route_k),
        details: json!({ "errors": errs, "orders": orders, "k": k_max }),
    })
}

/// Trotter run of the damped comparison system over `σ ∈ [0, 1/√3]`,
/// returning the `(σ, u)` snapshots including the initial one.
fn damped_trotter_run(
    u0: &ModeField,
    p: &FluidParams,
    kind: Nonlinearity,
    chart: &DilatationChart,
    steps: usize,
) -> Result<Vec<(f64, ModeField)>> {
    let ds = half_horizon_sigma() / steps as f64;
    let mut snaps = vec![(0.0, u0.clone())];
    let mut u = u0.clone();
    for k in 0..steps {
        let sigma = k as f64 * ds;
        u = trotter_step(&u, p, kind, Some((chart, sigma)), ds, TrotterVariant::FirstOrder)?;
        snaps.push(((k + 1) as f64 * ds, u.clone()));
    }
    Ok(snaps)
}

// 8
fn envelope_preservation(_tol: &Tolerances) -> Result<Check> {
    let lat = Lattice::new(3, 6, 1.0)?;
    let p = FluidParams::for_lattice(&lat, 0.1)?;
    let env = DecayEnvelope::new(1.0, 5.0)?;
    let u0 = envelope_initial(&lat, &env, 8, false, false)?;
    let chart = DilatationChart::localized(0.0);
    let (rho, k) = admissible_rho(&u0, &chart, 8)?;
    // Δ/8 with Δ the substep of the estimate: 64 steps over the half horizon.
    let steps = (half_horizon_sigma() / (k.delta / 8.0)).round() as usize;
    let run = |rho: f64| -> Result<_> {
        let ch = chart.with_rho(rho);
        match damped_trotter_run(&u0, &p, Nonlinearity::Burgers, &ch, steps) {
            Ok(snaps) => Ok(Some(envelope_preserved(&snaps, &env)?)),
            Err(Error::NonFinite { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let admissible = run(rho)?;
    let inflated = run((100.0 * rho).min(1.0))?;
    let ok = admissible.as_ref().is_some_and(|r| r.preserved);
    let contrast = inflated.as_ref().map_or("blow-up".to_string(), |r| {
        format!("preserved={} worst margin {:.2e}", r.preserved, r.worst_margin)
    });
    Ok(Check {
        passed: ok,
        measured: format!(
            "ρ={rho:.3e}: worst margin {:.2e}; 100ρ: {contrast}",
            admissible.as_ref().map_or(f64::NAN, |r| r.worst_margin)
        ),
        required: "envelope (C=1, s=5) preserved at admissible ρ".into(),
        details: json!({ "rho": rho, "constants": k, "steps": steps, "admissible": admissible, "inflated": inflated }),
    })
}

// 9
fn damping_dominance(tol: &Tolerances) -> Result<Check> {
    let lat = Lattice::new(3, 4, 1.0)?;
    let p = FluidParams::for_lattice(&lat, 0.1)?;
    let chart = DilatationChart::localized(0.0);
    let c = 1.0;
    let unit = envelope_initial(&lat, &DecayEnvelope::new(1.0, 4.0)?, 9, true, true)?;
    let probe = unit.scaled(c / unit.hs_norm(2.0));
    let (rho, _) = admissible_rho(&probe, &chart, 9)?;
    let chart = chart.with_rho(rho);
    let weights = hs_weights(&lat, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut negative = 0;
    let mut worst = f64::NEG_INFINITY;
    let fixtures = 100;
    for f in 0..fixtures {
        let s = rng.gen_range(3.0..6.0);
        let target = rng.gen_range(0.9..1.0) * c;
        let sigma = rng.gen_range(0.0..half_horizon_sigma());
        let raw = envelope_initial(&lat, &DecayEnvelope::new(1.0, s)?, 1000 + f as u64, true, true)?;
        let u = raw.scaled(target / raw.hs_norm(2.0));
        let r = damped_rhs(&u, &chart, sigma, &p, Nonlinearity::NavierStokes)?;
        let l = lat.len();
        let dot: f64 = u
            .data()
            .iter()
            .zip(r.data())
            .enumerate()
            .map(|(idx, (a, b))| weights[idx % l] * (a.conj() * b).re)
            .sum();
        let d = dot / u.hs_norm(2.0);
        if d < 0.0 {
            negative += 1;
        }
        worst = worst.max(d);
    }
    Ok(Check {
        passed: negative >= tol.damping_fixtures,
        measured: format!("{negative}/{fixtures} negative, largest d‖u‖/dσ {worst:.3e} (ρ={rho:.2e})"),
        required: format!("{}/{fixtures} negative", tol.damping_fixtures),
        details: json!({ "negative": negative, "fixtures": fixtures, "largest_derivative": worst, "rho": rho }),
    })
}

// 10
fn rule_oracle(tol: &Tolerances) -> Result<Check> {
    let rep = convolution_rule_oracle(3, 5.0, 5.0, 32, RuleWeight::GammaNorm)?;
    let sums: Vec<(f64, f64)> = rule_sums_by_norm(&rep).into_iter().filter(|(r, _)| *r <= 8.0 + 1e-12).collect();
    let monotone = sums.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
    let [lo, hi] = tol.rule_stability;
    Ok(Check {
        passed: rep.c.is_finite() && (lo..=hi).contains(&rep.stability) && monotone,
        measured: format!(
            "c={:.4}, stability {:.4}, non-increasing={monotone}, measured exponent {:.3}",
            rep.c, rep.stability, rep.measured_exponent
        ),
        required: format!("stability ∈ [{lo}, {hi}], non-increasing over |α| ≤ 8"),
        details: json!({ "c": rep.c, "stability": rep.stability, "s_out": rep.s_out,
                         "measured_exponent": rep.measured_exponent, "sums_by_norm": sums }),
    })
}

// 11
fn kernel_suite(tol: &Tolerances) -> Result<Check> {
    let chart_mu = MuPrime::Chart { chart: DilatationChart::global(0.0) };
    let mut notes = Vec::new();

    let mut mass_err = 0.0f64;
    for n in 1..=3 {
        let k = GaussianKernel::new(n, 0.5, 1.0, chart_mu)?;
        for (sigma, s) in [(0.2, 0.1), (0.5, 0.1), (1.0, 0.3)] {
            mass_err = mass_err.max((gaussian_mass(&k, sigma, s, 16)? - 1.0).abs());
        }
    }
    let mass_ok = mass_err <= tol.kernel_mass;
    notes.push(format!("mass err {mass_err:.1e}"));

    // Gradient against central differences at two step sizes.
    let k3 = GaussianKernel::new(3, 1.0, 1.0, MuPrime::Constant { value: 1.0 })?;
    let (sigma, s) = (0.3, 0.1);
    let y = [0.0, 0.0, 0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let pts: Vec<[f64; 3]> = (0..20)
        .map(|_| [rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)])
        .collect();
    let fd_err = |h: f64| -> Result<f64> {
        let mut e = 0.0f64;
        for x in &pts {
            for j in 0..3 {
                let (mut xp, mut xm) = (*x, *x);
                xp[j] += h;
                xm[j] -= h;
                let fd = (gaussian_eval(&k3, sigma, &xp, s, &y)? - gaussian_eval(&k3, sigma, &xm, s, &y)?) / (2.0 * h);
                e = e.max((fd - gaussian_grad(&k3, sigma, x, s, &y, j)?).abs());
            }
        }
        Ok(e)
    };
    let grad_order = order(fd_err(1e-3)?, fd_err(5e-4)?);
    let grad_ok = (grad_order - 2.0).abs() <= tol.fd_order_slack;
    notes.push(format!("grad order {grad_order:.3}"));

    // Local gradient bound: closed-form constant dominates sampled ratios.
    let delta = 0.75;
    let c_local = gradient_local_constant(&k3, s, delta)?;
    let mut sampled = 0.0f64;
    for i in 1..=400 {
        let r = 3.0 * i as f64 / 400.0;
        for sig in [0.15, 0.3, 0.6, 1.2] {
            let x = [r, 0.0, 0.0];
            let g = gaussian_grad(&k3, sig, &x, s, &y, 0)?.abs();
            sampled = sampled.max(g * (sig - s).powf(delta) * r.powf(4.0 - 2.0 * delta));
        }
    }
    let local_ok = sampled <= c_local * (1.0 + 1e-12);
    notes.push(format!("local bound {sampled:.3e} ≤ {c_local:.3e}"));

    // Half-ball antisymmetry on linear f.
    let mut half_gap = 0.0f64;
    for n in 1..=3 {
        let k = GaussianKernel::new(n, 0.5, 1.0, chart_mu)?;
        let x: Vec<f64> = (0..n).map(|i| 0.1 * (i as f64 + 1.0)).collect();
        for j in 0..n {
            let f = |p: &[f64]| 1.0 + p.iter().enumerate().map(|(i, v)| (i as f64 + 2.0) * v).sum::<f64>();
            let (full, half) = antisym_half_ball_check(&k, f, &x, 0.5, 0.6, 0.1, j, 16)?;
            half_gap = half_gap.max((full - half).abs() / full.abs().max(1.0));
        }
    }
    let half_ok = half_gap <= tol.half_ball;
    notes.push(format!("half-ball gap {half_gap:.1e}"));

    // Levy-type bound on the commutator term.
    let kl = GaussianKernel::new(3, 0.01, 1.0, chart_mu)?;
    let levy = levy_term_bound_check(&kl, &LevySampling::default())?;
    let levy_ok = levy.violations <= tol.levy_violations && levy.samples == 10_000;
    notes.push(format!("levy {} violations ({} literal)", levy.violations, levy.literal_violations));

    // Small-ball integral shrinks with ρ.
    let mut sweep = Vec::new();
    // Ball radius 0.3 stays at least 4 standard deviations wide.
    for rho in [0.01, 0.005, 0.002, 0.001] {
        let k = GaussianKernel::new(3, rho, 1.0, MuPrime::Constant { value: 1.0 })?;
        let f = |p: &[f64]| (3.0 * p[0]).sin() + 0.5 * p[1] * p[1] + p[2];
        let (full, _) = antisym_half_ball_check(&k, f, &[0.1, 0.2, 0.3], 0.3, 0.6, 0.1, 0, 16)?;
        sweep.push((rho, full.abs()));
    }
    let sweep_ok = sweep.windows(2).all(|w| w[1].1 < w[0].1);
    notes.push(format!("ρ-sweep monotone={sweep_ok}"));

    Ok(Check {
        passed: mass_ok && grad_ok && local_ok && half_ok && levy_ok && sweep_ok,
        measured: notes.join(", "),
        required: format!(
            "mass 1±{:.0e}, order 2±{}, half-ball ≤ {:.0e}, ≤ {} levy violations, monotone sweep",
            tol.kernel_mass, tol.fd_order_slack, tol.half_ball, tol.levy_violations
        ),
        details: json!({ "mass_err": mass_err, "grad_order": grad_order, "local_constant": c_local,
                         "local_sampled": sampled, "half_ball_gap": half_gap, "levy": levy, "sweep": sweep }),
    })
}

// 12
fn blowup_contrast(tol: &Tolerances) -> Result<Check> {
    let kp = ShellConfig { mu: 2.0, alpha: 0.1, s_visc: -1.0, m_min: 0, m_max: 7, initial: vec![-3.0] };
    let (series, _) = kp_run(&kp, 1e-4, 30_000, 10)?;
    let event = blowup_detect(&series, tol.kp_ratio)?;

    // Same initial h^5 size, as a lattice field: the KP state sits at α = 0.
    let lat = Lattice::new(3, 4, 1.0)?;
    let kp0 = kp_to_lattice(&kp.initial_state(), &lat)?;
    let h5 = kp0.hs_norm(5.0);
    let unit = envelope_initial(&lat, &DecayEnvelope::new(1.0, 5.0)?, 12, false, false)?;
    let scale = h5 / unit.hs_norm(5.0);
    let env = DecayEnvelope::new(scale, 5.0)?;
    let u0 = unit.scaled(scale);
    let p = FluidParams::for_lattice(&lat, 0.1)?;
    let chart = DilatationChart::localized(0.0);
    let (rho, k) = admissible_rho(&u0, &chart, 12)?;
    let steps = (half_horizon_sigma() / (k.delta / 8.0)).round() as usize;
    let snaps = damped_trotter_run(&u0, &p, Nonlinearity::Burgers, &chart.with_rho(rho), steps)?;
    let burgers = envelope_preserved(&snaps, &env)?;
    Ok(Check {
        passed: event.is_some() && burgers.preserved,
        measured: format!(
            "KP blow-up at t={}, damped Burgers preserved={} (h5 {h5:.3})",
            event.map_or("none".to_string(), |e| format!("{:.4}", e.time)),
            burgers.preserved
        ),
        required: format!("KP crosses ratio {} and Burgers stays in its envelope", tol.kp_ratio),
        details: json!({ "kp_event": event, "burgers_worst_margin": burgers.worst_margin, "rho": rho, "h5": h5 }),
    })
}

// 13
fn forced_cascade(tol: &Tolerances) -> Result<Check> {
    let lat = Lattice::new(3, 4, 1.0)?;
    let p = FluidParams::for_lattice(&lat, 0.0)?;
    let spec = ForcingSpec::counterexample(0.1, 1.0);
    // Snapshots every 5 steps up to t = 0.25; beyond that the truncated
    // inviscid system saturates and the fitted exponent pins at 0.
    let (dt, steps, every) = (0.01, 25, 5);
    let negative: Vec<usize> = (0..lat.len()).filter(|&k| lat.coords(k).iter().all(|&a| a < 0)).collect();
    let mut v = ModeField::zeros(&lat);
    let mut exps = Vec::new();
    let mut neg_zero = true;
    for k in 0..steps {
        v = counterexample_euler_step(&v, &p, &spec, k as f64 * dt, dt)?;
        for i in 0..lat.dim() {
            neg_zero &= negative.iter().all(|&m| v.at(i, m) == Complex64::new(0.0, 0.0));
        }
        if (k + 1) % every == 0 {
            exps.push(envelope_fit(&v)?.envelope.s);
        }
    }
    let mut best = 1usize;
    let mut cur = 1usize;
    for w in exps.windows(2) {
        cur = if w[1] < w[0] { cur + 1 } else { 1 };
        best = best.max(cur);
    }
    Ok(Check {
        passed: best >= tol.cascade_run && neg_zero,
        measured: format!("longest decreasing run {best}, exponents {exps:.3?}, negative orthant zero={neg_zero}"),
        required: format!("≥ {} consecutive decreasing fits, negative orthant exactly 0", tol.cascade_run),
        details: json!({ "exponents": exps, "longest_run": best, "negative_orthant_zero": neg_zero }),
    })
}

// 14
fn long_run_decay(tol: &Tolerances) -> Result<Check> {
    let lat = Lattice::new(3, 4, 1.0)?;
    let p = FluidParams::for_lattice(&lat, 0.5)?;
    let v0 = ns_invariant_field(&lat, 14)?;
    let (dt, steps) = (0.01, 2000);
    let mut v = v0.clone();
    let mut l2 = vec![(0.0, v.l2_norm())];
    for k in 0..steps {
        v = trotter_step(&v, &p, Nonlinearity::NavierStokes, None, dt, TrotterVariant::FirstOrder)?;
        l2.push(((k + 1) as f64 * dt, v.l2_norm()));
    }
    let ratio = v.sup_norm() / v0.sup_norm();
    let after: Vec<f64> = l2.iter().filter(|(t, _)| *t >= 2.0).map(|(_, x)| *x).collect();
    let monotone = after.windows(2).all(|w| w[1] <= w[0]);
    Ok(Check {
        passed: ratio <= tol.decay_fraction && monotone,
        measured: format!("sup ratio {ratio:.2e}, ℓ² non-increasing after t=2: {monotone}"),
        required: format!("sup ≤ {} × initial at T=20, monotone ℓ²", tol.decay_fraction),
        details: json!({ "sup_ratio": ratio, "monotone": monotone, "final_l2": v.l2_norm() }),
    })
}
