//! Executing a [`RunConfig`] and writing its artifacts.
//!
//! Every run writes into `<root>/<output_dir>`: `series.csv` (norm series),
//! `report.json` (model-specific summary), `final_field.json` for lattice
//! models, and `manifest.json` listing the others with SHA-256 digests.
//! Everything except the manifest's timing fields is a pure function of the
//! config.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::admissible_rho;
use super::config::{InitialKind, Model, RunConfig};
use crate::diagnostics::{blowup_detect, envelope_fit, BlowupReason, NormSeries};
use crate::dilatation::DilatationChart;
use crate::dynamics::{
    base_rhs, counterexample_euler_step, damped_rhs, ns_rhs, FluidParams, ForcingKind, ForcingSpec,
};
use crate::error::{Error, Result};
use crate::kernels::{gaussian_mass, levy_term_bound_check, GaussianKernel};
use crate::lattice::{DecayEnvelope, FieldRecord, Lattice, ModeField};
use crate::steppers::{
    advance, euler_step, rk4_step, trotter_step, ContractionConstants, Scheme, TrotterVariant,
};
use crate::testbeds::{kp_run, ode_blowup_estimate, rk4_scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    /// `blowup`, `envelope_violation`, `note`.
    pub kind: String,
    pub time: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BlowUp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub version: String,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub constants: Option<ContractionConstants>,
    pub rho: Option<f64>,
    pub status: RunStatus,
    pub events: Vec<RunEvent>,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    /// 0 for a clean run or an expected blow-up, 3 for an unexpected one.
    pub fn exit_code(&self) -> i32 {
        if self.status == RunStatus::BlowUp && !self.config.expect_blowup {
            3
        } else {
            0
        }
    }
}

struct Outcome {
    series: Option<NormSeries>,
    final_field: Option<ModeField>,
    report: serde_json::Value,
    events: Vec<RunEvent>,
    blowup: bool,
    constants: Option<ContractionConstants>,
    rho: Option<f64>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_output(dir: &Path, name: &str, bytes: &[u8], inventory: &mut Vec<OutputFile>) -> Result<()> {
    std::fs::write(dir.join(name), bytes)?;
    inventory.push(OutputFile { name: name.into(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
    Ok(())
}

/// Run `cfg` with outputs under `root`, returning the written manifest.
pub fn run(cfg: &RunConfig, root: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let start = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let out = match cfg.model {
        Model::Ode => run_ode(cfg)?,
        Model::Kp => run_kp(cfg)?,
        Model::KernelChecks => run_kernel(cfg)?,
        _ => run_lattice(cfg)?,
    };
    let dir = root.join(cfg.output_subdir());
    std::fs::create_dir_all(&dir)?;
    let mut outputs = Vec::new();
    if let Some(series) = &out.series {
        let mut buf = Vec::new();
        series.write_csv(&mut buf)?;
        write_output(&dir, "series.csv", &buf, &mut outputs)?;
    }
    if let Some(field) = &out.final_field {
        write_output(&dir, "final_field.json", &serde_json::to_vec_pretty(&field.to_json())?, &mut outputs)?;
    }
    write_output(&dir, "report.json", &serde_json::to_vec_pretty(&out.report)?, &mut outputs)?;
    let manifest = RunManifest {
        config: cfg.clone(),
        version: format!("autoctl {}", env!("CARGO_PKG_VERSION")),
        started_unix,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        constants: out.constants,
        rho: out.rho,
        status: if out.blowup { RunStatus::BlowUp } else { RunStatus::Completed },
        events: out.events,
        outputs,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Re-hash every file listed in a manifest. Returns the names that are
/// missing or whose digest no longer matches.
pub fn verify_manifest(path: &Path) -> Result<Vec<String>> {
    let manifest: RunManifest = serde_json::from_slice(&std::fs::read(path)?)?;
    let dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let mut bad = Vec::new();
    for f in &manifest.outputs {
        match std::fs::read(dir.join(&f.name)) {
            Ok(bytes) if sha256_hex(&bytes) == f.sha256 => {}
            _ => bad.push(f.name.clone()),
        }
    }
    Ok(bad)
}

fn initial_field(cfg: &RunConfig, lat: &Lattice) -> Result<ModeField> {
    let default_project = matches!(cfg.model, Model::Ns | Model::Euler);
    let Some(init) = &cfg.initial else {
        return Ok(ModeField::zeros(lat));
    };
    match init.kind {
        InitialKind::Zero => Ok(ModeField::zeros(lat)),
        InitialKind::Envelope => {
            let env = DecayEnvelope::new(init.c.unwrap_or(1.0), init.s.unwrap_or(0.0))?;
            super::envelope_initial(lat, &env, cfg.seed, init.zero_mean, init.project.unwrap_or(default_project))
        }
        InitialKind::File => {
            let path = init.path.as_ref().ok_or_else(|| Error::Validation(vec!["initial.path is required".into()]))?;
            let rec: FieldRecord = serde_json::from_slice(&std::fs::read(path)?)?;
            let v = ModeField::from_json(&rec)?;
            if v.lattice() != lat {
                return Err(Error::Validation(vec![format!(
                    "initial.path: field lattice (n={}, M={}, l={}) does not match the lattice section",
                    rec.n, rec.m, rec.l
                )]));
            }
            Ok(v)
        }
    }
}

fn run_lattice(cfg: &RunConfig) -> Result<Outcome> {
    let lc = cfg.lattice.as_ref().expect("validated");
    let plan = cfg.plan.expect("validated");
    let lat = Lattice::new(lc.n, lc.m, lc.l)?;
    let nu = cfg.fluid.as_ref().map_or(0.0, |f| f.nu);
    let p = FluidParams::for_lattice(&lat, nu)?;
    let kind = cfg.effective_nonlinearity();
    let forcing = cfg.forcing.clone().unwrap_or_else(ForcingSpec::none);
    let v0 = if cfg.model == Model::ForcedCounterexample && cfg.initial.is_none() {
        ModeField::zeros(&lat)
    } else {
        initial_field(cfg, &lat)?
    };

    let mut constants = None;
    let mut rho = None;
    let chart: Option<DilatationChart> = match (&cfg.chart, cfg.model) {
        (Some(cc), Model::DampedComparison) => {
            let r = match cc.rho {
                Some(r) => r,
                None => {
                    let probe = cc.chart(1.0);
                    let (r, k) = admissible_rho(&v0, &probe, cfg.seed)?;
                    constants = Some(k);
                    r
                }
            };
            rho = Some(r);
            Some(cc.chart(r))
        }
        _ => None,
    };

    let rhs = |w: &ModeField, t: f64| -> Result<ModeField> {
        match (chart.as_ref(), cfg.model) {
            (Some(ch), _) => damped_rhs(w, ch, t, &p, kind),
            (None, Model::Ns | Model::Euler) => ns_rhs(w, &p, &forcing, t),
            (None, _) => base_rhs(w, &p, kind),
        }
    };
    let dt = plan.dt;
    let step = |v: &ModeField, k: usize| -> Result<ModeField> {
        let t = k as f64 * dt;
        match plan.scheme {
            Scheme::Euler if cfg.model == Model::ForcedCounterexample => {
                counterexample_euler_step(v, &p, &forcing, t, dt)
            }
            Scheme::Euler => euler_step(v, |w| rhs(w, t), dt),
            Scheme::Rk4 => {
                let stage_times = [t, t + 0.5 * dt, t + 0.5 * dt, t + dt];
                let mut stage = 0;
                rk4_step(
                    v,
                    |w| {
                        let ts = stage_times[stage.min(3)];
                        stage += 1;
                        rhs(w, ts)
                    },
                    dt,
                )
            }
            Scheme::TrotterFirstOrder | Scheme::TrotterExactExp => {
                let variant = if plan.scheme == Scheme::TrotterExactExp {
                    TrotterVariant::ExactExp
                } else {
                    TrotterVariant::FirstOrder
                };
                trotter_step(v, &p, kind, chart.as_ref().map(|c| (c, t)), dt, variant)
            }
        }
    };

    let diag = &cfg.diagnostics;
    let env = diag.envelope.as_ref().map(|e| DecayEnvelope::new(e.c, e.s)).transpose()?;
    let mut series = NormSeries::new(&diag.norms);
    series.record(0.0, &v0)?;
    let mut events = Vec::new();
    let mut worst_margin = env.map(|e| e.margin(&v0));
    let mut first_violation = env.and_then(|e| (!e.satisfied(&v0)).then_some(0.0));
    let mut fits = Vec::new();
    let track_fits = cfg.model == Model::ForcedCounterexample;
    let traj = advance(v0.clone(), plan.steps, step, |k, v| {
        if k % diag.cadence == 0 || k == plan.steps {
            let t = k as f64 * dt;
            series.record(t, v)?;
            if let Some(e) = env {
                let m = e.margin(v);
                worst_margin = worst_margin.map(|w| w.min(m));
                if first_violation.is_none() && !e.satisfied(v) {
                    first_violation = Some(t);
                }
            }
            if track_fits && !v.is_zero() {
                fits.push((t, envelope_fit(v)?.envelope.s));
            }
        }
        Ok(())
    })?;

    let mut blowup = false;
    if let Some((k, last)) = traj.blowup {
        let t = (k + 1) as f64 * dt;
        series.nonfinite_at = Some(t);
        blowup = true;
        events.push(RunEvent {
            kind: "blowup".into(),
            time: Some(t),
            detail: format!("non-finite state at step {}, last finite l2 norm {last:e}", k + 1),
        });
    } else if let Some(ratio) = diag.blowup_ratio {
        if let Some(ev) = blowup_detect(&series, ratio)? {
            blowup = true;
            events.push(RunEvent {
                kind: "blowup".into(),
                time: Some(ev.time),
                detail: format!("l2 norm {:e} exceeds {ratio} × initial {:e}", ev.value, ev.initial),
            });
        }
    }
    if let Some(t) = first_violation {
        events.push(RunEvent {
            kind: "envelope_violation".into(),
            time: Some(t),
            detail: format!("worst relative margin {:e}", worst_margin.unwrap_or(f64::NAN)),
        });
    }
    let last = &traj.last;
    let fit = if last.is_zero() { None } else { Some(envelope_fit(last)?) };
    let report = json!({
        "model": cfg.model,
        "nonlinearity": kind,
        "completed_steps": traj.completed_steps,
        "final_time": traj.completed_steps as f64 * dt,
        "final_l2": last.l2_norm(),
        "final_sup": last.sup_norm(),
        "final_envelope_fit": fit,
        "envelope_worst_margin": worst_margin,
        "envelope_preserved": env.map(|_| first_violation.is_none()),
        "fitted_exponents": if track_fits { json!(fits) } else { serde_json::Value::Null },
        "forcing": (forcing.kind != ForcingKind::None).then_some(&forcing),
        "chart": chart,
    });
    Ok(Outcome {
        series: Some(series),
        final_field: Some(traj.last),
        report,
        events,
        blowup,
        constants,
        rho,
    })
}

fn run_ode(cfg: &RunConfig) -> Result<Outcome> {
    let ode = cfg.ode.as_ref().expect("validated");
    let plan = cfg.plan.expect("validated");
    let c = ode.params;
    let f = |_t: f64, x: f64| c.rhs(x);
    let mut series = NormSeries::new(&[]);
    let mut x = c.x0;
    series.record_values(0.0, x.abs(), vec![], x.abs())?;
    let mut events = Vec::new();
    let mut blowup = false;
    for k in 0..plan.steps {
        let t = k as f64 * plan.dt;
        let next = rk4_scalar(&f, t, x, plan.dt);
        let t1 = t + plan.dt;
        if !next.is_finite() || next.abs() > ode.threshold {
            blowup = true;
            // Linear interpolation of the crossing inside the last step.
            let when = if next.is_finite() {
                t + plan.dt * (ode.threshold - x.abs()) / (next.abs() - x.abs())
            } else {
                t1
            };
            events.push(RunEvent {
                kind: "blowup".into(),
                time: Some(when),
                detail: format!("|x| crossed {:e}", ode.threshold),
            });
            if next.is_finite() {
                series.record_values(t1, next.abs(), vec![], next.abs())?;
            } else {
                series.nonfinite_at = Some(t1);
            }
            break;
        }
        x = next;
        if (k + 1) % cfg.diagnostics.cadence == 0 || k + 1 == plan.steps {
            series.record_values(t1, x.abs(), vec![], x.abs())?;
        }
    }
    let estimate = if blowup { ode_blowup_estimate(&c, plan.dt, ode.threshold).ok() } else { None };
    let report = json!({
        "model": "ode",
        "params": c,
        "analytic_blowup_time": c.blowup_time(),
        "blowup_estimate": estimate,
    });
    Ok(Outcome { series: Some(series), final_field: None, report, events, blowup, constants: None, rho: None })
}

fn run_kp(cfg: &RunConfig) -> Result<Outcome> {
    let kp = cfg.kp.as_ref().expect("validated");
    let plan = cfg.plan.expect("validated");
    let (series, state) = kp_run(kp, plan.dt, plan.steps, cfg.diagnostics.cadence)?;
    let ratio = cfg.diagnostics.blowup_ratio.unwrap_or(10.0);
    let event = blowup_detect(&series, ratio)?;
    let events = event
        .iter()
        .map(|e| RunEvent {
            kind: "blowup".into(),
            time: Some(e.time),
            detail: match e.reason {
                BlowupReason::Threshold => format!("l2 norm {:e} exceeds {ratio} × initial {:e}", e.value, e.initial),
                BlowupReason::NonFinite => "non-finite shell amplitudes".into(),
            },
        })
        .collect();
    let report = json!({ "model": "kp", "params": kp, "final_state": state, "blowup": event });
    Ok(Outcome {
        series: Some(series),
        final_field: None,
        report,
        events,
        blowup: event.is_some(),
        constants: None,
        rho: None,
    })
}

fn run_kernel(cfg: &RunConfig) -> Result<Outcome> {
    let ks = cfg.kernel.as_ref().expect("validated");
    let k = GaussianKernel::new(ks.n, ks.rho, ks.nu, ks.mu_prime)?;
    let masses = ks
        .mass_points
        .iter()
        .map(|&[sigma, s]| Ok(json!({ "sigma": sigma, "s": s, "mass": gaussian_mass(&k, sigma, s, 16)? })))
        .collect::<Result<Vec<_>>>()?;
    let levy = ks.levy.map(|grid| levy_term_bound_check(&k, &grid)).transpose()?;
    let mut events = Vec::new();
    if let Some(l) = &levy {
        if l.violations > 0 {
            events.push(RunEvent { kind: "note".into(), time: None, detail: format!("{} bound violations", l.violations) });
        }
    }
    let report = json!({ "model": "kernel_checks", "kernel": k, "masses": masses, "levy": levy });
    Ok(Outcome { series: None, final_field: None, report, events, blowup: false, constants: None, rho: None })
}
