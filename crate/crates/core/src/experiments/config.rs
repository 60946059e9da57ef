//! TOML run configuration.
//!
//! A config names one experiment. Sections that a model does not use are
//! ignored; sections it needs must be present, and validation reports every
//! missing or malformed field by its dotted path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dilatation::{ChartMode, DilatationChart};
use crate::dynamics::{ForcingKind, ForcingSpec, Nonlinearity};
use crate::error::{Error, Result};
use crate::kernels::{LevySampling, MuPrime};
use crate::steppers::{Scheme, StepPlan};
use crate::testbeds::{ScalarOdeConfig, ShellConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Ns,
    Euler,
    Burgers,
    DampedComparison,
    Ode,
    Kp,
    ForcedCounterexample,
    KernelChecks,
}

impl Model {
    fn uses_lattice(self) -> bool {
        matches!(
            self,
            Model::Ns | Model::Euler | Model::Burgers | Model::DampedComparison | Model::ForcedCounterexample
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: i64,
    #[serde(default = "one")]
    pub l: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidConfig {
    #[serde(default)]
    pub nu: f64,
}

/// Chart section. Without `rho` the run picks the largest admissible step
/// size from the estimated constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartConfig {
    #[serde(default)]
    pub t0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default = "one")]
    pub lambda: f64,
    pub mode: ChartMode,
}

impl ChartConfig {
    pub fn chart(&self, rho: f64) -> DilatationChart {
        DilatationChart { t0: self.t0, rho, lambda: self.lambda, mode: self.mode }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Zero,
    Envelope,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    pub kind: InitialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default)]
    pub zero_mean: bool,
    /// Leray-project the generated field; defaults to true for NS and Euler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project: Option<bool>,
    /// Field file for `kind = "file"`, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConfig {
    pub c: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    /// Sobolev orders of the recorded `h^s` norms.
    #[serde(default)]
    pub norms: Vec<f64>,
    #[serde(default = "one_usize")]
    pub cadence: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blowup_ratio: Option<f64>,
}

fn one_usize() -> usize {
    1
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig { norms: vec![], cadence: 1, envelope: None, blowup_ratio: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeSection {
    #[serde(flatten)]
    pub params: ScalarOdeConfig,
    /// `|x|` at which the run stops and records a blow-up.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    1e8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSection {
    pub n: usize,
    pub rho: f64,
    pub nu: f64,
    pub mu_prime: MuPrime,
    #[serde(default)]
    pub levy: Option<LevySampling>,
    /// `(σ, s)` pairs at which the kernel mass is checked.
    #[serde(default)]
    pub mass_points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub id: String,
    pub model: Model,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the output root; defaults to `id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Treat a blow-up as the expected outcome (exit status 0).
    #[serde(default)]
    pub expect_blowup: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<Nonlinearity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fluid: Option<FluidConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<ForcingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<StepPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode: Option<OdeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kp: Option<ShellConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSection>,
}

fn prefixed(err: Error, errs: &mut Vec<String>) {
    match err {
        Error::Validation(v) => errs.extend(v),
        e => errs.push(e.to_string()),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Validation(vec![e.message().to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and validate a config; a relative `initial.path` is resolved
    /// against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(init) = cfg.initial.as_mut() {
            if let (Some(p), Some(dir)) = (init.path.as_mut(), path.parent()) {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Nonlinearity used by the lattice models.
    pub fn effective_nonlinearity(&self) -> Nonlinearity {
        match self.model {
            Model::Ns | Model::Euler | Model::ForcedCounterexample => Nonlinearity::NavierStokes,
            Model::Burgers => Nonlinearity::Burgers,
            _ => self.nonlinearity.unwrap_or(Nonlinearity::Burgers),
        }
    }

    pub fn output_subdir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(&self.id))
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.id.trim().is_empty() {
            errs.push("id must be a non-empty string".into());
        }
        let m = self.model;
        if m.uses_lattice() {
            match &self.lattice {
                None => errs.push("lattice section is required for this model".into()),
                Some(l) => {
                    if l.n == 0 || l.n > crate::dynamics::MAX_DIM {
                        errs.push(format!("lattice.n must lie in 1..={}, got {}", crate::dynamics::MAX_DIM, l.n));
                    }
                    if l.m < 0 {
                        errs.push(format!("lattice.M must be >= 0, got {}", l.m));
                    }
                    if !(l.l > 0.0 && l.l.is_finite()) {
                        errs.push(format!("lattice.l must be > 0, got {}", l.l));
                    }
                }
            }
            match &self.plan {
                None => errs.push("plan section is required for this model".into()),
                Some(p) => {
                    if let Err(e) = p.validate() {
                        prefixed(e, &mut errs);
                    }
                }
            }
            if m != Model::ForcedCounterexample {
                match &self.initial {
                    None => errs.push("initial section is required for this model".into()),
                    Some(init) => validate_initial(init, &mut errs),
                }
            }
            let nu = self.fluid.as_ref().map_or(0.0, |f| f.nu);
            if !(nu >= 0.0 && nu.is_finite()) {
                errs.push(format!("fluid.nu must be >= 0, got {nu}"));
            }
            if m == Model::Euler && nu != 0.0 {
                errs.push("fluid.nu must be 0 (or absent) for the euler model".into());
            }
        }
        if let Some(f) = &self.forcing {
            if let Some(l) = &self.lattice {
                if let Err(e) = f.validate(l.n) {
                    prefixed(e, &mut errs);
                }
            }
            let allowed = match m {
                Model::Ns | Model::Euler => f.kind != ForcingKind::DynamicCounterexample,
                Model::ForcedCounterexample => true,
                _ => f.kind == ForcingKind::None,
            };
            if !allowed {
                errs.push(format!("forcing.kind {:?} is not supported for model {:?}", f.kind, m));
            }
        }
        if let (Some(f), Some(p)) = (&self.forcing, &self.plan) {
            if f.kind != ForcingKind::None
                && matches!(p.scheme, Scheme::TrotterFirstOrder | Scheme::TrotterExactExp)
            {
                errs.push("plan.scheme: Trotter schemes do not take forcing; use euler or rk4".into());
            }
        }
        match m {
            Model::ForcedCounterexample => {
                match &self.forcing {
                    Some(f) if f.kind == ForcingKind::DynamicCounterexample => {}
                    _ => errs.push("forcing.kind must be \"dynamic_counterexample\" for this model".into()),
                }
                if let Some(p) = &self.plan {
                    if p.scheme != Scheme::Euler {
                        errs.push("plan.scheme must be \"euler\" for forced_counterexample".into());
                    }
                }
            }
            Model::DampedComparison => match &self.chart {
                None => errs.push("chart section is required for damped_comparison".into()),
                Some(c) => {
                    if let Err(e) = c.chart(c.rho.unwrap_or(1.0)).validate() {
                        prefixed(e, &mut errs);
                    }
                }
            },
            Model::Ode => match &self.ode {
                None => errs.push("ode section is required for model ode".into()),
                Some(o) => {
                    if let Err(e) = o.params.validate() {
                        prefixed(e, &mut errs);
                    }
                    if !(o.threshold > 0.0) {
                        errs.push(format!("ode.threshold must be > 0, got {}", o.threshold));
                    }
                    match &self.plan {
                        None => errs.push("plan section is required for model ode".into()),
                        Some(p) => {
                            if let Err(e) = p.validate() {
                                prefixed(e, &mut errs);
                            }
                        }
                    }
                }
            },
            Model::Kp => {
                match &self.kp {
                    None => errs.push("kp section is required for model kp".into()),
                    Some(k) => {
                        if let Err(e) = k.validate() {
                            prefixed(e, &mut errs);
                        }
                    }
                }
                match &self.plan {
                    None => errs.push("plan section is required for model kp".into()),
                    Some(p) => {
                        if let Err(e) = p.validate() {
                            prefixed(e, &mut errs);
                        }
                    }
                }
            }
            Model::KernelChecks => match &self.kernel {
                None => errs.push("kernel section is required for kernel_checks".into()),
                Some(k) => {
                    if let Err(e) = crate::kernels::GaussianKernel::new(k.n, k.rho, k.nu, k.mu_prime) {
                        prefixed(e, &mut errs);
                    }
                    for (i, [sigma, s]) in k.mass_points.iter().enumerate() {
                        if !(sigma > s) {
                            errs.push(format!("kernel.mass_points[{i}] needs σ > s"));
                        }
                    }
                }
            },
            _ => {}
        }
        let d = &self.diagnostics;
        if d.cadence == 0 {
            errs.push("diagnostics.cadence must be >= 1".into());
        }
        if d.norms.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            errs.push("diagnostics.norms entries must be finite and >= 0".into());
        }
        if let Some(e) = &d.envelope {
            if !(e.c > 0.0 && e.s >= 0.0) {
                errs.push("diagnostics.envelope needs c > 0 and s >= 0".into());
            }
        }
        if let Some(r) = d.blowup_ratio {
            if !(r > 1.0) {
                errs.push(format!("diagnostics.blowup_ratio must exceed 1, got {r}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

fn validate_initial(init: &InitialConfig, errs: &mut Vec<String>) {
    match init.kind {
        InitialKind::Zero => {}
        InitialKind::Envelope => {
            match init.c {
                Some(c) if c > 0.0 && c.is_finite() => {}
                _ => errs.push("initial.c must be given and > 0 for kind = \"envelope\"".into()),
            }
            match init.s {
                Some(s) if s >= 0.0 && s.is_finite() => {}
                _ => errs.push("initial.s must be given and >= 0 for kind = \"envelope\"".into()),
            }
        }
        InitialKind::File => {
            if init.path.is_none() {
                errs.push("initial.path is required for kind = \"file\"".into());
            }
        }
    }
}
