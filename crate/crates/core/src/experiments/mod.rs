//! Run configuration, experiment execution and the acceptance registry.

pub mod config;
pub mod run;
pub mod verify;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dilatation::DilatationChart;
use crate::error::Result;
use crate::lattice::{DecayEnvelope, Lattice, ModeField};
use crate::steppers::{estimate_constants, step_size_bound, ContractionConstants, EstimationSpec};

pub use config::RunConfig;
pub use run::{run, verify_manifest, RunManifest};
pub use verify::{verify, Suite, Tolerances, VerifyReport};

/// Slack `ε` subtracted in the step-size numerator.
pub const STEP_EPS: f64 = 1e-12;

/// Seeded envelope field `|v_{iα}| = C/(1+|α|^s)` with random phases,
/// reality-symmetric, optionally with zero mean and Leray-projected.
pub fn envelope_initial(
    lat: &Lattice,
    env: &DecayEnvelope,
    seed: u64,
    zero_mean: bool,
    project: bool,
) -> Result<ModeField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = ModeField::from_envelope(lat, env, &mut rng);
    if zero_mean {
        let c = lat.center();
        for i in 0..lat.dim() {
            *v.at_mut(i, c) = num_complex::Complex64::new(0.0, 0.0);
        }
    }
    if project {
        v = v.leray_project()?;
    }
    Ok(v)
}

/// Estimated constants for `u0` on the half horizon and the largest
/// admissible `ρ` (capped at 1), with `C = ‖u0‖_{h^2}`.
pub fn admissible_rho(
    u0: &ModeField,
    chart: &DilatationChart,
    seed: u64,
) -> Result<(f64, ContractionConstants)> {
    let lat = u0.lattice();
    let spec = EstimationSpec { chart: *chart, c: u0.hs_norm(2.0), seed, ..Default::default() };
    let k = estimate_constants(lat.dim(), lat.trunc(), &spec)?;
    let rho = step_size_bound(&k, lat.dim(), STEP_EPS)?.min(1.0);
    Ok((rho, k))
}
