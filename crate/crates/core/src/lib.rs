//! Spectral mode-space laboratory for time-dilatation (auto-control) schemes
//! on the torus.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dilatation;
pub mod dynamics;
pub mod experiments;
pub mod error;
pub mod kernels;
pub mod lattice;
pub mod par;
pub mod quadrature;
pub mod steppers;
pub mod testbeds;

pub use error::{Error, Result};
pub use lattice::{DecayEnvelope, Lattice, ModeField, ModeIndex};
pub use par::Exec;
