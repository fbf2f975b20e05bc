//! Finite bosonic Su-Schrieffer-Heeger chain realized as a chain of
//! lumped-element superconducting resonators.
//!
//! The crate is split along the physical pipeline:
//!
//! * [`model`] holds the circuit and tight-binding descriptions and the
//!   mapping between them.
//! * [`spectral`] diagonalizes, labels edge/bulk modes and sweeps the
//!   coupling inductance.
//! * [`topology`] computes winding numbers, participation ratios,
//!   localization lengths and seeded disorder ensembles.
//! * [`microwave`] models the gate-tunable junctions and the two-port
//!   transmission through the ladder network.
//! * [`estimation`] fits circuit parameters to a list of eigenfrequencies.
//!
//! Units are GHz, nH and fF throughout the public data model.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod io;
pub mod microwave;
pub mod model;
pub mod spectral;
pub mod topology;

pub use error::{Error, Result};
pub use model::{ChainSpec, ChiralOperator, CircuitSpec};
pub use spectral::{ModeClassification, ModeLabel, PhaseTag, Spectrum};
