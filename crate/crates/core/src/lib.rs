#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Simulation suite for cold atoms bouncing on a phase-modulated evanescent
//! mirror under gravity: classical and quantum dynamics, Floquet spectra and
//! the distribution diagnostics used to study dynamical localization.

pub mod analysis;
pub mod classical;
pub mod error;
pub mod floquet;
pub mod model;
pub mod quantum;
pub mod units;

pub use error::{Error, Result};
pub use units::{DimensionlessParams, PhysicalParams};
