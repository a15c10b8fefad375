//! Thermal Bogoliubov initial states for Bose-Einstein condensates, including
//! the condensate (zero-momentum) mode regularized by a nonlinear chemical
//! potential, and truncated-Wigner / positive-P trajectory dynamics.
//!
//! The pipeline runs lattice -> mean field -> Bogoliubov modes -> thermal
//! Gaussian state -> phase-space samples -> evolution -> observables.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bogoliubov;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod lattice;
pub mod meanfield;
pub mod observables;
pub mod sampler;
pub mod thermal;

pub use error::{Error, Result};
pub use lattice::{build_lattice, Lattice};
