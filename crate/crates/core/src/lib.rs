//! Controlled mean-field jump processes on a truncated integer lattice.
//!
//! The crate computes fixed-point flows of McKean–Vlasov master equations,
//! solves entropic backward equations driven by a reference chain,
//! computes risk-sensitive optimal feedback controls and saddle points of
//! zero-sum games on finite control grids, and simulates the underlying
//! jump processes by thinning.

pub mod bsde;
pub mod control;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod game;
pub mod model;
pub mod simulate;
pub mod space;

pub use error::{Error, Result};
