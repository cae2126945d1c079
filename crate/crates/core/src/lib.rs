//! Solitary waves of fractional KdV and BBM equations.
//!
//! Profiles are computed by Petviashvili iteration on a periodic grid, their
//! linearized operators are assembled densely or applied matrix-free, and the
//! resulting spectra drive the stability criteria. Time evolution checks the
//! predictions against the nonlinear flow.

pub mod cli;
pub mod criteria;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod specops;
pub mod verify;
pub mod waves;

pub use error::{Error, Result};
