//! Damped wave (acoustic) systems on a staggered grid: generator, time
//! stepping, spectra, resolvent sweeps, observability Gramians and decay fits.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod damping;
pub mod decay;
pub mod error;
pub mod grid;
pub mod helmholtz;
pub mod initial;
pub mod linalg;
pub mod observability;
pub mod provenance;
pub mod semigroup;
pub mod spectral;

pub use error::{Error, Result};
