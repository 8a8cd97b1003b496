//! Simulation, reconstruction and LED misalignment correction for Fourier
//! ptychographic microscopy.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anneal;
pub mod correction;
pub mod error;
pub mod field;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod recon;

pub use error::{FpmError, Result};
