//! Simulation and analysis of cross-resonance coupling between two
//! flux-tunable transmons with variable detuning.
//!
//! Device parameters are ordinary frequencies in MHz and times are in
//! microseconds; propagators apply `exp(-i 2 pi H t)`.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod hilbert;
pub mod io;
pub mod model;
pub mod perturbation;
pub mod pipeline;

pub use error::{Error, ErrorCategory, Result};
