//! Smooth, band-limited control pulses for a driven two-level system.
//!
//! Pulse design by robustness-averaged gradient ascent, verification by
//! simulation (time-slice and Floquet propagators, fidelity landscapes,
//! simulated process tomography) and spin-echo magnetometry modelling.

pub mod builtin;
pub mod ensemble;
pub mod error;
pub mod gradients;
pub mod io;
pub mod linalg;
pub mod magnetometry;
mod minimize;
pub mod objectives;
pub mod optimizer;
pub mod propagation;
pub mod pulse;
pub mod qpt;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
