//! Joint transmit beamforming and active-RIS reflection design under
//! transceiver distortion and RIS phase noise.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`] – Hermitian eigendecomposition, shifted pseudo-inverse
//!   solves and a monotone bisection routine.
//! * [`scenario`] / [`config`] – geometry, path loss, Rician channel draws and
//!   the flat key-value configuration format.
//! * [`hwi`] – transmit distortion, receive distortion and phase-noise
//!   statistics.
//! * [`rate`] – phase-noise-averaged effective channels, SINR, rates and the
//!   power accounting, plus a Monte-Carlo rate estimator.
//! * [`fp`] – quadratic-transform auxiliary variables and the two quadratic
//!   block subproblems.
//! * [`beamformer`] – majorized beamforming subproblem solved by Lagrangian
//!   dual bisection.
//! * [`reflection`] – majorized reflection subproblem solved by a price
//!   mechanism and element-wise closed-form updates.
//! * [`orchestrator`] – the alternating outer loop and baseline schemes.
//! * [`validation`] – independent oracles (Monte-Carlo, finite differences,
//!   exhaustive grids) used to check the closed forms.

pub mod beamformer;
pub mod config;
pub mod error;
pub mod fp;
pub mod hwi;
pub mod numerics;
pub mod orchestrator;
pub mod rate;
pub mod reflection;
pub mod scenario;
pub mod validation;

pub use error::{Error, Result};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Seeds a ChaCha stream for trial `stream` of experiment `seed`.
pub fn seeded_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
pub(crate) fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}
