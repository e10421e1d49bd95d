//! Transceiver distortion and RIS phase-noise statistics.
//!
//! Transmit and receive distortions are zero-mean circular Gaussians whose
//! power tracks the signal power. RIS phase errors are i.i.d. uniform on
//! `[-π/2, π/2]`, which gives `E{φ*} = (2/π)·1` and `E{φφᴴ} = I + J` with
//! `J` holding `4/π²` off the diagonal.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::complex_gaussian;
use crate::{CMat, CVec};

/// Distortion and noise parameters shared by the rate model and solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareModel {
    pub kappa_t: f64,
    pub kappa_r: Vec<f64>,
    /// RIS dynamic-noise power, W.
    pub sigma_d_sq: f64,
    /// Receiver noise power per user, W.
    pub sigma_sq: Vec<f64>,
}

impl HardwareModel {
    pub fn ideal(n_users: usize, sigma_sq: f64) -> Self {
        Self {
            kappa_t: 0.0,
            kappa_r: vec![0.0; n_users],
            sigma_d_sq: 0.0,
            sigma_sq: vec![sigma_sq; n_users],
        }
    }
}

/// First and second moments of the phase-error vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseNoiseStats {
    pub second_moment: CMat,
    pub mean_conj_scale: f64,
    pub dd_scale: f64,
}

impl PhaseNoiseStats {
    pub fn new(m: usize) -> Self {
        Self {
            second_moment: phase_noise_second_moment(m),
            mean_conj_scale: MEAN_CONJ_SCALE,
            dd_scale: DD_SCALE,
        }
    }
}

/// `E{φ_m*}` for a uniform phase error on `[-π/2, π/2]`.
pub const MEAN_CONJ_SCALE: f64 = 2.0 / PI;

/// `E{φ_iφ_j*}` for `i ≠ j`.
pub const CROSS_MOMENT: f64 = 4.0 / (PI * PI);

/// Diagonal of `DDᵀ`, the part of `I + J` not explained by the mean.
pub const DD_SCALE: f64 = 1.0 - 4.0 / (PI * PI);

/// `κ_t·diag(WWᴴ)` as a dense diagonal matrix.
pub fn transmit_distortion_cov(w: &CMat, kappa_t: f64) -> CMat {
    let powers = row_powers(w);
    CMat::from_diagonal(&CVec::from_iterator(
        powers.len(),
        powers.iter().map(|&p| Complex64::new(kappa_t * p, 0.0)),
    ))
}

/// Per-antenna transmit powers `Σ_k |W_{n,k}|²`.
pub fn row_powers(w: &CMat) -> Vec<f64> {
    w.row_iter().map(|r| r.norm_squared()).collect()
}

pub fn phase_noise_sample<R: Rng + ?Sized>(m: usize, rng: &mut R) -> CVec {
    CVec::from_fn(m, |_, _| {
        let theta = rng.random_range(-FRAC_PI_2..=FRAC_PI_2);
        Complex64::from_polar(1.0, theta)
    })
}

pub fn phase_noise_second_moment(m: usize) -> CMat {
    CMat::from_fn(m, m, |i, j| {
        Complex64::new(if i == j { 1.0 } else { CROSS_MOMENT }, 0.0)
    })
}

pub fn receive_distortion_power(signal_power: f64, kappa_r: f64) -> f64 {
    kappa_r * signal_power
}

/// One draw of the transmit distortion `η_t ~ CN(0, κ_t·diag(WWᴴ))`.
pub fn sample_transmit_distortion<R: Rng + ?Sized>(w: &CMat, kappa_t: f64, rng: &mut R) -> CVec {
    let powers = row_powers(w);
    CVec::from_iterator(
        powers.len(),
        powers.iter().map(|&p| complex_gaussian(rng) * (kappa_t * p).sqrt()),
    )
}

/// One draw of the receive distortion `η_r ~ CN(0, κ_r·signal_power)`.
pub fn sample_receive_distortion<R: Rng + ?Sized>(signal_power: f64, kappa_r: f64, rng: &mut R) -> Complex64 {
    complex_gaussian(rng) * receive_distortion_power(signal_power, kappa_r).sqrt()
}
