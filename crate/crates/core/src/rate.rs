//! Phase-noise-averaged rate model and power accounting.
//!
//! Averaging over the RIS phase errors turns the cascaded channel of user
//! `k` into an `N×(M+1)` effective channel `Ḡ_k = [f̂_k, Ĝ_k]` whose Gram
//! matrix equals `E{g_k g_kᴴ}`. Everything the solvers need (rates, the FP
//! auxiliaries and both quadratic subproblems) is expressed through it.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hwi::{self, HardwareModel, MEAN_CONJ_SCALE};
use crate::scenario::{ChannelSet, ScenarioConfig};
use crate::{seeded_rng, CMat, CVec, Error, Result};

/// Transmit beamforming matrix, one column per user.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    pub w: CMat,
}

impl Beamformer {
    pub fn new(w: CMat) -> Self {
        Self { w }
    }

    pub fn zeros(n: usize, k: usize) -> Self {
        Self { w: CMat::zeros(n, k) }
    }

    /// Column stacking of `W`; entry `k·N + n` is `W[n, k]`.
    pub fn vectorize(&self) -> CVec {
        CVec::from_column_slice(self.w.as_slice())
    }

    pub fn from_vec(w: &CVec, n: usize, k: usize) -> Self {
        Self {
            w: CMat::from_column_slice(n, k, w.as_slice()),
        }
    }

    pub fn power(&self) -> f64 {
        self.w.norm_squared()
    }
}

/// Amplitudes and phases of the RIS elements, `ψ = a ⊙ e^{jφ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionCoefficients {
    pub a: Vec<f64>,
    pub phi: Vec<f64>,
}

impl ReflectionCoefficients {
    pub fn new(a: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if a.len() != phi.len() {
            return Err(Error::InvalidInput("amplitude and phase lengths differ".into()));
        }
        if a.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::InvalidInput("amplitudes must be finite and non-negative".into()));
        }
        let phi = phi.into_iter().map(wrap_phase).collect();
        Ok(Self { a, phi })
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            a: vec![0.0; m],
            phi: vec![0.0; m],
        }
    }

    pub fn from_psi(psi: &CVec) -> Self {
        Self {
            a: psi.iter().map(|z| z.norm()).collect(),
            phi: psi.iter().map(|z| wrap_phase(z.arg())).collect(),
        }
    }

    pub fn psi(&self) -> CVec {
        CVec::from_iterator(
            self.a.len(),
            self.a.iter().zip(&self.phi).map(|(&a, &p)| Complex64::from_polar(a, p)),
        )
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

pub fn wrap_phase(p: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = p.rem_euclid(tau);
    if r >= tau {
        0.0
    } else {
        r
    }
}

/// Per-user terms of the averaged SINR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBreakdown {
    /// Desired-signal power `w_kᴴ R_k w_k`.
    pub varpi1: f64,
    /// Total received signal plus transmit distortion, scaled by `1+κ_r`.
    pub varpi2: f64,
    /// RIS and receiver noise, scaled by `1+κ_r`.
    pub varpi3: f64,
    pub sinr_tilde: f64,
    /// bps/Hz.
    pub rate_tilde: f64,
}

/// `Ḡ_k = [f̂_k, Ĝ_k]`, `N×(M+1)`.
pub fn effective_channel(channels: &ChannelSet, psi: &CVec, k: usize) -> CMat {
    let (m, n) = channels.g.shape();
    let h = &channels.h[k];
    let dd = hwi::DD_SCALE.sqrt();
    let mut out = CMat::zeros(n, m + 1);
    // coeff_m = conj(ψ_m)·h_m weights the conjugated RIS row m.
    for mm in 0..m {
        let coeff = psi[mm].conj() * h[mm];
        if coeff == Complex64::new(0.0, 0.0) {
            continue;
        }
        for nn in 0..n {
            let gc = channels.g[(mm, nn)].conj() * coeff;
            out[(nn, 0)] += gc * MEAN_CONJ_SCALE;
            out[(nn, mm + 1)] = gc * dd;
        }
    }
    for nn in 0..n {
        out[(nn, 0)] += channels.f[k][nn];
    }
    out
}

/// `R_k = Ḡ_k Ḡ_kᴴ = E{g_k g_kᴴ}`.
pub fn effective_gram(channels: &ChannelSet, psi: &CVec, k: usize) -> CMat {
    let gbar = effective_channel(channels, psi, k);
    &gbar * gbar.adjoint()
}

/// `Σ_m |h_{k,m} ψ_m|²`, the RIS noise gain towards user `k`.
pub fn ris_noise_gain(channels: &ChannelSet, psi: &CVec, k: usize) -> f64 {
    channels.h[k]
        .iter()
        .zip(psi.iter())
        .map(|(h, p)| (h * p).norm_sqr())
        .sum()
}

/// Rate terms from a precomputed Gram matrix.
pub fn breakdown_from_gram(
    gram: &CMat,
    w: &CMat,
    k: usize,
    noise_gain: f64,
    hwi: &HardwareModel,
) -> Result<RateBreakdown> {
    let kappa_r = hwi.kappa_r[k];
    let rw = gram * w;
    let varpi1 = w.column(k).dotc(&rw.column(k)).re;
    let signal: f64 = (0..w.ncols()).map(|i| w.column(i).dotc(&rw.column(i)).re).sum();
    let powers = hwi::row_powers(w);
    let distortion: f64 = powers.iter().enumerate().map(|(n, p)| p * gram[(n, n)].re).sum();
    let varpi2 = (1.0 + kappa_r) * (signal + hwi.kappa_t * distortion);
    let varpi3 = (1.0 + kappa_r) * (hwi.sigma_d_sq * noise_gain + hwi.sigma_sq[k]);
    let denom = varpi2 + varpi3 - varpi1;
    if !(denom > 0.0) {
        return Err(Error::InvalidModel(format!(
            "interference-plus-noise term is not positive for user {k} ({varpi2:e} + {varpi3:e} - {varpi1:e})"
        )));
    }
    let sinr_tilde = varpi1.max(0.0) / denom;
    Ok(RateBreakdown {
        varpi1,
        varpi2,
        varpi3,
        sinr_tilde,
        rate_tilde: (1.0 + sinr_tilde).log2(),
    })
}

pub fn approx_average_rate(
    channels: &ChannelSet,
    w: &CMat,
    psi: &CVec,
    hwi: &HardwareModel,
    k: usize,
) -> Result<RateBreakdown> {
    let gram = effective_gram(channels, psi, k);
    breakdown_from_gram(&gram, w, k, ris_noise_gain(channels, psi, k), hwi)
}

pub fn rate_breakdowns(channels: &ChannelSet, w: &CMat, psi: &CVec, hwi: &HardwareModel) -> Result<Vec<RateBreakdown>> {
    (0..channels.n_users())
        .map(|k| approx_average_rate(channels, w, psi, hwi, k))
        .collect()
}

/// `Σ_k log2(1 + γ̃_k)` in bps/Hz.
pub fn sum_rate(channels: &ChannelSet, w: &CMat, psi: &CVec, hwi: &HardwareModel) -> Result<f64> {
    Ok(rate_breakdowns(channels, w, psi, hwi)?
        .iter()
        .map(|b| b.rate_tilde)
        .sum())
}

/// Cascaded channel for one phase-error draw: `g_k = GᴴΦᴴΨᴴh_k + f_k`.
pub fn instantaneous_channel(channels: &ChannelSet, psi: &CVec, phase: &CVec, k: usize) -> CVec {
    let h = &channels.h[k];
    let coeffs = CVec::from_iterator(psi.len(), (0..psi.len()).map(|m| (psi[m] * phase[m]).conj() * h[m]));
    channels.g.ad_mul(&coeffs) + &channels.f[k]
}

/// SINR of user `k` for a given phase-error realisation.
pub fn instantaneous_sinr(
    channels: &ChannelSet,
    w: &CMat,
    psi: &CVec,
    phase: &CVec,
    hwi: &HardwareModel,
    k: usize,
) -> Result<f64> {
    let g = instantaneous_channel(channels, psi, phase, k);
    let gains: Vec<f64> = (0..w.ncols()).map(|i| g.dotc(&w.column(i)).norm_sqr()).collect();
    let kappa_r = hwi.kappa_r[k];
    let powers = hwi::row_powers(w);
    let distortion: f64 = powers.iter().zip(g.iter()).map(|(p, gn)| p * gn.norm_sqr()).sum();
    let interference: f64 = gains.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, x)| x).sum();
    let noise = hwi.sigma_d_sq * ris_noise_gain(channels, psi, k) + hwi.sigma_sq[k];
    let denom =
        kappa_r * gains[k] + (1.0 + kappa_r) * hwi.kappa_t * distortion + (1.0 + kappa_r) * (interference + noise);
    if !(denom > 0.0) {
        return Err(Error::InvalidModel(format!(
            "SINR denominator is {denom:e} for user {k}"
        )));
    }
    Ok(gains[k] / denom)
}

/// Diagonal of `G(WWᴴ + κ_t·diag(WWᴴ))Gᴴ + σ_d²I`: per-element RIS output
/// power per unit squared amplitude.
pub fn amplification_weights(channels: &ChannelSet, w: &CMat, kappa_t: f64, sigma_d_sq: f64) -> Vec<f64> {
    let gw = &channels.g * w;
    let powers = hwi::row_powers(w);
    (0..channels.n_elements())
        .map(|m| {
            let signal = gw.row(m).norm_squared();
            let distortion: f64 = powers
                .iter()
                .enumerate()
                .map(|(n, p)| p * channels.g[(m, n)].norm_sqr())
                .sum();
            signal + kappa_t * distortion + sigma_d_sq
        })
        .collect()
}

/// RIS output power `ψᴴΛψ`; depends on the amplitudes only.
pub fn amplification_power(channels: &ChannelSet, w: &CMat, psi: &CVec, kappa_t: f64, sigma_d_sq: f64) -> f64 {
    amplification_weights(channels, w, kappa_t, sigma_d_sq)
        .iter()
        .zip(psi.iter())
        .map(|(l, p)| l * p.norm_sqr())
        .sum()
}

/// `ξ_T P_T + ξ_A P_A + P_BS + M(P_SW + P_DC)`.
pub fn total_power(p_t: f64, p_a: f64, config: &ScenarioConfig) -> f64 {
    config.xi_t * p_t + config.xi_a * p_a + config.p_bs + config.n_elements as f64 * (config.p_sw + config.p_dc)
}

/// Monte-Carlo estimate of the phase-noise-averaged sum rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

const MC_BLOCK: usize = 4096;

/// Welford accumulator with the pairwise merge of Chan et al.
#[derive(Debug, Clone, Copy, Default)]
struct RunningStats {
    count: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Self) -> Self {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let weight = other.count as f64 / count as f64;
        Self {
            count,
            mean: self.mean + delta * weight,
            m2: self.m2 + other.m2 + delta * delta * self.count as f64 * weight,
        }
    }
}

/// Averages `Σ_k log2(1 + γ_k(Φ))` over i.i.d. phase-error draws. Blocks of
/// trials run on independent streams derived from one draw of `rng`, so the
/// result does not depend on the thread count.
pub fn monte_carlo_rate<R: Rng + ?Sized>(
    channels: &ChannelSet,
    w: &CMat,
    psi: &CVec,
    hwi: &HardwareModel,
    trials: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::InvalidInput("monte_carlo_rate needs at least one trial".into()));
    }
    let base: u64 = rng.random();
    let blocks = trials.div_ceil(MC_BLOCK);
    let m = channels.n_elements();
    let partial: Vec<RunningStats> = (0..blocks)
        .into_par_iter()
        .map(|b| -> Result<RunningStats> {
            let mut local = seeded_rng(base, b as u64);
            let count = MC_BLOCK.min(trials - b * MC_BLOCK);
            let mut stats = RunningStats::default();
            for _ in 0..count {
                let phase = hwi::phase_noise_sample(m, &mut local);
                let mut rate = 0.0;
                for k in 0..channels.n_users() {
                    rate += (1.0 + instantaneous_sinr(channels, w, psi, &phase, hwi, k)?).log2();
                }
                stats.push(rate);
            }
            Ok(stats)
        })
        .collect::<Result<_>>()?;
    let total = partial.into_iter().fold(RunningStats::default(), RunningStats::merge);
    let n = total.count;
    let mean = total.mean;
    let var = if n > 1 { total.m2 / (n as f64 - 1.0) } else { 0.0 };
    Ok(McEstimate {
        mean,
        stderr: (var / n as f64).sqrt(),
        trials: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{complex_gaussian, generate_channels};
    use crate::{c, seeded_rng};
    use std::f64::consts::PI;

    fn setup(seed: u64) -> (ChannelSet, CMat, CVec, HardwareModel) {
        let config = ScenarioConfig::default();
        let mut rng = seeded_rng(seed, 0);
        let ch = generate_channels(&config, &mut rng).unwrap();
        let w = CMat::from_fn(4, 3, |_, _| complex_gaussian(&mut rng) * 0.05);
        let psi = CVec::from_fn(16, |_, _| complex_gaussian(&mut rng) * 30.0);
        (ch, w, psi, config.hardware())
    }

    fn diag(v: &CVec) -> CMat {
        CMat::from_diagonal(v)
    }

    /// Direct transcription of the SINR ratio with explicit diagonal matrices.
    fn sinr_reference(ch: &ChannelSet, w: &CMat, psi: &CVec, phase: &CVec, hwi: &HardwareModel, k: usize) -> f64 {
        let gh = ch.h[k].adjoint() * diag(psi) * diag(phase) * &ch.g + ch.f[k].adjoint();
        let g = gh.adjoint();
        let wk = w.column(k).into_owned();
        let num = (&gh * &wk)[(0, 0)].norm_sqr();
        let ww = w * w.adjoint();
        let ww_diag = CMat::from_diagonal(&ww.diagonal());
        let kr = hwi.kappa_r[k];
        let inner = (&wk * wk.adjoint()).scale(kr) + ww_diag.scale((1.0 + kr) * hwi.kappa_t);
        let quad = (&gh * inner * &g)[(0, 0)].re;
        let mut interf = 0.0;
        for i in 0..w.ncols() {
            if i != k {
                interf += (&gh * w.column(i))[(0, 0)].norm_sqr();
            }
        }
        let ris = (ch.h[k].adjoint() * diag(psi) * diag(phase)).norm_squared();
        num / (quad + (1.0 + kr) * (interf + hwi.sigma_d_sq * ris + hwi.sigma_sq[k]))
    }

    #[test]
    fn zero_reflection_channel() {
        let (ch, _, _, _) = setup(1);
        let gbar = effective_channel(&ch, &CVec::zeros(16), 0);
        assert_eq!(gbar.column(0).into_owned(), ch.f[0]);
        assert!(gbar.columns(1, 16).iter().all(|z| *z == c(0.0)));
    }

    #[test]
    fn single_element_hand_expansion() {
        let g = CMat::from_row_slice(1, 2, &[Complex64::new(0.3, -0.2), Complex64::new(-0.1, 0.4)]);
        let h = CVec::from_element(1, Complex64::new(0.5, 0.7));
        let f = CVec::from_vec(vec![Complex64::new(0.2, 0.1), Complex64::new(-0.3, 0.05)]);
        let ch = ChannelSet {
            g: g.clone(),
            h: vec![h.clone()],
            f: vec![f.clone()],
        };
        let psi = CVec::from_element(1, Complex64::from_polar(2.0, 0.9));
        let gbar = effective_channel(&ch, &psi, 0);
        let d = (1.0 - 4.0 / (PI * PI)).sqrt();
        for n in 0..2 {
            let cascade = g[(0, n)].conj() * psi[0].conj() * h[0];
            let expected_f = cascade * (2.0 / PI) + f[n];
            let expected_g = cascade * d;
            assert!((gbar[(n, 0)] - expected_f).norm() < 1e-15);
            assert!((gbar[(n, 1)] - expected_g).norm() < 1e-15);
        }
    }

    #[test]
    fn gram_matches_phase_noise_average() {
        let (ch, _, psi, _) = setup(2);
        let gram = effective_gram(&ch, &psi, 1);
        let trials = 200_000;
        let mut rng = seeded_rng(3, 0);
        let n = 4;
        let mut acc = CMat::zeros(n, n);
        let mut acc_sq = nalgebra::DMatrix::<f64>::zeros(n, n);
        for _ in 0..trials {
            let phase = hwi::phase_noise_sample(16, &mut rng);
            let g = instantaneous_channel(&ch, &psi, &phase, 1);
            let outer = &g * g.adjoint();
            acc_sq += outer.map(|z| z.re * z.re);
            acc += outer;
        }
        let t = trials as f64;
        for i in 0..n {
            for j in 0..n {
                let mean = acc[(i, j)].re / t;
                let se = ((acc_sq[(i, j)] / t - mean * mean) / t).sqrt();
                let z = (mean - gram[(i, j)].re) / se;
                assert!(z.abs() < 3.0, "({i},{j}) z = {z}");
            }
        }
    }

    #[test]
    fn sinr_reductions() {
        let (ch, w, _, _) = setup(4);
        let hwi = HardwareModel::ideal(1, 1e-11);
        let single = ChannelSet {
            g: ch.g.clone(),
            h: vec![ch.h[0].clone()],
            f: vec![ch.f[0].clone()],
        };
        let w1 = w.columns(0, 1).into_owned();
        let phase = CVec::from_element(16, c(1.0));
        let sinr = instantaneous_sinr(&single, &w1, &CVec::zeros(16), &phase, &hwi, 0).unwrap();
        let expected = ch.f[0].dotc(&w1.column(0)).norm_sqr() / 1e-11;
        assert!((sinr / expected - 1.0).abs() < 1e-12);

        let sinr = instantaneous_sinr(&single, &CMat::zeros(4, 1), &CVec::zeros(16), &phase, &hwi, 0).unwrap();
        assert_eq!(sinr, 0.0);
    }

    #[test]
    fn sinr_matches_reference_transcription() {
        for seed in 0..10 {
            let (ch, w, psi, hwi) = setup(seed);
            let mut rng = seeded_rng(seed, 9);
            let phase = hwi::phase_noise_sample(16, &mut rng);
            for k in 0..3 {
                let a = instantaneous_sinr(&ch, &w, &psi, &phase, &hwi, k).unwrap();
                let b = sinr_reference(&ch, &w, &psi, &phase, &hwi, k);
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-30), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn no_ris_rate_reduction() {
        let (ch, w, _, _) = setup(5);
        let hwi = HardwareModel::ideal(3, 1e-11);
        let psi = CVec::zeros(16);
        let mut total = 0.0;
        for k in 0..3 {
            let b = approx_average_rate(&ch, &w, &psi, &hwi, k).unwrap();
            let sig = ch.f[k].dotc(&w.column(k)).norm_sqr();
            let interf: f64 = (0..3)
                .filter(|&i| i != k)
                .map(|i| ch.f[k].dotc(&w.column(i)).norm_sqr())
                .sum();
            let expected = (1.0 + sig / (interf + 1e-11)).log2();
            assert!((b.rate_tilde - expected).abs() < 1e-10 * expected.max(1.0));
            total += expected;
        }
        let sr = sum_rate(&ch, &w, &psi, &hwi).unwrap();
        assert!((sr - total).abs() < 1e-10 * total);
    }

    #[test]
    fn noise_term_without_dynamic_noise() {
        let (ch, w, psi, mut hwi) = setup(6);
        hwi.sigma_d_sq = 0.0;
        let b = approx_average_rate(&ch, &w, &psi, &hwi, 2).unwrap();
        assert!((b.varpi3 - (1.0 + hwi.kappa_r[2]) * hwi.sigma_sq[2]).abs() < 1e-25);
    }

    #[test]
    fn breakdown_invariants() {
        let (ch, w, psi, hwi) = setup(7);
        for k in 0..3 {
            let b = approx_average_rate(&ch, &w, &psi, &hwi, k).unwrap();
            assert!(b.varpi2 + b.varpi3 > b.varpi1);
            assert!((b.sinr_tilde - b.varpi1 / (b.varpi2 + b.varpi3 - b.varpi1)).abs() < 1e-12 * b.sinr_tilde);
            assert!((b.rate_tilde - (1.0 + b.sinr_tilde).log2()).abs() < 1e-15);
        }
        assert_eq!(sum_rate(&ch, &CMat::zeros(4, 3), &psi, &hwi).unwrap(), 0.0);
    }

    #[test]
    fn rate_invariant_to_column_rotation() {
        let (ch, mut w, psi, hwi) = setup(8);
        let before = sum_rate(&ch, &w, &psi, &hwi).unwrap();
        let rot = Complex64::from_polar(1.0, 1.234);
        for x in w.column_mut(1).iter_mut() {
            *x *= rot;
        }
        let after = sum_rate(&ch, &w, &psi, &hwi).unwrap();
        assert!((before - after).abs() < 1e-12 * before);
    }

    #[test]
    fn amplification_power_examples() {
        let (ch, w, psi, hwi) = setup(9);
        assert_eq!(amplification_power(&ch, &w, &CVec::zeros(16), 0.1, 1e-11), 0.0);
        let p = amplification_power(&ch, &CMat::zeros(4, 3), &psi, 0.3, 1e-11);
        let expected: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * 1e-11;
        assert!((p - expected).abs() < 1e-12 * expected);

        let mut rng = seeded_rng(10, 0);
        let a: Vec<f64> = psi.iter().map(|z| z.norm()).collect();
        let r1 = ReflectionCoefficients::new(a.clone(), (0..16).map(|_| rng.random::<f64>() * 6.0).collect()).unwrap();
        let r2 = ReflectionCoefficients::new(a, (0..16).map(|_| rng.random::<f64>() * 6.0).collect()).unwrap();
        let p1 = amplification_power(&ch, &w, &r1.psi(), hwi.kappa_t, hwi.sigma_d_sq);
        let p2 = amplification_power(&ch, &w, &r2.psi(), hwi.kappa_t, hwi.sigma_d_sq);
        assert!((p1 - p2).abs() <= 1e-12 * p1);
    }

    #[test]
    fn amplification_power_matches_trace_form() {
        let (ch, w, psi, hwi) = setup(11);
        let psi_m = diag(&psi);
        let ww = &w * w.adjoint();
        let ww_diag = CMat::from_diagonal(&ww.diagonal());
        let signal = (&psi_m * &ch.g * &w).norm_squared();
        let dist = (&psi_m * &ch.g * ww_diag * ch.g.adjoint() * psi_m.adjoint()).trace().re;
        let expected = signal + hwi.kappa_t * dist + hwi.sigma_d_sq * psi.norm_squared();
        let p = amplification_power(&ch, &w, &psi, hwi.kappa_t, hwi.sigma_d_sq);
        assert!((p - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn total_power_examples() {
        let config = ScenarioConfig {
            n_elements: 0,
            p_bs: 0.0,
            ..ScenarioConfig::default()
        };
        assert!((total_power(1.0, 0.5, &config) - 1.8).abs() < 1e-15);

        // Passive accounting: same total when the saved DC power moves to the BS.
        let config = ScenarioConfig::default();
        let split = config.power_split(crate::scenario::RisMode::Active);
        let passive = config.power_split(crate::scenario::RisMode::Passive);
        let lhs = config.xi_t * passive.p_t;
        let rhs = config.xi_t * split.p_t + config.xi_a * split.p_a + 16.0 * config.p_dc;
        assert!((lhs - rhs).abs() < 1e-15);

        let total = total_power(split.p_t, split.p_a, &config);
        let expected = config.p_budget + config.p_bs;
        assert!((total - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn monte_carlo_without_ris_is_deterministic() {
        let (ch, w, _, hwi) = setup(12);
        let psi = CVec::zeros(16);
        let est = monte_carlo_rate(&ch, &w, &psi, &hwi, 100, &mut seeded_rng(1, 0)).unwrap();
        let exact = sum_rate(&ch, &w, &psi, &hwi).unwrap();
        assert!((est.mean - exact).abs() < 1e-12 * exact);
        assert!(est.stderr < 1e-12);
    }

    #[test]
    fn monte_carlo_stderr_scaling() {
        let (ch, w, psi, hwi) = setup(13);
        let small = monte_carlo_rate(&ch, &w, &psi, &hwi, 2_000, &mut seeded_rng(2, 0)).unwrap();
        let large = monte_carlo_rate(&ch, &w, &psi, &hwi, 32_000, &mut seeded_rng(3, 0)).unwrap();
        let ratio = small.stderr / large.stderr;
        assert!((ratio / 4.0 - 1.0).abs() < 0.15, "stderr ratio {ratio}");
    }

    #[test]
    fn reflection_coefficients_round_trip() {
        let psi = CVec::from_vec(vec![Complex64::new(-1.0, 0.0), Complex64::new(0.0, -2.0), c(0.0)]);
        let r = ReflectionCoefficients::from_psi(&psi);
        assert!((r.psi() - &psi).norm() < 1e-15);
        assert!(r.phi.iter().all(|&p| (0.0..std::f64::consts::TAU).contains(&p)));
        assert!(ReflectionCoefficients::new(vec![-1.0], vec![0.0]).is_err());
    }

    #[test]
    fn vectorization_is_column_stacking() {
        let w = CMat::from_fn(3, 2, |n, k| Complex64::new(n as f64, k as f64));
        let b = Beamformer::new(w.clone());
        let v = b.vectorize();
        for k in 0..2 {
            for n in 0..3 {
                assert_eq!(v[k * 3 + n], w[(n, k)]);
            }
        }
        assert_eq!(Beamformer::from_vec(&v, 3, 2), b);
    }
}
