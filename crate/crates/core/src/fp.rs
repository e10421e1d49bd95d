//! Quadratic-transform reformulation of the averaged sum rate.
//!
//! With auxiliaries `(u_k, v_k)` the log-ratio objective becomes
//!
//! ```text
//! r_k = ln(1+v_k) - v_k + 2·sqrt(1+v_k)·Re{u_kᴴ Ḡ_kᴴ w_k} - ‖u_k‖²(ϖ̃₂ + ϖ̃₃)
//! ```
//!
//! which is concave quadratic in the beamformers for fixed reflection and
//! vice versa. The two assemblers below return those quadratics with every
//! constant carried, so `objective()` on either equals `-Σ_k r_k` exactly.

use num_complex::Complex64;

use crate::hwi::{self, HardwareModel, CROSS_MOMENT, MEAN_CONJ_SCALE};
use crate::rate::{self, RateBreakdown};
use crate::scenario::ChannelSet;
use crate::{CMat, CVec, Error, Result};

/// FP auxiliaries, one `(M+1)`-vector `u_k` and one scalar `v_k` per user.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryVars {
    pub u: Vec<CVec>,
    pub v: Vec<f64>,
}

impl AuxiliaryVars {
    pub fn zeros(k: usize, m: usize) -> Self {
        Self {
            u: vec![CVec::zeros(m + 1); k],
            v: vec![0.0; k],
        }
    }
}

/// Per-user quantities shared by the updates and both assemblers.
struct UserTerms {
    gbar: CMat,
    breakdown: RateBreakdown,
}

fn user_terms(channels: &ChannelSet, w: &CMat, psi: &CVec, hwi: &HardwareModel, k: usize) -> Result<UserTerms> {
    let gbar = rate::effective_channel(channels, psi, k);
    let gram = &gbar * gbar.adjoint();
    let breakdown = rate::breakdown_from_gram(&gram, w, k, rate::ris_noise_gain(channels, psi, k), hwi)?;
    Ok(UserTerms { gbar, breakdown })
}

fn u_from_terms(terms: &UserTerms, w: &CMat, v: f64, k: usize) -> CVec {
    let b = &terms.breakdown;
    terms.gbar.ad_mul(&w.column(k)) * Complex64::new((1.0 + v).sqrt() / (b.varpi2 + b.varpi3), 0.0)
}

/// `u_k* = sqrt(1+v_k)·Ḡ_kᴴw_k / (ϖ̃₂ + ϖ̃₃)`.
pub fn update_u(channels: &ChannelSet, w: &CMat, psi: &CVec, hwi: &HardwareModel, v: f64, k: usize) -> Result<CVec> {
    let terms = user_terms(channels, w, psi, hwi, k)?;
    Ok(u_from_terms(&terms, w, v, k))
}

/// `v_k* = γ̃_k`.
pub fn update_v(channels: &ChannelSet, w: &CMat, psi: &CVec, hwi: &HardwareModel, k: usize) -> Result<f64> {
    Ok(user_terms(channels, w, psi, hwi, k)?.breakdown.sinr_tilde)
}

/// Optimal `(u, v)` for all users at the current point.
pub fn update_aux(channels: &ChannelSet, w: &CMat, psi: &CVec, hwi: &HardwareModel) -> Result<AuxiliaryVars> {
    let mut aux = AuxiliaryVars::zeros(channels.n_users(), channels.n_elements());
    for k in 0..channels.n_users() {
        let terms = user_terms(channels, w, psi, hwi, k)?;
        let v = terms.breakdown.sinr_tilde;
        aux.u[k] = u_from_terms(&terms, w, v, k);
        aux.v[k] = v;
    }
    Ok(aux)
}

/// Per-user FP terms `r_k` in nats.
pub fn objective_terms(
    channels: &ChannelSet,
    w: &CMat,
    psi: &CVec,
    hwi: &HardwareModel,
    aux: &AuxiliaryVars,
) -> Result<Vec<f64>> {
    (0..channels.n_users())
        .map(|k| {
            let terms = user_terms(channels, w, psi, hwi, k)?;
            let (u, v) = (&aux.u[k], aux.v[k]);
            let b = &terms.breakdown;
            let cross = u.dotc(&terms.gbar.ad_mul(&w.column(k))).re;
            Ok((1.0 + v).ln() - v + 2.0 * (1.0 + v).sqrt() * cross - u.norm_squared() * (b.varpi2 + b.varpi3))
        })
        .collect()
}

/// `Σ_k r_k` in nats.
pub fn objective_r(
    channels: &ChannelSet,
    w: &CMat,
    psi: &CVec,
    hwi: &HardwareModel,
    aux: &AuxiliaryVars,
) -> Result<f64> {
    Ok(objective_terms(channels, w, psi, hwi, aux)?.iter().sum())
}

/// Beamforming block: minimise `Σ_k w_kᴴΞw_k - 2Re{Σ_k ω_kᴴw_k} - c`
/// subject to `‖W‖² ≤ P_T` and `Σ_k w_kᴴΓw_k ≤ P_m`.
///
/// The stacked matrices are block diagonal with identical `N×N` blocks, so
/// only one block of each is stored. `omega` holds `ω_k` as column `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WSubproblem {
    pub xi_block: CMat,
    pub omega: CMat,
    pub c: f64,
    pub gamma_block: CMat,
    pub p_m: f64,
}

impl WSubproblem {
    pub fn n_antennas(&self) -> usize {
        self.xi_block.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.omega.ncols()
    }

    pub fn objective(&self, w: &CMat) -> f64 {
        let xw = &self.xi_block * w;
        let quad: f64 = (0..w.ncols()).map(|k| w.column(k).dotc(&xw.column(k)).re).sum();
        let lin: f64 = (0..w.ncols()).map(|k| self.omega.column(k).dotc(&w.column(k)).re).sum();
        quad - 2.0 * lin - self.c
    }

    /// `Σ_k w_kᴴΓw_k`, the signal part of the RIS output power.
    pub fn gamma_form(&self, w: &CMat) -> f64 {
        block_form(&self.gamma_block, w)
    }

    /// `I_K ⊗ Ξ`.
    pub fn xi_tilde(&self) -> CMat {
        kron_identity(&self.xi_block, self.n_users())
    }

    /// `I_K ⊗ Γ`.
    pub fn gamma(&self) -> CMat {
        kron_identity(&self.gamma_block, self.n_users())
    }

    /// Stacked `ω`.
    pub fn omega_vec(&self) -> CVec {
        CVec::from_column_slice(self.omega.as_slice())
    }
}

/// `Σ_k w_kᴴ B w_k` for a shared block `B`.
pub fn block_form(block: &CMat, w: &CMat) -> f64 {
    let bw = block * w;
    (0..w.ncols()).map(|k| w.column(k).dotc(&bw.column(k)).re).sum()
}

pub fn kron_identity(block: &CMat, k: usize) -> CMat {
    let n = block.nrows();
    let mut out = CMat::zeros(n * k, n * k);
    for i in 0..k {
        out.view_mut((i * n, i * n), (n, n)).copy_from(block);
    }
    out
}

fn with_scaled_diagonal(mut a: CMat, scale: f64) -> CMat {
    for i in 0..a.nrows() {
        let d = a[(i, i)].re;
        a[(i, i)] = Complex64::new(d * (1.0 + scale), 0.0);
    }
    a
}

/// Builds the beamforming block at fixed reflection `psi`.
pub fn assemble_w_subproblem(
    channels: &ChannelSet,
    psi: &CVec,
    hwi: &HardwareModel,
    aux: &AuxiliaryVars,
    p_a: f64,
) -> Result<WSubproblem> {
    let n = channels.n_antennas();
    let k_users = channels.n_users();
    let mut xi_block = CMat::zeros(n, n);
    let mut omega = CMat::zeros(n, k_users);
    let mut c = 0.0;
    for k in 0..k_users {
        let gbar = rate::effective_channel(channels, psi, k);
        let gram = &gbar * gbar.adjoint();
        let (u, v) = (&aux.u[k], aux.v[k]);
        let scale = (1.0 + hwi.kappa_r[k]) * u.norm_squared();
        xi_block += with_scaled_diagonal(gram, hwi.kappa_t).scale(scale);
        omega.set_column(k, &(&gbar * u * Complex64::new((1.0 + v).sqrt(), 0.0)));
        let noise = hwi.sigma_d_sq * rate::ris_noise_gain(channels, psi, k) + hwi.sigma_sq[k];
        c += (1.0 + v).ln() - v - scale * noise;
    }
    let gp = CMat::from_fn(channels.n_elements(), n, |m, j| channels.g[(m, j)] * psi[m]);
    let gamma_block = with_scaled_diagonal(gp.ad_mul(&gp), hwi.kappa_t);
    let p_m = p_a - hwi.sigma_d_sq * psi.norm_squared();
    if !(p_m > 0.0) {
        return Err(Error::InfeasibleReflection { p_m });
    }
    Ok(WSubproblem {
        xi_block: hermitize(xi_block),
        omega,
        c,
        gamma_block: hermitize(gamma_block),
        p_m,
    })
}

fn hermitize(a: CMat) -> CMat {
    (&a + a.adjoint()).scale(0.5)
}

/// Reflection block: minimise `ψᴴΔψ - 2Re{ψᴴα} - d` subject to
/// `ψᴴΛψ ≤ P_A` with `Λ` diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiSubproblem {
    pub delta: CMat,
    pub alpha: CVec,
    pub d: f64,
    /// Diagonal of `Λ`.
    pub lambda: Vec<f64>,
}

impl PsiSubproblem {
    pub fn objective(&self, psi: &CVec) -> f64 {
        psi.dotc(&(&self.delta * psi)).re - 2.0 * psi.dotc(&self.alpha).re - self.d
    }

    pub fn amplification_power(&self, psi: &CVec) -> f64 {
        self.lambda.iter().zip(psi.iter()).map(|(l, p)| l * p.norm_sqr()).sum()
    }

    pub fn lambda_matrix(&self) -> CMat {
        CMat::from_diagonal(&CVec::from_iterator(
            self.lambda.len(),
            self.lambda.iter().map(|&l| Complex64::new(l, 0.0)),
        ))
    }
}

/// Builds the reflection block at fixed beamformers `w`.
pub fn assemble_psi_subproblem(
    channels: &ChannelSet,
    w: &CMat,
    hwi: &HardwareModel,
    aux: &AuxiliaryVars,
) -> Result<PsiSubproblem> {
    let m = channels.n_elements();
    let dd = hwi::DD_SCALE.sqrt();
    let ww = w * w.adjoint();
    let cov = with_scaled_diagonal(ww, hwi.kappa_t);
    let gw = &channels.g * w;

    let mut delta = CMat::zeros(m, m);
    let mut alpha = CVec::zeros(m);
    let mut d = 0.0;
    for k in 0..channels.n_users() {
        let (u, v) = (&aux.u[k], aux.v[k]);
        let h = &channels.h[k];
        let f = &channels.f[k];
        let s = (1.0 + v).sqrt();
        let unorm = u.norm_squared();
        let q = cov.scale(unorm * (1.0 + hwi.kappa_r[k]));
        let gqg = &channels.g * &q * channels.g.adjoint();
        let gqf = &channels.g * (&q * f);

        // Quadratic part: (diag(h)(I+J)diag(h*)) ⊙ (GQGᴴ)ᵀ plus RIS noise.
        let noise_scale = hwi.sigma_d_sq * (1.0 + hwi.kappa_r[k]) * unorm;
        for i in 0..m {
            for j in 0..m {
                let moment = if i == j { 1.0 } else { CROSS_MOMENT };
                delta[(i, j)] += h[i] * h[j].conj() * gqg[(j, i)] * moment;
            }
            delta[(i, i)] += Complex64::new(noise_scale * h[i].norm_sqr(), 0.0);
        }

        let u0 = u[0];
        for i in 0..m {
            let weight = u0 * MEAN_CONJ_SCALE + u[i + 1] * dd;
            let desired = gw[(i, k)].conj() * h[i] * weight;
            let cross = gqf[i].conj() * h[i] * MEAN_CONJ_SCALE;
            alpha[i] += desired * s - cross;
        }

        let direct = (u0.conj() * f.dotc(&w.column(k))).re;
        d += (1.0 + v).ln() - v - (1.0 + hwi.kappa_r[k]) * hwi.sigma_sq[k] * unorm + 2.0 * s * direct
            - f.dotc(&(&q * f)).re;
    }
    let lambda = rate::amplification_weights(channels, w, hwi.kappa_t, hwi.sigma_d_sq);
    Ok(PsiSubproblem {
        delta: hermitize(delta),
        alpha,
        d,
        lambda,
    })
}
