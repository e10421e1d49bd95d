//! Beamforming block solver.
//!
//! The amplification constraint `Σ_k w_kᴴΓw_k ≤ P_m` is majorized around the
//! current iterate by replacing `Γ` with `λ_Γ·I`, which turns every Lagrangian
//! stationarity condition into a scalar-shifted solve against the fixed `Ξ`.
//! `Ξ` is eigendecomposed once per call to [`optimize_w`]; every multiplier
//! evaluation afterwards costs `O(NK)`.
//!
//! Each majorization step first drops the transmit power constraint and
//! bisects the amplification multiplier `μ` (case I). If the result exceeds
//! `P_T`, the power constraint is active, the majorized constraint becomes
//! linear on the power sphere, and the solver bisects the power multiplier
//! with a closed-form inner multiplier (case II).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fp::WSubproblem;
use crate::numerics::{bisect, HermitianEig, RANK_TOL};
use crate::{CMat, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WSolverOptions {
    /// Relative objective change that ends the MM loop.
    pub tol: f64,
    pub max_iters: usize,
    /// Absolute bracket width for multiplier bisection.
    pub bisect_tol: f64,
}

impl Default for WSolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 30,
            bisect_tol: 1e-8,
        }
    }
}

/// Majorized amplification constraint `λ_Γ‖w‖² - 2Re{bᴴw} ≤ P̃_m` around
/// `w_anchor`, with `b = (λ_Γ I - Γ) w_anchor`.
#[derive(Debug, Clone, PartialEq)]
pub struct WSurrogate {
    pub lambda_gamma: f64,
    pub p_m_tilde: f64,
    pub w_anchor: CMat,
    pub b: CMat,
    /// `w_anchorᴴ(λ_Γ I - Γ)w_anchor`.
    pub anchor_gap: f64,
}

impl WSurrogate {
    /// Majorizer of `Σ_k w_kᴴΓw_k`, comparable with `P_m`.
    pub fn value(&self, w: &CMat) -> f64 {
        self.lambda_gamma * w.norm_squared() - 2.0 * re_inner(&self.b, w) + self.anchor_gap
    }

    /// Left-hand side of the majorized constraint, comparable with `P̃_m`.
    pub fn reduced_value(&self, w: &CMat) -> f64 {
        self.lambda_gamma * w.norm_squared() - 2.0 * re_inner(&self.b, w)
    }

    /// Gradient of [`WSurrogate::value`] w.r.t. `w*`, as a matrix.
    pub fn gradient(&self, w: &CMat) -> CMat {
        (w.scale(self.lambda_gamma) - &self.b).scale(2.0)
    }
}

fn re_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn majorize_gamma(sub: &WSubproblem, w_anchor: &CMat) -> Result<WSurrogate> {
    let lambda_gamma = HermitianEig::new_psd(&sub.gamma_block)?.max_eigenvalue().max(0.0);
    Ok(majorize_with(sub, lambda_gamma, w_anchor))
}

fn majorize_with(sub: &WSubproblem, lambda_gamma: f64, w_anchor: &CMat) -> WSurrogate {
    let b = w_anchor.scale(lambda_gamma) - &sub.gamma_block * w_anchor;
    let anchor_gap = re_inner(w_anchor, &b).max(0.0);
    WSurrogate {
        lambda_gamma,
        p_m_tilde: sub.p_m - anchor_gap,
        w_anchor: w_anchor.clone(),
        b,
        anchor_gap,
    }
}

/// Solution of one majorized step.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseSolution {
    pub w: CMat,
    /// Multiplier of `‖w‖² ≤ P_T` (zero in case I).
    pub power_multiplier: f64,
    /// Multiplier of the majorized amplification constraint.
    pub amplification_multiplier: f64,
    /// Raw `(λ₁, λ₂)` of case II, `λ₁` being the total diagonal shift.
    pub case2_raw: Option<(f64, f64)>,
}

/// `Ξ` in its eigenbasis together with the projected right-hand sides.
struct Spectral {
    eig: HermitianEig,
    omega_hat: CMat,
}

impl Spectral {
    fn new(sub: &WSubproblem) -> Result<Self> {
        let eig = HermitianEig::new_psd(&sub.xi_block)?;
        let omega_hat = eig.eigenvectors.ad_mul(&sub.omega);
        Ok(Self { eig, omega_hat })
    }

    fn project(&self, x: &CMat) -> CMat {
        self.eig.eigenvectors.ad_mul(x)
    }

    fn lift(&self, x: &CMat) -> CMat {
        &self.eig.eigenvectors * x
    }

    fn inverse_diag(&self, shift: f64) -> Vec<f64> {
        let cutoff = RANK_TOL * (self.eig.max_eigenvalue().max(0.0) + shift);
        self.eig
            .eigenvalues
            .iter()
            .map(|&l| {
                let d = l + shift;
                if d <= cutoff {
                    0.0
                } else {
                    1.0 / d
                }
            })
            .collect()
    }

    /// `(Λ + shift)†(Ω̂ + scale·B̂)` in eigen-coordinates.
    fn solve(&self, shift: f64, b_hat: &CMat, scale: f64) -> CMat {
        let inv = self.inverse_diag(shift);
        CMat::from_fn(self.omega_hat.nrows(), self.omega_hat.ncols(), |n, k| {
            (self.omega_hat[(n, k)] + b_hat[(n, k)] * scale) * inv[n]
        })
    }
}

struct Case1Eval<'a> {
    spectral: &'a Spectral,
    sur: &'a WSurrogate,
    b_hat: CMat,
}

impl Case1Eval<'_> {
    fn w_hat(&self, mu: f64) -> CMat {
        self.spectral.solve(mu * self.sur.lambda_gamma, &self.b_hat, mu)
    }

    /// Majorized constraint value `P̃_m(μ)` reached by `w(μ)`.
    fn constraint(&self, mu: f64) -> f64 {
        let w = self.w_hat(mu);
        self.sur.lambda_gamma * w.norm_squared() - 2.0 * re_inner(&self.b_hat, &w)
    }
}

fn case1(spectral: &Spectral, sur: &WSurrogate, tol: f64) -> Result<CaseSolution> {
    let eval = Case1Eval {
        spectral,
        sur,
        b_hat: spectral.project(&sur.b),
    };
    let mu = if eval.constraint(0.0) <= sur.p_m_tilde {
        0.0
    } else {
        bisect(|mu| eval.constraint(mu), sur.p_m_tilde, 0.0, 1.0, tol)?
    };
    Ok(CaseSolution {
        w: spectral.lift(&eval.w_hat(mu)),
        power_multiplier: 0.0,
        amplification_multiplier: mu,
        case2_raw: None,
    })
}

struct Case2Eval<'a> {
    spectral: &'a Spectral,
    b_hat: CMat,
    p_hat: f64,
}

impl Case2Eval<'_> {
    /// Closed-form inner multiplier for a given total shift, clamped at zero.
    fn lambda2(&self, lambda1: f64) -> f64 {
        let inv = self.spectral.inverse_diag(lambda1);
        let (mut lin, mut quad) = (0.0, 0.0);
        for n in 0..inv.len() {
            for k in 0..self.b_hat.ncols() {
                let b = self.b_hat[(n, k)];
                lin += (b.conj() * self.spectral.omega_hat[(n, k)]).re * inv[n];
                quad += b.norm_sqr() * inv[n];
            }
        }
        if 2.0 * lin >= self.p_hat || quad <= 0.0 {
            0.0
        } else {
            ((self.p_hat - 2.0 * lin) / (2.0 * quad)).max(0.0)
        }
    }

    fn w_hat(&self, lambda1: f64) -> (CMat, f64) {
        let lambda2 = self.lambda2(lambda1);
        (self.spectral.solve(lambda1, &self.b_hat, lambda2), lambda2)
    }

    fn power(&self, lambda1: f64) -> f64 {
        self.w_hat(lambda1).0.norm_squared()
    }
}

fn case2(spectral: &Spectral, sur: &WSurrogate, p_t: f64, tol: f64) -> Result<CaseSolution> {
    let eval = Case2Eval {
        spectral,
        b_hat: spectral.project(&sur.b),
        p_hat: sur.lambda_gamma * p_t - sur.p_m_tilde,
    };
    let lambda1 = if eval.power(0.0) <= p_t {
        0.0
    } else {
        bisect(|l| eval.power(l), p_t, 0.0, 1.0, tol)?
    };
    let (w_hat, lambda2) = eval.w_hat(lambda1);
    Ok(CaseSolution {
        w: spectral.lift(&w_hat),
        power_multiplier: lambda1 - lambda2 * sur.lambda_gamma,
        amplification_multiplier: lambda2,
        case2_raw: Some((lambda1, lambda2)),
    })
}

/// Majorized step ignoring the transmit power constraint.
pub fn solve_case1(sub: &WSubproblem, sur: &WSurrogate, tol: f64) -> Result<CaseSolution> {
    case1(&Spectral::new(sub)?, sur, tol)
}

/// Majorized step with the transmit power constraint active.
pub fn solve_case2(sub: &WSubproblem, sur: &WSurrogate, p_t: f64, tol: f64) -> Result<CaseSolution> {
    case2(&Spectral::new(sub)?, sur, p_t, tol)
}

/// `P̃_m(μ)`: majorized constraint value of the case I minimizer.
pub fn case1_constraint_curve(sub: &WSubproblem, sur: &WSurrogate, mus: &[f64]) -> Result<Vec<f64>> {
    let spectral = Spectral::new(sub)?;
    let eval = Case1Eval {
        spectral: &spectral,
        sur,
        b_hat: spectral.project(&sur.b),
    };
    Ok(mus.iter().map(|&mu| eval.constraint(mu)).collect())
}

/// `P_T(λ₁)`: transmit power of the case II minimizer.
pub fn case2_power_curve(sub: &WSubproblem, sur: &WSurrogate, p_t: f64, lambdas: &[f64]) -> Result<Vec<f64>> {
    let spectral = Spectral::new(sub)?;
    let eval = Case2Eval {
        spectral: &spectral,
        b_hat: spectral.project(&sur.b),
        p_hat: sur.lambda_gamma * p_t - sur.p_m_tilde,
    };
    Ok(lambdas.iter().map(|&l| eval.power(l)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WSolveInfo {
    /// True subproblem objective after each accepted step, starting with the
    /// initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub case2_steps: usize,
    pub power_multiplier: f64,
    pub amplification_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WSolution {
    pub w: CMat,
    pub info: WSolveInfo,
}

/// MM loop over majorized steps, starting from a point feasible for both
/// true constraints.
pub fn optimize_w(sub: &WSubproblem, w_init: &CMat, p_t: f64, opts: &WSolverOptions) -> Result<WSolution> {
    if w_init.shape() != sub.omega.shape() {
        return Err(Error::InvalidInput(format!(
            "initial beamformer is {:?}, subproblem expects {:?}",
            w_init.shape(),
            sub.omega.shape()
        )));
    }
    let mut info = WSolveInfo {
        trace: vec![sub.objective(w_init)],
        iterations: 0,
        converged: false,
        case2_steps: 0,
        power_multiplier: 0.0,
        amplification_multiplier: 0.0,
    };
    if sub.omega.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        info.trace
            .push(sub.objective(&CMat::zeros(w_init.nrows(), w_init.ncols())));
        info.converged = true;
        return Ok(WSolution {
            w: CMat::zeros(w_init.nrows(), w_init.ncols()),
            info,
        });
    }

    let spectral = Spectral::new(sub)?;
    let lambda_gamma = HermitianEig::new_psd(&sub.gamma_block)?.max_eigenvalue().max(0.0);
    let mut w = w_init.clone();
    let mut objective = info.trace[0];
    for _ in 0..opts.max_iters {
        let sur = majorize_with(sub, lambda_gamma, &w);
        let mut step = case1(&spectral, &sur, opts.bisect_tol)?;
        if step.w.norm_squared() > p_t {
            step = case2(&spectral, &sur, p_t, opts.bisect_tol)?;
            info.case2_steps += 1;
        }
        info.iterations += 1;
        let candidate = sub.objective(&step.w);
        if candidate > objective {
            // Bisection round-off at a fixed point; keep the incumbent.
            info.converged = true;
            break;
        }
        let change = (objective - candidate) / objective.abs().max(f64::MIN_POSITIVE);
        w = step.w;
        objective = candidate;
        info.trace.push(objective);
        info.power_multiplier = step.power_multiplier;
        info.amplification_multiplier = step.amplification_multiplier;
        if change < opts.tol {
            info.converged = true;
            break;
        }
    }
    Ok(WSolution { w, info })
}

/// Normalized KKT residuals of the true beamforming subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `‖(Ξ + λ₁I + μΓ)W - Ω‖ / ‖Ω‖`.
    pub stationarity: f64,
    /// Relative violation of `‖W‖² ≤ P_T`.
    pub power_violation: f64,
    /// Relative violation of `Σ_k w_kᴴΓw_k ≤ P_m`.
    pub amplification_violation: f64,
    /// `|λ₁(‖W‖² - P_T)| + |μ(Σ w_kᴴΓw_k - P_m)|` over `2|Re{Σ ω_kᴴw_k}|`.
    pub slackness: f64,
    /// Most negative multiplier, zero when both are non-negative.
    pub dual_violation: f64,
}

pub fn kkt_residuals(
    sub: &WSubproblem,
    w: &CMat,
    p_t: f64,
    power_multiplier: f64,
    amplification_multiplier: f64,
) -> KktResiduals {
    let grad = &sub.xi_block * w + w.scale(power_multiplier) + (&sub.gamma_block * w).scale(amplification_multiplier)
        - &sub.omega;
    let power = w.norm_squared();
    let amp = sub.gamma_form(w);
    let linear = 2.0 * re_inner(&sub.omega, w).abs();
    let amp_slack = if sub.p_m.is_finite() {
        amplification_multiplier * (amp - sub.p_m)
    } else {
        0.0
    };
    KktResiduals {
        stationarity: grad.norm() / sub.omega.norm(),
        power_violation: ((power - p_t) / p_t).max(0.0),
        amplification_violation: if sub.p_m.is_finite() {
            ((amp - sub.p_m) / sub.p_m).max(0.0)
        } else {
            0.0
        },
        slackness: ((power_multiplier * (power - p_t)).abs() + amp_slack.abs()) / linear.max(f64::MIN_POSITIVE),
        dual_violation: (-power_multiplier.min(amplification_multiplier)).max(0.0),
    }
}
