//! Reflection block solver.
//!
//! Both the quadratic objective and the amplification constraint are
//! majorized by scaled identities around the current reflection vector. The
//! priced surrogate `f̃ + η·g̃` is then separable across elements, and each
//! element has a closed-form minimizer: phase opposite to the linear
//! coefficient `b_m = p̃_m + η·q̃_m`, amplitude `|b_m| / (2(z̃ + η·ẑ))`.
//! The price `η` is bisected until the surrogate constraint is met.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::fp::PsiSubproblem;
use crate::numerics::{bisect, HermitianEig};
use crate::rate::wrap_phase;
use crate::{seeded_rng, CVec, Error, Result};

/// Which parts of each element the sweep may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementUpdate {
    /// Joint amplitude and phase.
    Full,
    /// Unit amplitude, phase only; the amplification constraint is ignored.
    PhaseOnly,
    /// Phase held, amplitude only.
    AmplitudeOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiSolverOptions {
    /// Relative objective change that ends the loop.
    pub tol: f64,
    pub max_iters: usize,
    pub price_tol: f64,
    pub update: ElementUpdate,
    /// Visit elements in a seeded random order instead of `0..M`.
    pub shuffle_seed: Option<u64>,
}

impl Default for PsiSolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 50,
            price_tol: 1e-8,
            update: ElementUpdate::Full,
            shuffle_seed: None,
        }
    }
}

/// Majorized objective `λ_Δ‖ψ‖² + Re{ψᴴp̃} + d̃` and constraint
/// `λ_Λ‖ψ‖² + Re{ψᴴq̃} ≤ P̃_A` around `psi_anchor`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiSurrogate {
    pub lambda_delta: f64,
    pub lambda_lambda: f64,
    pub p_tilde: CVec,
    pub q_tilde: CVec,
    pub d_tilde: f64,
    pub p_a_tilde: f64,
    pub psi_anchor: CVec,
    /// `ψ_tᴴ(Z_Λ - Λ)ψ_t`.
    pub constraint_gap: f64,
}

impl PsiSurrogate {
    pub fn objective(&self, psi: &CVec) -> f64 {
        self.lambda_delta * psi.norm_squared() + psi.dotc(&self.p_tilde).re + self.d_tilde
    }

    /// Left-hand side of the majorized constraint, comparable with `P̃_A`.
    pub fn constraint(&self, psi: &CVec) -> f64 {
        self.lambda_lambda * psi.norm_squared() + psi.dotc(&self.q_tilde).re
    }

    /// Majorizer of `ψᴴΛψ`, comparable with `P_A`.
    pub fn constraint_value(&self, psi: &CVec) -> f64 {
        self.constraint(psi) + self.constraint_gap
    }

    /// Gradients w.r.t. `ψ*` of the objective and constraint majorizers.
    pub fn gradients(&self, psi: &CVec) -> (CVec, CVec) {
        let f = psi.scale(2.0 * self.lambda_delta) + &self.p_tilde;
        let g = psi.scale(2.0 * self.lambda_lambda) + &self.q_tilde;
        (f, g)
    }

    /// Per-element `(b_m, z̃ + η·ẑ)` of the priced surrogate.
    pub fn priced(&self, eta: f64) -> (CVec, f64) {
        (
            &self.p_tilde + self.q_tilde.scale(eta),
            self.lambda_delta + eta * self.lambda_lambda,
        )
    }
}

pub fn majorize_psi(sub: &PsiSubproblem, psi_anchor: &CVec, p_a: f64) -> Result<PsiSurrogate> {
    let lambda_delta = HermitianEig::new_psd(&sub.delta)?.max_eigenvalue().max(0.0);
    let lambda_lambda = sub.lambda.iter().copied().fold(0.0, f64::max);
    let gap_delta = psi_anchor.scale(lambda_delta) - &sub.delta * psi_anchor;
    let gap_lambda = CVec::from_iterator(
        psi_anchor.len(),
        psi_anchor.iter().zip(&sub.lambda).map(|(p, l)| p * (lambda_lambda - l)),
    );
    let anchor_delta = psi_anchor.dotc(&gap_delta).re.max(0.0);
    let constraint_gap = psi_anchor.dotc(&gap_lambda).re.max(0.0);
    Ok(PsiSurrogate {
        lambda_delta,
        lambda_lambda,
        p_tilde: (&sub.alpha + gap_delta).scale(-2.0),
        q_tilde: gap_lambda.scale(-2.0),
        d_tilde: -sub.d + anchor_delta,
        p_a_tilde: p_a - constraint_gap,
        psi_anchor: psi_anchor.clone(),
        constraint_gap,
    })
}

/// Closed-form element update for `c·|ψ_m|² + Re{ψ_m* b_m}`.
///
/// Returns `(θ_m, a_m)` with `θ_m` unit modulus. A zero coefficient sets the
/// amplitude to zero and keeps the current phase.
pub fn aso_step(b: Complex64, curvature: f64, current: Complex64, update: ElementUpdate) -> (Complex64, f64) {
    let current_phase = if current == Complex64::new(0.0, 0.0) {
        Complex64::new(1.0, 0.0)
    } else {
        current / current.norm()
    };
    match update {
        ElementUpdate::Full => {
            if b == Complex64::new(0.0, 0.0) {
                return (current_phase, 0.0);
            }
            let theta = Complex64::from_polar(1.0, b.arg() - PI);
            (theta, b.norm() / (2.0 * curvature))
        }
        ElementUpdate::PhaseOnly => {
            if b == Complex64::new(0.0, 0.0) {
                return (current_phase, 1.0);
            }
            (Complex64::from_polar(1.0, b.arg() - PI), 1.0)
        }
        ElementUpdate::AmplitudeOnly => {
            let projected = (current_phase.conj() * b).re;
            (current_phase, (-projected).max(0.0) / (2.0 * curvature))
        }
    }
}

fn sweep(sur: &PsiSurrogate, eta: f64, state: &CVec, update: ElementUpdate, order: &[usize]) -> CVec {
    let (b, curvature) = sur.priced(eta);
    let mut out = state.clone();
    for &m in order {
        let (theta, a) = aso_step(b[m], curvature, state[m], update);
        out[m] = theta * a;
    }
    out
}

/// Smallest price (within `tol`) whose sweep meets the majorized constraint.
pub fn find_price(sur: &PsiSurrogate, state: &CVec, update: ElementUpdate, tol: f64) -> Result<f64> {
    let order: Vec<usize> = (0..state.len()).collect();
    find_price_ordered(sur, state, update, tol, &order)
}

fn find_price_ordered(
    sur: &PsiSurrogate,
    state: &CVec,
    update: ElementUpdate,
    tol: f64,
    order: &[usize],
) -> Result<f64> {
    if update == ElementUpdate::PhaseOnly || !sur.p_a_tilde.is_finite() {
        return Ok(0.0);
    }
    let value = |eta: f64| sur.constraint(&sweep(sur, eta, state, update, order));
    if sur.lambda_delta > 0.0 {
        if value(0.0) <= sur.p_a_tilde {
            return Ok(0.0);
        }
    } else if sur.p_tilde.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Ok(0.0);
    }
    // With zero curvature the unpriced step is unbounded; start just above 0.
    let lo = if sur.lambda_delta > 0.0 { 0.0 } else { tol };
    bisect(value, sur.p_a_tilde, lo, lo.max(1.0), tol)
}

/// Sampled `g̃(ψ(η))`, for checking monotonicity in the price.
pub fn price_curve(sur: &PsiSurrogate, state: &CVec, update: ElementUpdate, etas: &[f64]) -> Vec<f64> {
    let order: Vec<usize> = (0..state.len()).collect();
    etas.iter()
        .map(|&eta| sur.constraint(&sweep(sur, eta, state, update, &order)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiSolveInfo {
    /// True subproblem objective after each accepted iteration, starting with
    /// the initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiSolution {
    pub psi: CVec,
    pub info: PsiSolveInfo,
}

/// MM loop: majorize, price, sweep, until the true objective settles.
pub fn optimize_psi(sub: &PsiSubproblem, psi_init: &CVec, p_a: f64, opts: &PsiSolverOptions) -> Result<PsiSolution> {
    let m = psi_init.len();
    if sub.alpha.len() != m {
        return Err(Error::InvalidInput(format!(
            "initial reflection has {m} elements, subproblem expects {}",
            sub.alpha.len()
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    if let Some(seed) = opts.shuffle_seed {
        order.shuffle(&mut seeded_rng(seed, 0));
    }
    let budget = if opts.update == ElementUpdate::PhaseOnly {
        f64::INFINITY
    } else {
        p_a
    };
    let mut psi = psi_init.clone();
    let mut objective = sub.objective(&psi);
    let mut info = PsiSolveInfo {
        trace: vec![objective],
        iterations: 0,
        converged: false,
        price: 0.0,
    };
    for _ in 0..opts.max_iters {
        let sur = majorize_psi(sub, &psi, budget)?;
        let eta = find_price_ordered(&sur, &psi, opts.update, opts.price_tol, &order)?;
        let candidate = sweep(&sur, eta, &psi, opts.update, &order);
        info.iterations += 1;
        let value = sub.objective(&candidate);
        if value > objective {
            info.converged = true;
            break;
        }
        let change = (objective - value) / objective.abs().max(f64::MIN_POSITIVE);
        psi = candidate;
        objective = value;
        info.trace.push(objective);
        info.price = eta;
        if change < opts.tol {
            info.converged = true;
            break;
        }
    }
    Ok(PsiSolution { psi, info })
}

/// Phases of `psi` in `[0, 2π)`.
pub fn phases(psi: &CVec) -> Vec<f64> {
    psi.iter().map(|z| wrap_phase(z.arg())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fp::{assemble_psi_subproblem, update_aux};
    use crate::scenario::{complex_gaussian, generate_channels, RisMode, ScenarioConfig};
    use crate::{c, CMat};
    use rand::Rng;

    struct Instance {
        sub: PsiSubproblem,
        psi0: CVec,
        p_a: f64,
    }

    fn instance(config: &ScenarioConfig, seed: u64) -> Instance {
        let mut rng = seeded_rng(seed, 0);
        let ch = generate_channels(config, &mut rng).unwrap();
        let hwi = config.hardware();
        let split = config.power_split(RisMode::Active);
        let (n, k, m) = (config.n_antennas, config.n_users, config.n_elements);
        let w = CMat::from_fn(n, k, |_, _| complex_gaussian(&mut rng));
        let w = w.scale((split.p_t / w.norm_squared()).sqrt());
        let psi = CVec::from_fn(m, |_, _| Complex64::from_polar(1.0, rng.random::<f64>() * 6.28));
        let base = crate::rate::amplification_power(&ch, &w, &psi, hwi.kappa_t, hwi.sigma_d_sq);
        let psi = psi * c((0.9 * split.p_a / base).sqrt());
        let aux = update_aux(&ch, &w, &psi, &hwi).unwrap();
        let sub = assemble_psi_subproblem(&ch, &w, &hwi, &aux).unwrap();
        Instance {
            sub,
            psi0: psi,
            p_a: split.p_a,
        }
    }

    fn default_instance(seed: u64) -> Instance {
        instance(&ScenarioConfig::default(), seed)
    }

    #[test]
    fn scalar_delta_is_exact() {
        let Instance { mut sub, psi0, p_a } = default_instance(1);
        sub.delta = CMat::identity(16, 16).scale(3.0);
        let sur = majorize_psi(&sub, &psi0, p_a).unwrap();
        let mut rng = seeded_rng(2, 0);
        for _ in 0..20 {
            let psi = CVec::from_fn(16, |_, _| complex_gaussian(&mut rng) * 10.0);
            let f = sub.objective(&psi);
            assert!((sur.objective(&psi) - f).abs() <= 1e-10 * f.abs().max(1.0));
        }
    }

    #[test]
    fn surrogates_dominate_and_touch() {
        let Instance { sub, psi0, p_a } = default_instance(3);
        let sur = majorize_psi(&sub, &psi0, p_a).unwrap();
        let f0 = sub.objective(&psi0);
        assert!((sur.objective(&psi0) - f0).abs() <= 1e-10 * f0.abs());
        let g0 = sub.amplification_power(&psi0);
        assert!((sur.constraint_value(&psi0) - g0).abs() <= 1e-10 * g0);
        let mut rng = seeded_rng(4, 0);
        for _ in 0..100 {
            let psi = CVec::from_fn(16, |_, _| complex_gaussian(&mut rng) * psi0.norm() / 4.0);
            let f = sub.objective(&psi);
            let fs = sur.objective(&psi);
            assert!(fs >= f - 1e-10 * f.abs().max(fs.abs()));
            let g = sub.amplification_power(&psi);
            assert!(sur.constraint_value(&psi) >= g - 1e-10 * g);
        }
    }

    #[test]
    fn surrogate_gradients_match_finite_differences() {
        let Instance { sub, psi0, p_a } = default_instance(5);
        let sur = majorize_psi(&sub, &psi0, p_a).unwrap();
        let (gf, gg) = sur.gradients(&psi0);
        let step = 1e-6 * psi0.norm();
        for m in 0..16 {
            for dir in [c(1.0), Complex64::new(0.0, 1.0)] {
                let mut plus = psi0.clone();
                let mut minus = psi0.clone();
                plus[m] += dir * step;
                minus[m] -= dir * step;
                let fd_f = (sub.objective(&plus) - sub.objective(&minus)) / (2.0 * step);
                let fd_g = (sub.amplification_power(&plus) - sub.amplification_power(&minus)) / (2.0 * step);
                let an_f = (dir.conj() * gf[m]).re;
                let an_g = (dir.conj() * gg[m]).re;
                assert!((fd_f - an_f).abs() <= 1e-5 * gf.norm(), "{fd_f} vs {an_f}");
                assert!((fd_g - an_g).abs() <= 1e-5 * gg.norm(), "{fd_g} vs {an_g}");
            }
        }
    }

    #[test]
    fn aso_step_examples() {
        let (theta, a) = aso_step(c(-2.0), 1.0, c(1.0), ElementUpdate::Full);
        assert!((theta - c(1.0)).norm() < 1e-15);
        assert!((a - 1.0).abs() < 1e-15);

        let (theta, a) = aso_step(Complex64::new(0.0, 2.0), 1.0, c(1.0), ElementUpdate::Full);
        assert!((wrap_phase(theta.arg()) - 1.5 * PI).abs() < 1e-12);
        assert!((a - 1.0).abs() < 1e-15);

        let current = Complex64::from_polar(2.0, 0.4);
        let (theta, a) = aso_step(c(0.0), 1.0, current, ElementUpdate::Full);
        assert_eq!(a, 0.0);
        assert!((theta - Complex64::from_polar(1.0, 0.4)).norm() < 1e-15);
    }

    #[test]
    fn aso_step_beats_random_alternatives() {
        let mut rng = seeded_rng(6, 0);
        for _ in 0..20 {
            let b = complex_gaussian(&mut rng) * 3.0;
            let curvature = rng.random_range(0.1..5.0);
            let h = |psi: Complex64| curvature * psi.norm_sqr() + (psi.conj() * b).re;
            let (theta, a) = aso_step(b, curvature, c(1.0), ElementUpdate::Full);
            let best = h(theta * a);
            for _ in 0..1000 {
                let alt = Complex64::from_polar(rng.random_range(0.0..3.0 * a), rng.random_range(0.0..2.0 * PI));
                assert!(best <= h(alt) + 1e-12);
            }
        }
    }

    #[test]
    fn unpriced_feasible_gives_zero_price() {
        let Instance { sub, psi0, .. } = default_instance(7);
        let sur = majorize_psi(&sub, &psi0, 1e12).unwrap();
        assert_eq!(find_price(&sur, &psi0, ElementUpdate::Full, 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn price_curve_and_slackness() {
        let Instance { sub, psi0, p_a } = default_instance(8);
        let sur = majorize_psi(&sub, &psi0, p_a).unwrap();
        let eta = find_price(&sur, &psi0, ElementUpdate::Full, 1e-8).unwrap();
        let hi = 10.0 * eta.max(1.0);
        let etas: Vec<f64> = (0..10).map(|i| hi * i as f64 / 9.0).collect();
        let curve = price_curve(&sur, &psi0, ElementUpdate::Full, &etas);
        assert!(curve.windows(2).all(|p| p[1] <= p[0] + 1e-12 * p[0].abs()));
        let psi = sweep(&sur, eta, &psi0, ElementUpdate::Full, &(0..16).collect::<Vec<_>>());
        let slack = sur.constraint(&psi) - sur.p_a_tilde;
        assert!(slack <= 0.0);
        assert!((eta * slack).abs() <= 1e-6 * p_a);
    }

    #[test]
    fn optimize_psi_descends_and_stays_feasible() {
        for seed in 0..20 {
            let Instance { sub, psi0, p_a } = default_instance(100 + seed);
            let sol = optimize_psi(&sub, &psi0, p_a, &PsiSolverOptions::default()).unwrap();
            let t = &sol.info.trace;
            assert!(t.windows(2).all(|p| p[1] <= p[0]), "seed {seed}");
            assert!(sub.amplification_power(&sol.psi) <= p_a * (1.0 + 1e-6));
        }
    }

    #[test]
    fn single_element_converges_immediately() {
        let config = ScenarioConfig {
            n_elements: 1,
            ..ScenarioConfig::default()
        };
        let Instance { sub, psi0, p_a } = instance(&config, 9);
        let opts = PsiSolverOptions {
            tol: 1e-12,
            ..PsiSolverOptions::default()
        };
        let sol = optimize_psi(&sub, &psi0, p_a, &opts).unwrap();
        assert!(sol.info.iterations <= 2, "{:?}", sol.info);
    }

    #[test]
    fn two_elements_match_grid_search() {
        let config = ScenarioConfig {
            n_elements: 2,
            ..ScenarioConfig::default()
        };
        for seed in 0..3 {
            let Instance { sub, psi0, p_a } = instance(&config, 10 + seed);
            let opts = PsiSolverOptions {
                tol: 1e-12,
                max_iters: 2000,
                ..PsiSolverOptions::default()
            };
            let sol = optimize_psi(&sub, &psi0, p_a, &opts).unwrap();
            let mm = sub.objective(&sol.psi);

            let caps: Vec<f64> = sub.lambda.iter().map(|l| (p_a / l).sqrt()).collect();
            let element = |m: usize, i: usize, j: usize| {
                Complex64::from_polar(caps[m] * j as f64 / 31.0, 2.0 * PI * i as f64 / 64.0)
            };
            let mut best = f64::INFINITY;
            for i0 in 0..64 {
                for j0 in 0..32 {
                    for i1 in 0..64 {
                        for j1 in 0..32 {
                            let psi = CVec::from_vec(vec![element(0, i0, j0), element(1, i1, j1)]);
                            if sub.amplification_power(&psi) <= p_a {
                                best = best.min(sub.objective(&psi));
                            }
                        }
                    }
                }
            }
            assert!(mm <= best + 0.01 * best.abs(), "seed {seed}: {mm} vs grid {best}");
        }
    }

    #[test]
    fn phase_only_keeps_unit_modulus() {
        let Instance { sub, .. } = default_instance(11);
        let psi0 = CVec::from_element(16, c(1.0));
        let opts = PsiSolverOptions {
            update: ElementUpdate::PhaseOnly,
            ..PsiSolverOptions::default()
        };
        let sol = optimize_psi(&sub, &psi0, 0.0, &opts).unwrap();
        assert!(sol.psi.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert!(sol.info.trace.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn amplitude_only_keeps_phases() {
        let Instance { sub, psi0, p_a } = default_instance(12);
        let opts = PsiSolverOptions {
            update: ElementUpdate::AmplitudeOnly,
            ..PsiSolverOptions::default()
        };
        let sol = optimize_psi(&sub, &psi0, p_a, &opts).unwrap();
        for (a, b) in sol.psi.iter().zip(psi0.iter()) {
            if a.norm() > 0.0 {
                assert!((a / a.norm() - b / b.norm()).norm() < 1e-12);
            }
        }
        assert!(sub.amplification_power(&sol.psi) <= p_a * (1.0 + 1e-6));
    }

    #[test]
    fn shuffled_order_reaches_same_point() {
        let Instance { sub, psi0, p_a } = default_instance(13);
        let a = optimize_psi(&sub, &psi0, p_a, &PsiSolverOptions::default()).unwrap();
        let opts = PsiSolverOptions {
            shuffle_seed: Some(5),
            ..PsiSolverOptions::default()
        };
        let b = optimize_psi(&sub, &psi0, p_a, &opts).unwrap();
        assert!((a.psi - b.psi).norm() <= 1e-9 * psi0.norm());
    }

    #[test]
    fn constraint_depends_on_amplitudes_only() {
        let Instance { sub, psi0, .. } = default_instance(14);
        let mut rng = seeded_rng(15, 0);
        let rotated = CVec::from_iterator(
            16,
            psi0.iter()
                .map(|z| z * Complex64::from_polar(1.0, rng.random::<f64>() * 6.0)),
        );
        let (a, b) = (sub.amplification_power(&psi0), sub.amplification_power(&rotated));
        assert!((a - b).abs() <= 1e-12 * a);
    }
}
