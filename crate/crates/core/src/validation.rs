//! Independent oracles for the closed forms and the solvers.
//!
//! Every check is deterministic given its seed and reports the measured
//! quantity next to the tolerance it is judged against.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamformer::majorize_gamma;
use crate::fp::{assemble_psi_subproblem, assemble_w_subproblem, update_aux, PsiSubproblem, WSubproblem};
use crate::hwi::{self, HardwareModel, CROSS_MOMENT, MEAN_CONJ_SCALE};
use crate::orchestrator::{run_bcd_aso, SolverOptions};
use crate::rate::{amplification_power, monte_carlo_rate, sum_rate, McEstimate};
use crate::reflection::majorize_psi;
use crate::scenario::{complex_gaussian, generate_channels, ChannelSet, RisMode, ScenarioConfig};
use crate::{seeded_rng, CMat, CVec, Error, Result};

/// Pass/fail thresholds used across the suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub z_limit: f64,
    /// Relative gap between a surrogate and the original at the anchor.
    pub tightness: f64,
    /// Relative error of the surrogate gradient against central differences.
    pub gradient: f64,
    /// Relative amount by which the original may exceed its surrogate.
    pub domination: f64,
    /// Required fraction of the grid optimum.
    pub grid_fraction: f64,
    /// Largest relative gap between the averaged-model rate and Monte-Carlo.
    pub rate_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            z_limit: 3.0,
            tightness: 1e-10,
            gradient: 1e-5,
            domination: 1e-10,
            grid_fraction: 0.95,
            rate_gap: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub name: String,
    pub estimate: f64,
    pub expected: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub elements: usize,
    pub samples: usize,
    /// Real and imaginary parts of each upper off-diagonal second moment and
    /// of each conjugate mean.
    pub scores: Vec<ZScore>,
    /// Largest `|E{|φ_m|²} - 1|`.
    pub diagonal_deviation: f64,
    pub max_abs_z: f64,
    pub z_limit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn score(&self, name: String, expected: f64) -> ZScore {
        let mean = self.sum / self.n;
        let var = (self.sum_sq / self.n - mean * mean).max(0.0) * self.n / (self.n - 1.0);
        let se = (var / self.n).sqrt();
        let z = if se > 0.0 {
            (mean - expected) / se
        } else if mean == expected {
            0.0
        } else {
            f64::INFINITY
        };
        ZScore {
            name,
            estimate: mean,
            expected,
            z,
        }
    }
}

/// Empirical first and second moments of the phase-error vector against
/// `E{φ*} = 2/π` and `E{φ_iφ_j*} = 4/π²`.
pub fn check_phase_noise_moments<R: Rng + ?Sized>(
    m: usize,
    samples: usize,
    z_limit: f64,
    rng: &mut R,
) -> Result<MomentReport> {
    if m == 0 || samples < 2 {
        return Err(Error::InvalidInput(
            "moment check needs M >= 1 and at least two samples".into(),
        ));
    }
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let mut cross = vec![(Moments::default(), Moments::default()); pairs.len()];
    let mut mean = vec![(Moments::default(), Moments::default()); m];
    let mut diagonal_deviation: f64 = 0.0;
    for _ in 0..samples {
        let phi = hwi::phase_noise_sample(m, rng);
        for (acc, &(i, j)) in cross.iter_mut().zip(&pairs) {
            let z = phi[i] * phi[j].conj();
            acc.0.push(z.re);
            acc.1.push(z.im);
        }
        for (acc, z) in mean.iter_mut().zip(phi.iter()) {
            acc.0.push(z.re);
            acc.1.push(-z.im);
            diagonal_deviation = diagonal_deviation.max((z.norm_sqr() - 1.0).abs());
        }
    }
    let mut scores = Vec::with_capacity(2 * (pairs.len() + m));
    for ((re, im), (i, j)) in cross.iter().zip(&pairs) {
        scores.push(re.score(format!("Re E[phi_{i} phi_{j}*]"), CROSS_MOMENT));
        scores.push(im.score(format!("Im E[phi_{i} phi_{j}*]"), 0.0));
    }
    for (i, (re, im)) in mean.iter().enumerate() {
        scores.push(re.score(format!("Re E[phi_{i}*]"), MEAN_CONJ_SCALE));
        scores.push(im.score(format!("Im E[phi_{i}*]"), 0.0));
    }
    let max_abs_z = scores.iter().map(|s| s.z.abs()).fold(0.0, f64::max);
    Ok(MomentReport {
        elements: m,
        samples,
        scores,
        diagonal_deviation,
        max_abs_z,
        z_limit,
        passed: max_abs_z <= z_limit && diagonal_deviation <= 1e-12,
    })
}

/// Subproblems built at a random feasible point of one channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateInstance {
    pub w_sub: WSubproblem,
    pub w_anchor: CMat,
    pub psi_sub: PsiSubproblem,
    pub psi_anchor: CVec,
    pub p_a: f64,
}

pub fn surrogate_instance(config: &ScenarioConfig, seed: u64) -> Result<SurrogateInstance> {
    let mut rng = seeded_rng(seed, 0);
    let channels = generate_channels(config, &mut rng)?;
    let hwi = config.hardware();
    let split = config.power_split(RisMode::Active);
    if !split.ris_on {
        return Err(Error::InvalidInput(
            "surrogate instance needs an active surface budget".into(),
        ));
    }
    let (n, k, m) = (config.n_antennas, config.n_users, config.n_elements);
    let w = CMat::from_fn(n, k, |_, _| complex_gaussian(&mut rng));
    let w = w.scale((split.p_t / w.norm_squared()).sqrt());
    let psi = CVec::from_fn(m, |_, _| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)));
    let base = amplification_power(&channels, &w, &psi, hwi.kappa_t, hwi.sigma_d_sq);
    let psi = psi.scale((0.9 * split.p_a / base).sqrt());
    let aux = update_aux(&channels, &w, &psi, &hwi)?;
    Ok(SurrogateInstance {
        w_sub: assemble_w_subproblem(&channels, &psi, &hwi, &aux, split.p_a)?,
        w_anchor: w.clone(),
        psi_sub: assemble_psi_subproblem(&channels, &w, &hwi, &aux)?,
        psi_anchor: psi,
        p_a: split.p_a,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateCheck {
    pub name: String,
    pub tightness: f64,
    pub gradient_error: f64,
    pub domination_violation: f64,
    pub trials: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub checks: Vec<SurrogateCheck>,
    pub passed: bool,
}

/// A real function of a complex vector, its majorizer and the majorizer's
/// gradient at the anchor.
struct Majorized<'a> {
    name: &'a str,
    original: &'a dyn Fn(&CVec) -> f64,
    surrogate: &'a dyn Fn(&CVec) -> f64,
    gradient: CVec,
}

fn check_majorizer<R: Rng + ?Sized>(
    f: &Majorized<'_>,
    anchor: &CVec,
    trials: usize,
    tol: &Tolerances,
    rng: &mut R,
) -> SurrogateCheck {
    let at = (f.original)(anchor);
    let scale = at.abs().max((f.surrogate)(anchor).abs()).max(f64::MIN_POSITIVE);
    let tightness = ((f.surrogate)(anchor) - at).abs() / scale;

    let step = 1e-6 * anchor.norm().max(1e-300);
    let mut err: f64 = 0.0;
    for i in 0..anchor.len() {
        for dir in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
            let mut plus = anchor.clone();
            let mut minus = anchor.clone();
            plus[i] += dir * step;
            minus[i] -= dir * step;
            let fd = ((f.original)(&plus) - (f.original)(&minus)) / (2.0 * step);
            err = err.max((fd - (dir.conj() * f.gradient[i]).re).abs());
        }
    }
    let gradient_error = err / f.gradient.norm().max(f64::MIN_POSITIVE);

    let mut violation: f64 = 0.0;
    for t in 0..trials {
        let radius = anchor.norm() * 2.0 * (t as f64 + 1.0) / trials as f64;
        let dir = CVec::from_fn(anchor.len(), |_, _| complex_gaussian(rng));
        let x = anchor + dir.scale(radius / dir.norm().max(f64::MIN_POSITIVE));
        let (orig, sur) = ((f.original)(&x), (f.surrogate)(&x));
        violation = violation.max((orig - sur) / orig.abs().max(sur.abs()).max(f64::MIN_POSITIVE));
    }
    SurrogateCheck {
        name: f.name.to_string(),
        tightness,
        gradient_error,
        domination_violation: violation.max(0.0),
        trials,
        passed: tightness <= tol.tightness && gradient_error <= tol.gradient && violation <= tol.domination,
    }
}

/// Tightness, gradient match and domination of the beamforming-constraint
/// majorizer and of both reflection majorizers.
pub fn check_surrogates<R: Rng + ?Sized>(
    inst: &SurrogateInstance,
    trials: usize,
    tol: &Tolerances,
    rng: &mut R,
) -> Result<SurrogateReport> {
    let (n, k) = inst.w_anchor.shape();
    let as_mat = |v: &CVec| CMat::from_column_slice(n, k, v.as_slice());
    let w_anchor = CVec::from_column_slice(inst.w_anchor.as_slice());
    let w_sur = majorize_gamma(&inst.w_sub, &inst.w_anchor)?;
    let w_original = |v: &CVec| inst.w_sub.gamma_form(&as_mat(v));
    let w_surrogate = |v: &CVec| w_sur.value(&as_mat(v));
    let w_grad = CVec::from_column_slice(w_sur.gradient(&inst.w_anchor).as_slice());

    let psi_sur = majorize_psi(&inst.psi_sub, &inst.psi_anchor, inst.p_a)?;
    let (f_grad, g_grad) = psi_sur.gradients(&inst.psi_anchor);
    let f_original = |v: &CVec| inst.psi_sub.objective(v);
    let f_surrogate = |v: &CVec| psi_sur.objective(v);
    let g_original = |v: &CVec| inst.psi_sub.amplification_power(v);
    let g_surrogate = |v: &CVec| psi_sur.constraint_value(v);

    let checks = vec![
        check_majorizer(
            &Majorized {
                name: "beamforming amplification constraint",
                original: &w_original,
                surrogate: &w_surrogate,
                gradient: w_grad,
            },
            &w_anchor,
            trials,
            tol,
            rng,
        ),
        check_majorizer(
            &Majorized {
                name: "reflection objective",
                original: &f_original,
                surrogate: &f_surrogate,
                gradient: f_grad,
            },
            &inst.psi_anchor,
            trials,
            tol,
            rng,
        ),
        check_majorizer(
            &Majorized {
                name: "reflection amplification constraint",
                original: &g_original,
                surrogate: &g_surrogate,
                gradient: g_grad,
            },
            &inst.psi_anchor,
            trials,
            tol,
            rng,
        ),
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(SurrogateReport { checks, passed })
}

/// Resolution of the exhaustive reflection grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Phases per element, uniform on `[0, 2π)`.
    pub phases: usize,
    /// Amplitude levels per element: zero plus log-spaced levels ending at
    /// the largest amplitude any feasible point can have.
    pub amplitudes: usize,
    /// Decades spanned by the non-zero amplitude levels.
    pub decades: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            phases: 64,
            amplitudes: 32,
            decades: 3.0,
        }
    }
}

impl GridSpec {
    /// Candidate values of one element of amplitude cap `cap`.
    pub fn element_values(&self, cap: f64) -> Vec<Complex64> {
        let mut values = vec![Complex64::new(0.0, 0.0)];
        let levels = self.amplitudes.saturating_sub(1);
        for j in 0..levels {
            let exponent = if levels > 1 {
                self.decades * (j as f64 / (levels - 1) as f64 - 1.0)
            } else {
                0.0
            };
            let a = cap * 10f64.powf(exponent);
            for i in 0..self.phases {
                values.push(Complex64::from_polar(a, 2.0 * PI * i as f64 / self.phases as f64));
            }
        }
        values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    /// Sum rate of the best grid point, evaluated by the rate model.
    pub best_rate: f64,
    pub psi: CVec,
    pub w: CMat,
    pub evaluated: usize,
}

type C2 = [Complex64; 2];
type M2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Single-user beamforming problem at one reflection vector, `N ≤ 2`.
struct SmallProblem {
    n: usize,
    signal: M2,
    distortion: M2,
    gamma: M2,
    noise: f64,
    p_t: f64,
    p_m: f64,
}

fn form(a: &M2, w: &C2, n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (w[i].conj() * a[i][j] * w[j]).re;
        }
    }
    acc
}

impl SmallProblem {
    /// SINR of direction `w` scaled onto the boundary of the feasible set.
    fn sinr(&self, w: &C2) -> (f64, C2) {
        let norm = w[..self.n].iter().map(|z| z.norm_sqr()).sum::<f64>();
        if norm == 0.0 {
            return (0.0, [ZERO; 2]);
        }
        let gamma = form(&self.gamma, w, self.n);
        let mut t2 = self.p_t / norm;
        if gamma > 0.0 && self.p_m.is_finite() {
            t2 = t2.min(self.p_m / gamma);
        }
        let s = form(&self.signal, w, self.n) * t2;
        let d = form(&self.distortion, w, self.n) * t2;
        let t = t2.sqrt();
        (s / (d + self.noise), [w[0] * t, w[1] * t])
    }

    /// Direction maximizing `wᴴSw / wᴴD_βw` with
    /// `D_β = D + noise·(β I / P_T + (1-β) Γ / P_m)`.
    fn direction(&self, beta: f64) -> C2 {
        let mut d = self.distortion;
        for i in 0..self.n {
            d[i][i] += self.noise * beta / self.p_t;
            if self.p_m.is_finite() {
                for j in 0..self.n {
                    d[i][j] += self.gamma[i][j] * (self.noise * (1.0 - beta) / self.p_m);
                }
            }
        }
        if self.n == 1 {
            return [Complex64::new(1.0, 0.0), ZERO];
        }
        let s = &self.signal;
        let a = d[0][0].re * d[1][1].re - d[0][1].norm_sqr();
        let b = -(s[0][0].re * d[1][1].re + s[1][1].re * d[0][0].re) + 2.0 * (s[0][1] * d[0][1].conj()).re;
        let c = s[0][0].re * s[1][1].re - s[0][1].norm_sqr();
        let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
        let lambda = if a > 0.0 { (-b + disc) / (2.0 * a) } else { -c / b };
        let m = [
            [s[0][0] - d[0][0] * lambda, s[0][1] - d[0][1] * lambda],
            [s[1][0] - d[1][0] * lambda, s[1][1] - d[1][1] * lambda],
        ];
        let first = [-m[0][1], m[0][0]];
        let second = [m[1][1], -m[1][0]];
        let norm = |v: &C2| v[0].norm_sqr() + v[1].norm_sqr();
        let v = if norm(&first) >= norm(&second) { first } else { second };
        if norm(&v) == 0.0 {
            [Complex64::new(1.0, 0.0), ZERO]
        } else {
            v
        }
    }

    /// Balance between the two budgets at `β`; positive when the transmit
    /// budget binds harder.
    fn balance(&self, w: &C2) -> f64 {
        let norm = w[..self.n].iter().map(|z| z.norm_sqr()).sum::<f64>();
        norm / self.p_t - form(&self.gamma, w, self.n) / self.p_m
    }

    /// Best SINR over both budgets by bisection on the budget weight `β`.
    fn solve(&self) -> (f64, C2) {
        let top = self.direction(1.0);
        if !self.p_m.is_finite() || self.balance(&top) >= 0.0 {
            return self.sinr(&top);
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.balance(&self.direction(mid)) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        let at_hi = self.sinr(&self.direction(hi));
        let at_mid = self.sinr(&self.direction(0.5 * (lo + hi)));
        if at_mid.0 > at_hi.0 {
            at_mid
        } else {
            at_hi
        }
    }
}

/// Exhaustive search over the reflection grid for a single-user instance with
/// at most two elements and two antennas. The beamformer at each grid point
/// is the best power-constrained direction.
pub fn grid_search_small(
    channels: &ChannelSet,
    hwi: &HardwareModel,
    p_t: f64,
    p_a: f64,
    spec: &GridSpec,
) -> Result<GridResult> {
    channels.validate()?;
    let (m, n, k) = (channels.n_elements(), channels.n_antennas(), channels.n_users());
    if m > 2 || n > 2 || k != 1 {
        return Err(Error::InvalidInput(format!(
            "grid search supports M <= 2, N <= 2, K = 1 (got M={m}, N={n}, K={k})"
        )));
    }
    if m > 0 && !(hwi.sigma_d_sq > 0.0) {
        return Err(Error::InvalidInput(
            "grid search needs positive RIS noise to bound amplitudes".into(),
        ));
    }
    let cap = (p_a / hwi.sigma_d_sq).sqrt();
    let values = spec.element_values(cap);
    let per_element: Vec<&[Complex64]> = (0..2)
        .map(|i| if i < m { values.as_slice() } else { &values[..1] })
        .collect();

    let (kt, kr) = (hwi.kappa_t, hwi.kappa_r[0]);
    let dd = hwi::DD_SCALE.sqrt();
    let g = &channels.g;
    let h = &channels.h[0];
    let f = &channels.f[0];

    let mut best = (-1.0, [ZERO; 2], [ZERO; 2]);
    let mut evaluated = 0;
    for &e0 in per_element[0] {
        for &e1 in per_element[1] {
            let psi = [e0, e1];
            let amp_sq: f64 = psi[..m].iter().map(|z| z.norm_sqr()).sum();
            let p_m = p_a - hwi.sigma_d_sq * amp_sq;
            if m > 0 && !(p_m > 0.0) {
                continue;
            }
            evaluated += 1;
            let mut fhat = [ZERO; 2];
            let mut cols = [[ZERO; 2]; 2];
            for j in 0..n {
                fhat[j] = f[j];
                for i in 0..m {
                    let v = g[(i, j)].conj() * psi[i].conj() * h[i];
                    fhat[j] += v * MEAN_CONJ_SCALE;
                    cols[i][j] = v * dd;
                }
            }
            let mut signal = [[ZERO; 2]; 2];
            let mut gamma = [[ZERO; 2]; 2];
            for a in 0..n {
                for b in 0..n {
                    signal[a][b] = fhat[a] * fhat[b].conj();
                    for i in 0..m {
                        signal[a][b] += cols[i][a] * cols[i][b].conj();
                        gamma[a][b] += g[(i, a)].conj() * g[(i, b)] * psi[i].norm_sqr();
                    }
                }
            }
            let mut distortion = [[ZERO; 2]; 2];
            for a in 0..n {
                for b in 0..n {
                    distortion[a][b] = signal[a][b] * kr;
                }
                distortion[a][a] += signal[a][a] * ((1.0 + kr) * kt);
                gamma[a][a] *= 1.0 + kt;
            }
            let ris: f64 = (0..m).map(|i| (h[i] * psi[i]).norm_sqr()).sum();
            let problem = SmallProblem {
                n,
                signal,
                distortion,
                gamma,
                noise: (1.0 + kr) * (hwi.sigma_d_sq * ris + hwi.sigma_sq[0]),
                p_t,
                p_m: if m > 0 { p_m } else { f64::INFINITY },
            };
            let (sinr, w) = problem.solve();
            if sinr > best.0 {
                best = (sinr, psi, w);
            }
        }
    }
    let psi = CVec::from_iterator(m, best.1[..m].iter().copied());
    let w = CMat::from_iterator(n, 1, best.2[..n].iter().copied());
    Ok(GridResult {
        best_rate: sum_rate(channels, &w, &psi, hwi)?,
        psi,
        w,
        evaluated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridComparison {
    pub seed: u64,
    pub solver_rate: f64,
    pub grid_rate: f64,
    pub ratio: f64,
}

/// Best grid rate on the reduced instance `M = 2, N = 2, K = 1` for `seed`.
pub fn grid_oracle(config: &ScenarioConfig, seed: u64, spec: &GridSpec) -> Result<f64> {
    let small = small_config(config, seed);
    let channels = generate_channels(&small, &mut seeded_rng(seed, 0))?;
    let split = small.power_split(RisMode::Active);
    let result = if split.ris_on {
        grid_search_small(&channels, &small.hardware(), split.p_t, split.p_a, spec)?
    } else {
        grid_search_small(&without_surface(&channels), &small.hardware(), split.p_t, 0.0, spec)?
    };
    Ok(result.best_rate)
}

/// Solver rate on the reduced instance for `seed`.
pub fn small_instance_rate(config: &ScenarioConfig, seed: u64, opts: &SolverOptions) -> Result<f64> {
    let small = small_config(config, seed);
    let channels = generate_channels(&small, &mut seeded_rng(seed, 0))?;
    Ok(run_bcd_aso(&small, &channels, opts)?.sum_rate)
}

/// Solver against grid on the reduced instance `M = 2, N = 2, K = 1`.
pub fn compare_with_grid(
    config: &ScenarioConfig,
    seed: u64,
    spec: &GridSpec,
    opts: &SolverOptions,
) -> Result<GridComparison> {
    let solver_rate = small_instance_rate(config, seed, opts)?;
    let grid_rate = grid_oracle(config, seed, spec)?;
    Ok(GridComparison {
        seed,
        solver_rate,
        grid_rate,
        ratio: solver_rate / grid_rate,
    })
}

/// `config` reduced to two elements, two antennas and one user.
pub fn small_config(config: &ScenarioConfig, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        n_antennas: 2,
        n_elements: 2,
        seed,
        ..config.clone().with_users(1)
    }
}

fn without_surface(channels: &ChannelSet) -> ChannelSet {
    ChannelSet {
        g: CMat::zeros(0, channels.n_antennas()),
        h: vec![CVec::zeros(0); channels.n_users()],
        f: channels.f.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateGapReport {
    pub approx_rate: f64,
    pub monte_carlo: McEstimate,
    pub gap: f64,
    /// Gap range implied by a 95% interval on the Monte-Carlo mean.
    pub gap_interval: (f64, f64),
    pub threshold: f64,
    pub passed: bool,
}

/// Averaged-model sum rate against a Monte-Carlo average over phase errors.
pub fn check_rate_approximation<R: Rng + ?Sized>(
    channels: &ChannelSet,
    w: &CMat,
    psi: &CVec,
    hwi: &HardwareModel,
    trials: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<RateGapReport> {
    let approx_rate = sum_rate(channels, w, psi, hwi)?;
    let mc = monte_carlo_rate(channels, w, psi, hwi, trials, rng)?;
    let gap_at = |mean: f64| (approx_rate - mean).abs() / mean;
    let gap = gap_at(mc.mean);
    let (lo, hi) = (mc.mean - 1.96 * mc.stderr, mc.mean + 1.96 * mc.stderr);
    let (a, b) = (gap_at(lo), gap_at(hi));
    let mut interval = (a.min(b), a.max(b));
    if (lo..=hi).contains(&approx_rate) {
        interval.0 = 0.0;
    }
    Ok(RateGapReport {
        approx_rate,
        monte_carlo: mc,
        gap,
        gap_interval: interval,
        threshold,
        passed: gap <= threshold,
    })
}

/// One line of the validation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub metric: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub moment_elements: usize,
    pub moment_samples: usize,
    pub surrogate_trials: usize,
    pub grid_seeds: usize,
    pub grid: GridSpec,
    pub monte_carlo_trials: usize,
    pub tolerances: Tolerances,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            moment_elements: 4,
            moment_samples: 1_000_000,
            surrogate_trials: 100,
            grid_seeds: 20,
            grid: GridSpec::default(),
            monte_carlo_trials: 100_000,
            tolerances: Tolerances::default(),
        }
    }
}

/// Runs every oracle around `config` and collects one outcome per check.
pub fn run_suite(config: &ScenarioConfig, solver: &SolverOptions, opts: &SuiteOptions) -> Result<ValidationSummary> {
    let tol = &opts.tolerances;
    let seed = config.seed;
    let mut checks = Vec::new();

    let moments = check_phase_noise_moments(
        opts.moment_elements,
        opts.moment_samples,
        tol.z_limit,
        &mut seeded_rng(seed, 10),
    )?;
    checks.push(CheckOutcome {
        name: "phase_noise_moments".into(),
        passed: moments.passed,
        metric: moments.max_abs_z,
        threshold: tol.z_limit,
        detail: format!(
            "M={}, {} samples, max |z| over {} scores",
            moments.elements,
            moments.samples,
            moments.scores.len()
        ),
    });

    let instance = surrogate_instance(config, seed)?;
    let surrogates = check_surrogates(&instance, opts.surrogate_trials, tol, &mut seeded_rng(seed, 11))?;
    for check in &surrogates.checks {
        checks.push(CheckOutcome {
            name: format!("surrogate: {}", check.name),
            passed: check.passed,
            metric: check
                .gradient_error
                .max(check.tightness)
                .max(check.domination_violation),
            threshold: tol.gradient.min(tol.tightness).min(tol.domination),
            detail: format!(
                "tightness {:e}, gradient {:e}, domination {:e}",
                check.tightness, check.gradient_error, check.domination_violation
            ),
        });
    }

    if opts.grid_seeds > 0 {
        let mut worst = f64::INFINITY;
        for s in 0..opts.grid_seeds as u64 {
            worst = worst.min(compare_with_grid(config, seed + s, &opts.grid, solver)?.ratio);
        }
        checks.push(CheckOutcome {
            name: "grid_near_optimality".into(),
            passed: worst >= tol.grid_fraction,
            metric: worst,
            threshold: tol.grid_fraction,
            detail: format!("worst solver/grid ratio over {} seeds", opts.grid_seeds),
        });
    }

    let channels = generate_channels(config, &mut seeded_rng(seed, 0))?;
    let report = run_bcd_aso(config, &channels, solver)?;
    let gap = check_rate_approximation(
        &channels,
        &report.final_w,
        &report.final_psi,
        &config.hardware(),
        opts.monte_carlo_trials,
        tol.rate_gap,
        &mut seeded_rng(seed, 12),
    )?;
    checks.push(CheckOutcome {
        name: "rate_approximation_gap".into(),
        passed: gap.passed,
        metric: gap.gap,
        threshold: tol.rate_gap,
        detail: format!(
            "model {:.4} bps/Hz, Monte-Carlo {:.4} ± {:.4}",
            gap.approx_rate, gap.monte_carlo.mean, gap.monte_carlo.stderr
        ),
    });

    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationSummary { checks, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::dbm_to_watts;

    #[test]
    fn single_element_diagonal_is_exact() {
        let report = check_phase_noise_moments(1, 1000, 3.0, &mut seeded_rng(1, 0)).unwrap();
        assert!(report.diagonal_deviation < 1e-12);
        assert_eq!(report.scores.len(), 2);
    }

    #[test]
    fn moments_pass_at_moderate_size() {
        let report = check_phase_noise_moments(4, 200_000, 3.0, &mut seeded_rng(2, 0)).unwrap();
        assert!(report.passed, "{:?}", report.scores);
    }

    #[test]
    fn surrogates_pass() {
        let inst = surrogate_instance(&ScenarioConfig::default(), 3).unwrap();
        let report = check_surrogates(&inst, 100, &Tolerances::default(), &mut seeded_rng(4, 0)).unwrap();
        assert!(report.passed, "{:?}", report.checks);
    }

    #[test]
    fn identity_gamma_is_exact_majorizer() {
        let mut inst = surrogate_instance(&ScenarioConfig::default(), 5).unwrap();
        inst.w_sub.gamma_block = CMat::identity(4, 4).scale(2.0);
        let report = check_surrogates(&inst, 50, &Tolerances::default(), &mut seeded_rng(6, 0)).unwrap();
        let w = &report.checks[0];
        assert!(w.tightness < 1e-14 && w.domination_violation < 1e-14, "{w:?}");
    }

    #[test]
    fn grid_values_are_nested() {
        let coarse = GridSpec {
            phases: 32,
            amplitudes: 17,
            decades: 3.0,
        };
        let fine = GridSpec::default();
        let fine_values = fine.element_values(7.0);
        for v in coarse.element_values(7.0) {
            assert!(fine_values.iter().any(|u| (u - v).norm() <= 1e-12 * 7.0), "{v}");
        }
    }

    fn small(seed: u64) -> (ScenarioConfig, ChannelSet) {
        let config = small_config(&ScenarioConfig::default(), seed);
        let ch = generate_channels(&config, &mut seeded_rng(seed, 0)).unwrap();
        (config, ch)
    }

    #[test]
    fn no_elements_reduces_to_closed_form() {
        let (config, ch) = small(7);
        let bare = without_surface(&ch);
        let hwi = config.hardware();
        let p_t = 0.02;
        let result = grid_search_small(&bare, &hwi, p_t, 0.0, &GridSpec::default()).unwrap();
        assert_eq!(result.evaluated, 1);
        let f = &bare.f[0];
        let (kt, kr) = (hwi.kappa_t, hwi.kappa_r[0]);
        let r = f * f.adjoint();
        let d = CMat::from_diagonal(&CVec::from_iterator(
            2,
            f.iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)),
        ));
        let denom =
            r.scale(kr) + d.scale((1.0 + kr) * kt) + CMat::identity(2, 2).scale((1.0 + kr) * hwi.sigma_sq[0] / p_t);
        let x = denom.cholesky().unwrap().solve(f);
        let expected = (1.0 + f.dotc(&x).re).log2();
        assert!((result.best_rate - expected).abs() <= 1e-10 * expected);
    }

    #[test]
    fn grid_point_is_feasible_and_consistent() {
        let (config, ch) = small(8);
        let split = config.power_split(RisMode::Active);
        let hwi = config.hardware();
        let spec = GridSpec {
            phases: 16,
            amplitudes: 9,
            decades: 3.0,
        };
        let result = grid_search_small(&ch, &hwi, split.p_t, split.p_a, &spec).unwrap();
        assert!(result.w.norm_squared() <= split.p_t * (1.0 + 1e-9));
        let amp = amplification_power(&ch, &result.w, &result.psi, hwi.kappa_t, hwi.sigma_d_sq);
        assert!(amp <= split.p_a * (1.0 + 1e-9));
    }

    #[test]
    fn finer_grid_is_never_worse() {
        let (config, ch) = small(9);
        let split = config.power_split(RisMode::Active);
        let hwi = config.hardware();
        let coarse = GridSpec {
            phases: 8,
            amplitudes: 7,
            decades: 3.0,
        };
        let fine = GridSpec {
            phases: 16,
            amplitudes: 13,
            decades: 3.0,
        };
        let a = grid_search_small(&ch, &hwi, split.p_t, split.p_a, &coarse).unwrap();
        let b = grid_search_small(&ch, &hwi, split.p_t, split.p_a, &fine).unwrap();
        assert!(b.best_rate >= a.best_rate * (1.0 - 1e-12));
    }

    #[test]
    fn zero_reflection_has_no_gap() {
        let config = ScenarioConfig::default();
        let ch = generate_channels(&config, &mut seeded_rng(10, 0)).unwrap();
        let w = crate::orchestrator::init_beamformer(&ch, 0.01).w;
        let report = check_rate_approximation(
            &ch,
            &w,
            &CVec::zeros(16),
            &config.hardware(),
            5000,
            0.1,
            &mut seeded_rng(11, 0),
        )
        .unwrap();
        assert!(report.gap < 1e-12, "{report:?}");
        assert!(report.monte_carlo.stderr < 1e-12);
    }

    #[test]
    fn suite_reports_injected_failure() {
        let config = ScenarioConfig {
            p_budget: dbm_to_watts(30.0),
            ..ScenarioConfig::default()
        };
        let opts = SuiteOptions {
            moment_samples: 10_000,
            surrogate_trials: 10,
            grid_seeds: 0,
            monte_carlo_trials: 2000,
            tolerances: Tolerances {
                rate_gap: 0.0,
                ..Tolerances::default()
            },
            ..SuiteOptions::default()
        };
        let summary = run_suite(&config, &SolverOptions::default(), &opts).unwrap();
        assert!(!summary.passed);
        let gap = summary
            .checks
            .iter()
            .find(|c| c.name == "rate_approximation_gap")
            .unwrap();
        assert!(!gap.passed);
    }
}
