//! Alternating outer loop, initialization and the comparison schemes.
//!
//! Each outer iteration refreshes the quadratic-transform variables in closed
//! form, then improves the beamformers and the reflection vector in turn.
//! Every block step cannot decrease the transformed objective, which in turn
//! lower-bounds the sum rate and touches it after the refresh, so the sum-rate
//! trace is non-decreasing.

use std::f64::consts::LOG2_E;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamformer::{optimize_w, WSolverOptions};
use crate::fp::{assemble_psi_subproblem, assemble_w_subproblem, objective_r, update_aux};
use crate::hwi::HardwareModel;
use crate::rate::{amplification_power, amplification_weights, sum_rate, Beamformer, ReflectionCoefficients};
use crate::reflection::{optimize_psi, ElementUpdate, PsiSolverOptions};
use crate::scenario::{ChannelSet, PowerAllocation, RisMode, ScenarioConfig};
use crate::{seeded_rng, CMat, CVec, Error, Result};

/// RNG stream reserved for the random initial phases.
const INIT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Joint beamforming and active reflection design.
    BcdAso,
    /// Active surface with fixed random phases; amplitudes and beamformers
    /// optimized.
    ActiveRandomPhase,
    /// Unit-modulus surface with phase-only updates; an in-repo simplification
    /// rather than a published passive-surface algorithm.
    PassiveUnitModulus,
    /// No surface; beamformers only.
    NoRis,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::BcdAso,
        Scheme::ActiveRandomPhase,
        Scheme::PassiveUnitModulus,
        Scheme::NoRis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::BcdAso => "bcd_aso",
            Scheme::ActiveRandomPhase => "active_random_phase",
            Scheme::PassiveUnitModulus => "passive_unit_modulus",
            Scheme::NoRis => "no_ris",
        }
    }

    pub fn ris_mode(self) -> RisMode {
        match self {
            Scheme::BcdAso | Scheme::ActiveRandomPhase => RisMode::Active,
            Scheme::PassiveUnitModulus => RisMode::Passive,
            Scheme::NoRis => RisMode::Absent,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|scheme| scheme.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Scheme::ALL.iter().map(|s| s.name()).collect();
                Error::InvalidInput(format!("unknown scheme '{s}', expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative sum-rate change that ends the outer loop.
    pub tol: f64,
    pub max_iters: usize,
    /// Relative sum-rate decrease tolerated before aborting.
    pub ascent_tol: f64,
    pub w: WSolverOptions,
    pub psi: PsiSolverOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iters: 100,
            ascent_tol: 1e-9,
            w: WSolverOptions::default(),
            psi: PsiSolverOptions::default(),
        }
    }
}

/// Relative slack of both budgets at one iterate; negative means violated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSlack {
    pub transmit: f64,
    pub amplification: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub scheme: Scheme,
    /// Sum rate in bps/Hz, starting with the initial point.
    pub objective_trace: Vec<f64>,
    /// Transformed objective in bits after each auxiliary refresh.
    pub fp_trace: Vec<f64>,
    pub constraint_slacks: Vec<ConstraintSlack>,
    /// `(transmit, amplification)` multipliers of the last beamforming step.
    pub multipliers: Vec<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time: f64,
    pub sum_rate: f64,
    pub budgets: PowerAllocation,
    pub final_w: CMat,
    pub final_psi: CVec,
}

impl SolveReport {
    pub fn final_slack(&self) -> Option<ConstraintSlack> {
        self.constraint_slacks.last().copied()
    }
}

/// Matched-filter columns `w_k ∝ f_k` with `‖W‖_F² = P_T`.
pub fn init_beamformer(channels: &ChannelSet, p_t: f64) -> Beamformer {
    let (n, k) = (channels.n_antennas(), channels.n_users());
    let mut w = CMat::zeros(n, k);
    for (col, f) in channels.f.iter().enumerate() {
        let norm = f.norm();
        let dir = if norm > 0.0 {
            f.unscale(norm)
        } else {
            CVec::from_element(n, Complex64::new(1.0 / (n as f64).sqrt(), 0.0))
        };
        w.set_column(col, &dir);
    }
    let power = w.norm_squared();
    if power > 0.0 {
        w.scale_mut((p_t / power).sqrt());
    }
    Beamformer::new(w)
}

/// Uniform random phases and a common amplitude using 90% of `P_A`.
pub fn init_reflection<R: Rng + ?Sized>(
    channels: &ChannelSet,
    w: &CMat,
    p_a: f64,
    hwi: &HardwareModel,
    rng: &mut R,
) -> ReflectionCoefficients {
    let m = channels.n_elements();
    let phi: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let weight: f64 = amplification_weights(channels, w, hwi.kappa_t, hwi.sigma_d_sq)
        .iter()
        .sum();
    let a0 = if weight > 0.0 && p_a.is_finite() {
        (0.9 * p_a / weight).sqrt()
    } else {
        1.0
    };
    ReflectionCoefficients { a: vec![a0; m], phi }
}

/// Joint design with the configured active-surface budgets.
pub fn run_bcd_aso(config: &ScenarioConfig, channels: &ChannelSet, opts: &SolverOptions) -> Result<SolveReport> {
    run_scheme(Scheme::BcdAso, config, channels, opts)
}

/// One of the comparison schemes with its own budget accounting.
pub fn run_baseline(
    scheme: Scheme,
    config: &ScenarioConfig,
    channels: &ChannelSet,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    run_scheme(scheme, config, channels, opts)
}

pub fn run_scheme(
    scheme: Scheme,
    config: &ScenarioConfig,
    channels: &ChannelSet,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    config.validate()?;
    channels.validate()?;
    let budgets = config.power_split(scheme.ris_mode());
    solve_with_budgets(scheme, config, channels, budgets, opts)
}

/// Runs `scheme` with explicit budgets. A surface without budget (`ris_on`
/// false) falls back to beamforming only.
pub fn solve_with_budgets(
    scheme: Scheme,
    config: &ScenarioConfig,
    channels: &ChannelSet,
    budgets: PowerAllocation,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let start = Instant::now();
    let m = channels.n_elements();
    let mut hwi = config.hardware();
    let w0 = init_beamformer(channels, budgets.p_t).w;
    let mut rng = seeded_rng(config.seed, INIT_STREAM);

    let ris_scheme = if budgets.ris_on { scheme } else { Scheme::NoRis };
    let (psi0, p_a, update) = match ris_scheme {
        Scheme::NoRis => (CVec::zeros(m), f64::INFINITY, None),
        Scheme::PassiveUnitModulus => {
            hwi.sigma_d_sq = 0.0;
            let phases = init_reflection(channels, &w0, f64::INFINITY, &hwi, &mut rng);
            let unit = ReflectionCoefficients {
                a: vec![1.0; m],
                ..phases
            };
            (unit.psi(), f64::INFINITY, Some(ElementUpdate::PhaseOnly))
        }
        Scheme::BcdAso | Scheme::ActiveRandomPhase => {
            let init = init_reflection(channels, &w0, budgets.p_a, &hwi, &mut rng);
            let update = if ris_scheme == Scheme::BcdAso {
                ElementUpdate::Full
            } else {
                ElementUpdate::AmplitudeOnly
            };
            (init.psi(), budgets.p_a, Some(update))
        }
    };

    let mut state = Alternation {
        channels,
        hwi: &hwi,
        p_t: budgets.p_t,
        p_a,
        update,
        opts,
    };
    let mut report = state.run(scheme, w0, psi0)?;
    report.budgets = budgets;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

struct Alternation<'a> {
    channels: &'a ChannelSet,
    hwi: &'a HardwareModel,
    p_t: f64,
    p_a: f64,
    /// `None` skips the reflection block.
    update: Option<ElementUpdate>,
    opts: &'a SolverOptions,
}

impl Alternation<'_> {
    fn slack(&self, w: &CMat, psi: &CVec) -> ConstraintSlack {
        let amplification = if self.p_a.is_finite() {
            let used = amplification_power(self.channels, w, psi, self.hwi.kappa_t, self.hwi.sigma_d_sq);
            (self.p_a - used) / self.p_a
        } else {
            1.0
        };
        ConstraintSlack {
            transmit: (self.p_t - w.norm_squared()) / self.p_t,
            amplification,
        }
    }

    fn run(&mut self, scheme: Scheme, mut w: CMat, mut psi: CVec) -> Result<SolveReport> {
        let mut rate = sum_rate(self.channels, &w, &psi, self.hwi)?;
        let mut report = SolveReport {
            scheme,
            objective_trace: vec![rate],
            fp_trace: Vec::new(),
            constraint_slacks: vec![self.slack(&w, &psi)],
            multipliers: Vec::new(),
            iterations: 0,
            converged: false,
            wall_time: 0.0,
            sum_rate: rate,
            budgets: PowerAllocation {
                p_t: self.p_t,
                p_a: self.p_a,
                circuit: 0.0,
                ris_on: self.update.is_some(),
            },
            final_w: w.clone(),
            final_psi: psi.clone(),
        };
        for iteration in 1..=self.opts.max_iters {
            let aux = update_aux(self.channels, &w, &psi, self.hwi)?;
            report
                .fp_trace
                .push(objective_r(self.channels, &w, &psi, self.hwi, &aux)? * LOG2_E);

            let w_sub = assemble_w_subproblem(self.channels, &psi, self.hwi, &aux, self.p_a)?;
            let w_sol = optimize_w(&w_sub, &w, self.p_t, &self.opts.w)?;
            w = w_sol.w;
            report
                .multipliers
                .push((w_sol.info.power_multiplier, w_sol.info.amplification_multiplier));

            if let Some(update) = self.update {
                let psi_sub = assemble_psi_subproblem(self.channels, &w, self.hwi, &aux)?;
                let psi_opts = PsiSolverOptions {
                    update,
                    ..self.opts.psi
                };
                psi = optimize_psi(&psi_sub, &psi, self.p_a, &psi_opts)?.psi;
            }

            let next = sum_rate(self.channels, &w, &psi, self.hwi)?;
            report.iterations = iteration;
            if next < rate - self.opts.ascent_tol * rate.abs() {
                return Err(Error::NonMonotoneObjective {
                    iteration,
                    previous: rate,
                    current: next,
                    diagnostics: format!(
                        "scheme {scheme}\nW = {w}\npsi = {psi}\nsum-rate trace = {:?}\nfp trace = {:?}",
                        report.objective_trace, report.fp_trace
                    ),
                });
            }
            let change = (next - rate) / rate.abs().max(f64::MIN_POSITIVE);
            rate = next;
            report.objective_trace.push(rate);
            report.constraint_slacks.push(self.slack(&w, &psi));
            if change < self.opts.tol {
                report.converged = true;
                break;
            }
        }
        report.sum_rate = rate;
        report.final_w = w;
        report.final_psi = psi;
        Ok(report)
    }
}
