//! Deployment geometry, large-scale fading and Rician small-scale fading.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{CMat, CVec, Error, Result};

pub type Point = [f64; 3];

/// Rician K-factors (linear) of the three links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RicianFactors {
    pub bs_ris: f64,
    pub ris_user: f64,
    pub bs_user: f64,
}

/// Log-distance path loss `C0·d^(-exponent)` per link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    pub c0_db: f64,
    pub exp_bs_ris: f64,
    pub exp_ris_user: f64,
    pub exp_bs_user: f64,
}

/// How the budget left after RIS circuit power is divided between the
/// transmitter and the RIS amplifiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    /// Fraction of the amplifier-side budget given to the transmitter.
    pub transmit_share: f64,
}

impl Default for SplitRule {
    fn default() -> Self {
        Self { transmit_share: 0.5 }
    }
}

/// Which kind of surface is deployed, for power accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RisMode {
    Active,
    Passive,
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_antennas: usize,
    pub n_elements: usize,
    pub n_users: usize,
    pub bs_pos: Point,
    pub ris_pos: Point,
    pub user_center: Point,
    pub user_radius: f64,
    pub rician: RicianFactors,
    pub path_loss: PathLoss,
    /// RIS dynamic-noise power per element, W.
    pub sigma_d_sq: f64,
    /// Receiver noise power per user, W.
    pub sigma_k_sq: Vec<f64>,
    pub kappa_t: f64,
    pub kappa_r: Vec<f64>,
    pub xi_t: f64,
    pub xi_a: f64,
    pub p_sw: f64,
    pub p_dc: f64,
    pub p_bs: f64,
    /// Total budget excluding the static BS consumption, W.
    pub p_budget: f64,
    pub split_rule: SplitRule,
    pub seed: u64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let k = 3;
        let kappa = 0.01f64 * 0.01;
        Self {
            n_antennas: 4,
            n_elements: 16,
            n_users: k,
            bs_pos: [0.0, 0.0, 10.0],
            ris_pos: [80.0, 10.0, 10.0],
            user_center: [100.0, 0.0, 1.5],
            user_radius: 5.0,
            rician: RicianFactors {
                bs_ris: db_to_linear(10.0),
                ris_user: db_to_linear(10.0),
                bs_user: db_to_linear(0.0),
            },
            path_loss: PathLoss {
                c0_db: -30.0,
                exp_bs_ris: 2.2,
                exp_ris_user: 2.3,
                exp_bs_user: 3.5,
            },
            sigma_d_sq: dbm_to_watts(-80.0),
            sigma_k_sq: vec![dbm_to_watts(-80.0); k],
            kappa_t: kappa,
            kappa_r: vec![kappa; k],
            xi_t: 1.2,
            xi_a: 1.2,
            p_sw: 1e-3,
            p_dc: 5e-3,
            p_bs: db_to_linear(9.0),
            p_budget: dbm_to_watts(20.0),
            split_rule: SplitRule::default(),
            seed: 42,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidInput(msg));
        if self.n_antennas == 0 || self.n_elements == 0 || self.n_users == 0 {
            return fail("N, M and K must all be at least 1".into());
        }
        if self.sigma_k_sq.len() != self.n_users || self.kappa_r.len() != self.n_users {
            return fail(format!(
                "per-user vectors need {} entries (sigma_k_sq has {}, kappa_r has {})",
                self.n_users,
                self.sigma_k_sq.len(),
                self.kappa_r.len()
            ));
        }
        let in_unit = |x: f64| (0.0..1.0).contains(&x);
        if !in_unit(self.kappa_t) || !self.kappa_r.iter().all(|&k| in_unit(k)) {
            return fail("distortion coefficients must lie in [0, 1)".into());
        }
        if !(self.xi_t >= 1.0 && self.xi_a >= 1.0) {
            return fail("inverse amplifier efficiencies must be >= 1".into());
        }
        let powers = [self.sigma_d_sq, self.p_sw, self.p_dc, self.p_bs, self.p_budget];
        if !powers
            .iter()
            .chain(&self.sigma_k_sq)
            .all(|&p| p >= 0.0 && p.is_finite())
        {
            return fail("all powers must be finite and non-negative".into());
        }
        if !self.sigma_k_sq.iter().all(|&p| p > 0.0) {
            return fail("receiver noise powers must be positive".into());
        }
        if !(self.user_radius >= 0.0) {
            return fail("user radius must be non-negative".into());
        }
        let r = &self.rician;
        if ![r.bs_ris, r.ris_user, r.bs_user].iter().all(|&k| k >= 0.0) {
            return fail("Rician factors must be non-negative".into());
        }
        let share = self.split_rule.transmit_share;
        if !(share > 0.0 && share < 1.0) {
            return fail(format!("transmit share must lie in (0, 1), got {share}"));
        }
        Ok(())
    }

    /// Splits the budget for the given deployment.
    pub fn power_split(&self, mode: RisMode) -> PowerAllocation {
        let m = self.n_elements as f64;
        let circuit = match mode {
            RisMode::Active => m * (self.p_sw + self.p_dc),
            RisMode::Passive => m * self.p_sw,
            RisMode::Absent => 0.0,
        };
        let remaining = self.p_budget - circuit;
        if mode == RisMode::Absent || remaining <= 0.0 {
            return PowerAllocation {
                p_t: self.p_budget / self.xi_t,
                p_a: 0.0,
                circuit: 0.0,
                ris_on: false,
            };
        }
        match mode {
            RisMode::Active => {
                let share = self.split_rule.transmit_share;
                PowerAllocation {
                    p_t: share * remaining / self.xi_t,
                    p_a: (1.0 - share) * remaining / self.xi_a,
                    circuit,
                    ris_on: true,
                }
            }
            _ => PowerAllocation {
                p_t: remaining / self.xi_t,
                p_a: 0.0,
                circuit,
                ris_on: true,
            },
        }
    }

    pub fn hardware(&self) -> crate::hwi::HardwareModel {
        crate::hwi::HardwareModel {
            kappa_t: self.kappa_t,
            kappa_r: self.kappa_r.clone(),
            sigma_d_sq: self.sigma_d_sq,
            sigma_sq: self.sigma_k_sq.clone(),
        }
    }

    /// Same scenario with `k` users, per-user vectors filled from the first
    /// entry.
    pub fn with_users(mut self, k: usize) -> Self {
        let sigma = self.sigma_k_sq.first().copied().unwrap_or(1e-11);
        let kappa = self.kappa_r.first().copied().unwrap_or(0.0);
        self.n_users = k;
        self.sigma_k_sq = vec![sigma; k];
        self.kappa_r = vec![kappa; k];
        self
    }
}

/// Transmit and amplification budgets after circuit consumption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub p_t: f64,
    pub p_a: f64,
    /// RIS circuit power charged, W.
    pub circuit: f64,
    /// False when the budget cannot cover the RIS circuits.
    pub ris_on: bool,
}

impl PowerAllocation {
    /// Total consumption including the static BS power.
    pub fn consumed(&self, config: &ScenarioConfig) -> f64 {
        config.xi_t * self.p_t + config.xi_a * self.p_a + config.p_bs + self.circuit
    }
}

/// Channel realisations for one scenario draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS to RIS, M×N.
    pub g: CMat,
    /// RIS to user k, length M each.
    pub h: Vec<CVec>,
    /// BS to user k, length N each.
    pub f: Vec<CVec>,
}

impl ChannelSet {
    pub fn n_antennas(&self) -> usize {
        self.g.ncols()
    }

    pub fn n_elements(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.h.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.g.shape();
        if self.h.len() != self.f.len() || self.h.is_empty() {
            return Err(Error::InvalidInput("need one h and one f per user".into()));
        }
        if self.h.iter().any(|h| h.len() != m) || self.f.iter().any(|f| f.len() != n) {
            return Err(Error::InvalidInput("channel shapes are inconsistent".into()));
        }
        let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        let all_finite = self.g.iter().all(finite)
            && self.h.iter().all(|v| v.iter().all(finite))
            && self.f.iter().all(|v| v.iter().all(finite));
        if !all_finite {
            return Err(Error::InvalidInput("channel has non-finite entries".into()));
        }
        Ok(())
    }
}

pub fn path_loss_gain(d: f64, c0_db: f64, exponent: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidInput(format!("distance must be positive, got {d}")));
    }
    Ok(db_to_linear(c0_db) * d.powf(-exponent))
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `sqrt(K/(1+K))·los + sqrt(1/(1+K))·H` with `H` i.i.d. CN(0, 1).
pub fn rician_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, k_factor: f64, los: &CMat, rng: &mut R) -> CMat {
    assert_eq!(los.shape(), (rows, cols), "LoS component shape mismatch");
    let los_scale = (k_factor / (1.0 + k_factor)).sqrt();
    let nlos_scale = (1.0 / (1.0 + k_factor)).sqrt();
    CMat::from_fn(rows, cols, |r, c| {
        los[(r, c)] * los_scale + complex_gaussian(rng) * nlos_scale
    })
}

/// Half-wavelength ULA response along the y axis towards unit direction `dir`.
pub fn steering_vector(len: usize, dir: &Point) -> CVec {
    let cos_angle = dir[1];
    CVec::from_fn(len, |n, _| Complex64::from_polar(1.0, PI * n as f64 * cos_angle))
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: &Point) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn unit(from: &Point, to: &Point) -> (Point, f64) {
    let d = sub(to, from);
    let len = norm(&d);
    ([d[0] / len, d[1] / len, d[2] / len], len)
}

/// Draws a user position uniformly on the horizontal disk.
pub fn sample_user_position<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Point {
    let r = config.user_radius * rng.random::<f64>().sqrt();
    let t = 2.0 * PI * rng.random::<f64>();
    let c = config.user_center;
    [c[0] + r * t.cos(), c[1] + r * t.sin(), c[2]]
}

pub fn generate_channels<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<ChannelSet> {
    config.validate()?;
    let (n, m) = (config.n_antennas, config.n_elements);
    let pl = &config.path_loss;

    let (bs_to_ris, d_bs_ris) = unit(&config.bs_pos, &config.ris_pos);
    let ris_to_bs = [-bs_to_ris[0], -bs_to_ris[1], -bs_to_ris[2]];
    let los_g = steering_vector(m, &ris_to_bs) * steering_vector(n, &bs_to_ris).adjoint();
    let gain = path_loss_gain(d_bs_ris, pl.c0_db, pl.exp_bs_ris)?.sqrt();
    let g = rician_matrix(m, n, config.rician.bs_ris, &los_g, rng) * Complex64::new(gain, 0.0);

    let mut h = Vec::with_capacity(config.n_users);
    let mut f = Vec::with_capacity(config.n_users);
    for _ in 0..config.n_users {
        let user = sample_user_position(config, rng);

        let (ris_to_user, d) = unit(&config.ris_pos, &user);
        let los = CMat::from_column_slice(m, 1, steering_vector(m, &ris_to_user).as_slice());
        let gain = path_loss_gain(d, pl.c0_db, pl.exp_ris_user)?.sqrt();
        let hk = rician_matrix(m, 1, config.rician.ris_user, &los, rng) * Complex64::new(gain, 0.0);
        h.push(hk.column(0).into_owned());

        let (bs_to_user, d) = unit(&config.bs_pos, &user);
        let los = CMat::from_column_slice(n, 1, steering_vector(n, &bs_to_user).as_slice());
        let gain = path_loss_gain(d, pl.c0_db, pl.exp_bs_user)?.sqrt();
        let fk = rician_matrix(n, 1, config.rician.bs_user, &los, rng) * Complex64::new(gain, 0.0);
        f.push(fk.column(0).into_owned());
    }
    Ok(ChannelSet { g, h, f })
}

/// Distance between the BS and RIS array references.
pub fn bs_ris_distance(config: &ScenarioConfig) -> f64 {
    norm(&sub(&config.ris_pos, &config.bs_pos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn path_loss_examples() {
        assert!((path_loss_gain(1.0, -30.0, 2.2).unwrap() - 1e-3).abs() < 1e-18);
        assert!((path_loss_gain(10.0, -30.0, 2.0).unwrap() - 1e-5).abs() < 1e-18);
        let expected = 1e-3 * 100f64.powf(-3.5);
        assert!((path_loss_gain(100.0, -30.0, 3.5).unwrap() - expected).abs() < 1e-12 * expected);
        assert!(path_loss_gain(0.0, -30.0, 2.0).is_err());
        assert!(path_loss_gain(-1.0, -30.0, 2.0).is_err());
    }

    #[test]
    fn rician_los_limit() {
        let mut rng = seeded_rng(1, 0);
        let los = steering_vector(6, &[0.0, 0.6, 0.8]) * steering_vector(3, &[0.0, -0.3, 0.95]).adjoint();
        let h = rician_matrix(6, 3, 1e12, &los, &mut rng);
        assert!((h - &los).camax() < 1e-5);
    }

    #[test]
    fn rayleigh_entry_power() {
        let mut rng = seeded_rng(2, 0);
        let los = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
        let trials = 100_000;
        let mean: f64 = (0..trials)
            .map(|_| rician_matrix(1, 1, 0.0, &los, &mut rng)[(0, 0)].norm_sqr())
            .sum::<f64>()
            / trials as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean power {mean}");
    }

    #[test]
    fn rician_nlos_variance() {
        let mut rng = seeded_rng(3, 0);
        let los = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
        let trials = 100_000;
        let scale = (0.5f64).sqrt();
        let var: f64 = (0..trials)
            .map(|_| (rician_matrix(1, 1, 1.0, &los, &mut rng)[(0, 0)] - scale).norm_sqr())
            .sum::<f64>()
            / trials as f64;
        assert!((var - 0.5).abs() < 0.01, "variance {var}");
    }

    #[test]
    fn channel_shapes_and_determinism() {
        let config = ScenarioConfig::default();
        let a = generate_channels(&config, &mut seeded_rng(42, 0)).unwrap();
        assert_eq!(a.g.shape(), (16, 4));
        assert_eq!(a.h.len(), 3);
        assert!(a.h.iter().all(|h| h.len() == 16));
        assert!(a.f.iter().all(|f| f.len() == 4));
        a.validate().unwrap();
        let b = generate_channels(&config, &mut seeded_rng(42, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bs_ris_energy_follows_path_loss() {
        let config = ScenarioConfig::default();
        let mut rng = seeded_rng(5, 0);
        let trials = 10_000;
        let mean: f64 = (0..trials)
            .map(|_| generate_channels(&config, &mut rng).unwrap().g.norm_squared())
            .sum::<f64>()
            / trials as f64;
        let pl = &config.path_loss;
        let expected = 16.0 * 4.0 * path_loss_gain(bs_ris_distance(&config), pl.c0_db, pl.exp_bs_ris).unwrap();
        assert!((mean / expected - 1.0).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn users_stay_on_disk() {
        let config = ScenarioConfig::default();
        let mut rng = seeded_rng(6, 0);
        for _ in 0..10_000 {
            let p = sample_user_position(&config, &mut rng);
            let d = norm(&sub(&p, &config.user_center));
            assert!(d <= config.user_radius + 1e-12);
        }
    }

    #[test]
    fn budget_round_trip() {
        let config = ScenarioConfig::default();
        for mode in [RisMode::Active, RisMode::Passive, RisMode::Absent] {
            let split = config.power_split(mode);
            let total = split.consumed(&config);
            let expected = config.p_budget + config.p_bs;
            assert!(
                (total - expected).abs() <= 1e-12 * expected,
                "{mode:?}: {total} vs {expected}"
            );
        }
        let split = config.power_split(RisMode::Active);
        assert!((config.xi_t * split.p_t - config.xi_a * split.p_a).abs() < 1e-15);
    }

    #[test]
    fn ris_off_below_circuit_power() {
        let config = ScenarioConfig {
            p_budget: dbm_to_watts(10.0),
            ..ScenarioConfig::default()
        };
        let split = config.power_split(RisMode::Active);
        assert!(!split.ris_on);
        assert_eq!(split.p_a, 0.0);
        assert!((split.p_t * config.xi_t - config.p_budget).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = ScenarioConfig::default();
        c.n_elements = 0;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::default();
        c.kappa_t = 1.0;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::default();
        c.xi_a = 0.9;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::default();
        c.kappa_r.pop();
        assert!(c.validate().is_err());
    }

    #[test]
    fn unit_conversions() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(-80.0) - 1e-11).abs() < 1e-25);
        assert!((watts_to_dbm(1e-3)).abs() < 1e-12);
    }
}
