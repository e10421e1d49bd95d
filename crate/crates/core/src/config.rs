//! Flat TOML experiment files.
//!
//! Every key is optional and overrides the default scenario. Powers are
//! strings with an explicit unit (`"20 dBm"`, `"9 dBW"`, `"5 mW"`, `"0.1 W"`);
//! Rician factors are given in dB.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::orchestrator::{Scheme, SolverOptions};
use crate::scenario::{db_to_linear, Point, ScenarioConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub n_antennas: Option<usize>,
    pub n_elements: Option<usize>,
    pub n_users: Option<usize>,
    pub bs_pos: Option<Point>,
    pub ris_pos: Option<Point>,
    pub user_center: Option<Point>,
    pub user_radius: Option<f64>,
    pub rician_bs_ris_db: Option<f64>,
    pub rician_ris_user_db: Option<f64>,
    pub rician_bs_user_db: Option<f64>,
    pub c0_db: Option<f64>,
    pub exp_bs_ris: Option<f64>,
    pub exp_ris_user: Option<f64>,
    pub exp_bs_user: Option<f64>,
    /// RIS dynamic-noise power per element.
    pub sigma_d: Option<String>,
    /// Receiver noise power, shared by all users.
    pub sigma_k: Option<String>,
    pub kappa_t: Option<f64>,
    /// Receiver impairment level, shared by all users.
    pub kappa_r: Option<f64>,
    pub xi_t: Option<f64>,
    pub xi_a: Option<f64>,
    pub p_sw: Option<String>,
    pub p_dc: Option<String>,
    pub p_bs: Option<String>,
    pub p_budget: Option<String>,
    pub transmit_share: Option<f64>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub schemes: Option<Vec<String>>,
    pub seeds: Option<usize>,
}

/// A parsed experiment: scenario, solver settings, schemes and seed count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub solver: SolverOptions,
    pub schemes: Vec<Scheme>,
    pub seeds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            solver: SolverOptions::default(),
            schemes: vec![Scheme::BcdAso],
            seeds: 1,
        }
    }
}

/// Parses `"<value> <unit>"` with unit dBm, dBW, mW or W into watts.
pub fn parse_power(text: &str) -> Result<f64> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .ok_or_else(|| Error::Config(format!("power `{text}` needs a unit (dBm, dBW, mW or W)")))?;
    let (value, unit) = text.split_at(split);
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("power `{text}` has no numeric value")))?;
    let watts = match unit.trim() {
        "dBm" => db_to_linear(value - 30.0),
        "dBW" => db_to_linear(value),
        "mW" => value * 1e-3,
        "W" => value,
        other => return Err(Error::Config(format!("unknown power unit `{other}` in `{text}`"))),
    };
    if !watts.is_finite() || watts < 0.0 {
        return Err(Error::Config(format!(
            "power `{text}` is not a non-negative finite value"
        )));
    }
    Ok(watts)
}

impl ConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Overlays the file on the defaults and validates the result.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut out = ExperimentConfig::default();
        let s = &mut out.scenario;
        let users = self.n_users.unwrap_or(s.n_users);
        *s = s.clone().with_users(users);

        macro_rules! set {
            ($($key:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = self.$key { $field = v; })*
            };
        }
        set! {
            n_antennas => s.n_antennas,
            n_elements => s.n_elements,
            bs_pos => s.bs_pos,
            ris_pos => s.ris_pos,
            user_center => s.user_center,
            user_radius => s.user_radius,
            c0_db => s.path_loss.c0_db,
            exp_bs_ris => s.path_loss.exp_bs_ris,
            exp_ris_user => s.path_loss.exp_ris_user,
            exp_bs_user => s.path_loss.exp_bs_user,
            kappa_t => s.kappa_t,
            xi_t => s.xi_t,
            xi_a => s.xi_a,
            transmit_share => s.split_rule.transmit_share,
            seed => s.seed,
            tol => out.solver.tol,
            max_iters => out.solver.max_iters,
            seeds => out.seeds,
        }
        if let Some(db) = self.rician_bs_ris_db {
            s.rician.bs_ris = db_to_linear(db);
        }
        if let Some(db) = self.rician_ris_user_db {
            s.rician.ris_user = db_to_linear(db);
        }
        if let Some(db) = self.rician_bs_user_db {
            s.rician.bs_user = db_to_linear(db);
        }
        if let Some(k) = self.kappa_r {
            s.kappa_r = vec![k; users];
        }
        if let Some(p) = &self.sigma_k {
            s.sigma_k_sq = vec![parse_power(p)?; users];
        }
        let powers = [
            (&self.sigma_d, &mut s.sigma_d_sq),
            (&self.p_sw, &mut s.p_sw),
            (&self.p_dc, &mut s.p_dc),
            (&self.p_bs, &mut s.p_bs),
            (&self.p_budget, &mut s.p_budget),
        ];
        for (text, field) in powers {
            if let Some(text) = text {
                *field = parse_power(text)?;
            }
        }
        if let Some(names) = &self.schemes {
            out.schemes = names.iter().map(|n| n.parse()).collect::<Result<_>>()?;
            if out.schemes.is_empty() {
                return Err(Error::Config("`schemes` must name at least one scheme".into()));
            }
        }
        if out.seeds == 0 {
            return Err(Error::Config("`seeds` must be at least 1".into()));
        }
        if !(out.solver.tol >= 0.0) || out.solver.max_iters == 0 {
            return Err(Error::Config(
                "`tol` must be non-negative and `max_iters` positive".into(),
            ));
        }
        out.scenario.validate()?;
        Ok(out)
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        ConfigFile::from_toml_str(text)?.resolve()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}
