//! Experiment driver: multi-seed runs, parameter sweeps and the validation
//! suite, with CSV and JSON output.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use ris_core::config::ExperimentConfig;
use ris_core::orchestrator::{run_scheme, Scheme, SolveReport};
use ris_core::scenario::{dbm_to_watts, generate_channels, watts_to_dbm, ScenarioConfig};
use ris_core::seeded_rng;
use ris_core::validation::{run_suite, SuiteOptions, ValidationSummary};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ris_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Options shared by the run and sweep commands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Overrides the seed count of the config file.
    pub seeds: Option<usize>,
    /// Worker threads; 1 runs serially.
    pub parallel: usize,
    /// Overrides the schemes of the config file when non-empty.
    pub schemes: Vec<Scheme>,
    /// Keep the final beamformers and reflection vector in the JSON reports.
    pub include_matrices: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seeds: None,
            parallel: 1,
            schemes: Vec::new(),
            include_matrices: false,
        }
    }
}

/// One line of the per-run CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub scheme: String,
    #[serde(rename = "P_dBm")]
    pub p_dbm: f64,
    pub kappa_t: f64,
    pub kappa_r: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub sum_rate_bpshz: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(rename = "P_T_W")]
    pub p_t_w: f64,
    #[serde(rename = "P_A_W")]
    pub p_a_w: f64,
    pub wall_time_s: f64,
}

/// One finished trial.
#[derive(Debug, Clone)]
pub struct Trial {
    pub scheme: Scheme,
    pub scenario: ScenarioConfig,
    pub report: SolveReport,
}

impl Trial {
    pub fn row(&self) -> RunRow {
        let s = &self.scenario;
        RunRow {
            scheme: self.scheme.name().to_string(),
            p_dbm: watts_to_dbm(s.p_budget),
            kappa_t: s.kappa_t,
            kappa_r: s.kappa_r.first().copied().unwrap_or(0.0),
            m: s.n_elements,
            n: s.n_antennas,
            k: s.n_users,
            seed: s.seed,
            sum_rate_bpshz: self.report.sum_rate,
            iterations: self.report.iterations,
            converged: self.report.converged,
            p_t_w: self.report.budgets.p_t,
            p_a_w: self.report.budgets.p_a,
            wall_time_s: self.report.wall_time,
        }
    }

    fn json(&self, include_matrices: bool) -> Result<serde_json::Value> {
        let mut report = serde_json::to_value(&self.report)?;
        if !include_matrices {
            if let Some(map) = report.as_object_mut() {
                map.remove("final_w");
                map.remove("final_psi");
            }
        }
        Ok(serde_json::json!({
            "scheme": self.scheme.name(),
            "seed": self.scenario.seed,
            "config": self.scenario,
            "report": report,
        }))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Seeds `base, base+1, ...` of the experiment.
fn seed_list(exp: &ExperimentConfig, opts: &RunOptions) -> Vec<u64> {
    let n = opts.seeds.unwrap_or(exp.seeds) as u64;
    (0..n).map(|i| exp.scenario.seed + i).collect()
}

fn schemes(exp: &ExperimentConfig, opts: &RunOptions) -> Vec<Scheme> {
    if opts.schemes.is_empty() {
        exp.schemes.clone()
    } else {
        opts.schemes.clone()
    }
}

/// Runs every (scenario, scheme, seed) combination. Results come back in
/// input order whatever the thread count.
pub fn run_trials(exp: &ExperimentConfig, scenarios: &[ScenarioConfig], opts: &RunOptions) -> Result<Vec<Trial>> {
    if opts.parallel == 0 {
        return Err(CliError::InvalidArgument("--parallel must be at least 1".into()));
    }
    let seeds = seed_list(exp, opts);
    let schemes = schemes(exp, opts);
    let mut jobs = Vec::new();
    for scenario in scenarios {
        for &scheme in &schemes {
            for &seed in &seeds {
                jobs.push((
                    scheme,
                    ScenarioConfig {
                        seed,
                        ..scenario.clone()
                    },
                ));
            }
        }
    }
    let run = |(scheme, scenario): &(Scheme, ScenarioConfig)| -> Result<Trial> {
        let channels = generate_channels(scenario, &mut seeded_rng(scenario.seed, 0))?;
        let report = run_scheme(*scheme, scenario, &channels, &exp.solver)?;
        Ok(Trial {
            scheme: *scheme,
            scenario: scenario.clone(),
            report,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.parallel).build()?;
    pool.install(|| jobs.par_iter().map(run).collect())
}

pub fn write_rows(path: &Path, rows: &[RunRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<RunRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<std::result::Result<_, _>>()?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(io_err(path))
}

fn write_reports(out: &Path, trials: &[Trial], include_matrices: bool) -> Result<()> {
    let dir = out.join("runs");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for t in trials {
        let name = format!(
            "{}_P{}_k{}_M{}_seed{}.json",
            t.scheme.name(),
            watts_to_dbm(t.scenario.p_budget),
            t.scenario.kappa_t,
            t.scenario.n_elements,
            t.scenario.seed
        );
        write_json(&dir.join(name), &t.json(include_matrices)?)?;
    }
    Ok(())
}

pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    Ok(match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    })
}

/// Runs the configured schemes over the seed set; writes `runs/*.json` and
/// `results.csv` under `out`.
pub fn cmd_run(exp: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<Vec<RunRow>> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let trials = run_trials(exp, std::slice::from_ref(&exp.scenario), opts)?;
    write_reports(out, &trials, opts.include_matrices)?;
    let rows: Vec<RunRow> = trials.iter().map(Trial::row).collect();
    write_rows(&out.join("results.csv"), &rows)?;
    Ok(rows)
}

/// Scenario parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "power_dBm")]
    PowerDbm,
    #[serde(rename = "kappa")]
    Kappa,
    #[serde(rename = "M")]
    Elements,
    #[serde(rename = "kappa_t")]
    KappaT,
    #[serde(rename = "kappa_r")]
    KappaR,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::PowerDbm => "power_dBm",
            SweepParam::Kappa => "kappa",
            SweepParam::Elements => "M",
            SweepParam::KappaT => "kappa_t",
            SweepParam::KappaR => "kappa_r",
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut s = base.clone();
        match self {
            SweepParam::PowerDbm => s.p_budget = dbm_to_watts(value),
            SweepParam::Kappa => {
                s.kappa_t = value;
                s.kappa_r = vec![value; s.n_users];
            }
            SweepParam::Elements => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(CliError::InvalidArgument(format!(
                        "M must be a positive integer, got {value}"
                    )));
                }
                s.n_elements = value as usize;
            }
            SweepParam::KappaT => s.kappa_t = value,
            SweepParam::KappaR => s.kappa_r = vec![value; s.n_users],
        }
        s.validate()?;
        Ok(s)
    }
}

impl FromStr for SweepParam {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepParam::PowerDbm,
            SweepParam::Kappa,
            SweepParam::Elements,
            SweepParam::KappaT,
            SweepParam::KappaR,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| CliError::InvalidArgument(format!("unknown sweep parameter '{s}'")))
    }
}

/// Inclusive grid `from, from+step, ..., to`.
pub fn sweep_values(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !from.is_finite() || !to.is_finite() || to < from {
        return Err(CliError::InvalidArgument(format!(
            "sweep needs from <= to and step > 0 (got {from}, {to}, {step})"
        )));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| from + step * i as f64).collect())
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-point statistics across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub scheme: String,
    pub param: String,
    pub value: f64,
    pub seeds: usize,
    pub median_bpshz: f64,
    pub q1_bpshz: f64,
    pub q3_bpshz: f64,
}

pub fn summarize(param: SweepParam, values: &[f64], trials: &[Trial]) -> Vec<SweepPoint> {
    let per_point = trials.len() / values.len().max(1);
    trials
        .chunks(per_point.max(1))
        .zip(values)
        .flat_map(|(chunk, &value)| {
            let mut points = Vec::new();
            let mut start = 0;
            while start < chunk.len() {
                let scheme = chunk[start].scheme;
                let end = start + chunk[start..].iter().take_while(|t| t.scheme == scheme).count();
                let mut rates: Vec<f64> = chunk[start..end].iter().map(|t| t.report.sum_rate).collect();
                rates.sort_by(f64::total_cmp);
                points.push(SweepPoint {
                    scheme: scheme.name().to_string(),
                    param: param.name().to_string(),
                    value,
                    seeds: rates.len(),
                    median_bpshz: quantile(&rates, 0.5),
                    q1_bpshz: quantile(&rates, 0.25),
                    q3_bpshz: quantile(&rates, 0.75),
                });
                start = end;
            }
            points
        })
        .collect()
}

/// Grid sweep of one parameter; writes per-seed rows to `sweep.csv` and
/// per-point medians and quartiles to `sweep_summary.csv`.
pub fn cmd_sweep(
    exp: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
    out: &Path,
    opts: &RunOptions,
) -> Result<Vec<SweepPoint>> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let scenarios = values
        .iter()
        .map(|&v| param.apply(&exp.scenario, v))
        .collect::<Result<Vec<_>>>()?;
    let trials = run_trials(exp, &scenarios, opts)?;
    write_reports(out, &trials, opts.include_matrices)?;
    let rows: Vec<RunRow> = trials.iter().map(Trial::row).collect();
    write_rows(&out.join("sweep.csv"), &rows)?;
    let summary = summarize(param, values, &trials);
    let path = out.join("sweep_summary.csv");
    let mut writer = csv::Writer::from_path(&path)?;
    for point in &summary {
        writer.serialize(point)?;
    }
    writer.flush().map_err(io_err(&path))?;
    Ok(summary)
}

/// Validation report written by `cmd_validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config: ScenarioConfig,
    pub suite: SuiteOptions,
    pub summary: ValidationSummary,
}

/// Runs the validation suite around the configured scenario and writes
/// `validation.json`.
pub fn cmd_validate(exp: &ExperimentConfig, suite: &SuiteOptions, out: &Path) -> Result<ValidationReport> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let summary = run_suite(&exp.scenario, &exp.solver, suite)?;
    let report = ValidationReport {
        config: exp.scenario.clone(),
        suite: suite.clone(),
        summary,
    };
    write_json(&out.join("validation.json"), &report)?;
    Ok(report)
}
