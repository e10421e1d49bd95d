use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ris_cli::{cmd_run, cmd_sweep, cmd_validate, load_config, sweep_values, Result, RunOptions, SweepParam};
use ris_core::orchestrator::Scheme;
use ris_core::validation::SuiteOptions;

#[derive(Parser)]
#[command(name = "ris-bcd", version, about = "Active-RIS multiuser MISO sum-rate experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct Trials {
    /// Number of seeds, starting at the configured seed.
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Scheme to run; repeatable. Overrides the config file.
    #[arg(long = "scheme")]
    schemes: Vec<Scheme>,
    /// Keep the final beamformers and reflection vector in the JSON reports.
    #[arg(long)]
    include_matrices: bool,
}

impl Trials {
    fn options(self) -> RunOptions {
        RunOptions {
            seeds: self.seeds,
            parallel: self.parallel,
            schemes: self.schemes,
            include_matrices: self.include_matrices,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured schemes over a seed set.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        trials: Trials,
    },
    /// Sweep one scenario parameter over an inclusive grid.
    Sweep {
        /// power_dBm, kappa, M, kappa_t or kappa_r.
        #[arg(long)]
        param: SweepParam,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long)]
        step: f64,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        trials: Trials,
    },
    /// Run the validation suite; exits non-zero if any check fails.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Seeds compared against the exhaustive grid.
        #[arg(long, default_value_t = 20)]
        grid_seeds: usize,
        /// Monte-Carlo samples for the rate-approximation check.
        #[arg(long, default_value_t = 100_000)]
        mc_trials: usize,
        /// Phase-noise samples for the moment check.
        #[arg(long, default_value_t = 1_000_000)]
        moment_samples: usize,
    },
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { common, trials } => {
            let exp = load_config(common.config.as_deref())?;
            let rows = cmd_run(&exp, &common.out, &trials.options())?;
            for r in &rows {
                println!(
                    "{} seed {}: {:.4} bps/Hz, {} iterations",
                    r.scheme, r.seed, r.sum_rate_bpshz, r.iterations
                );
            }
            println!("wrote {}", common.out.join("results.csv").display());
            Ok(true)
        }
        Command::Sweep {
            param,
            from,
            to,
            step,
            common,
            trials,
        } => {
            let exp = load_config(common.config.as_deref())?;
            let values = sweep_values(from, to, step)?;
            let summary = cmd_sweep(&exp, param, &values, &common.out, &trials.options())?;
            for p in &summary {
                println!(
                    "{} {}={}: median {:.4} (q1 {:.4}, q3 {:.4})",
                    p.scheme, p.param, p.value, p.median_bpshz, p.q1_bpshz, p.q3_bpshz
                );
            }
            println!("wrote {}", common.out.join("sweep_summary.csv").display());
            Ok(true)
        }
        Command::Validate {
            common,
            grid_seeds,
            mc_trials,
            moment_samples,
        } => {
            let exp = load_config(common.config.as_deref())?;
            let suite = SuiteOptions {
                grid_seeds,
                monte_carlo_trials: mc_trials,
                moment_samples,
                ..SuiteOptions::default()
            };
            let report = cmd_validate(&exp, &suite, &common.out)?;
            for c in &report.summary.checks {
                let status = if c.passed { "PASS" } else { "FAIL" };
                println!(
                    "{status} {}: {:.4e} (threshold {:.4e}) {}",
                    c.name, c.metric, c.threshold, c.detail
                );
            }
            println!("wrote {}", common.out.join("validation.json").display());
            Ok(report.summary.passed)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
