use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64, tolerance: f64 },

    #[error("bisection could not bracket target {target:e} (f(lo)={f_lo:e}, f(hi)={f_hi:e}, hi={hi:e})")]
    BracketFailure { target: f64, f_lo: f64, f_hi: f64, hi: f64 },

    #[error("invalid model state: {0}")]
    InvalidModel(String),

    #[error("reflection coefficients leave no amplification budget for the signal (P_m = {p_m:e} W)")]
    InfeasibleReflection { p_m: f64 },

    #[error("sum rate decreased at iteration {iteration}: {previous} -> {current} bps/Hz\n{diagnostics}")]
    NonMonotoneObjective {
        iteration: usize,
        previous: f64,
        current: f64,
        diagnostics: String,
    },

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
