use std::io;

use thiserror::Error;

use crate::noise::TrajectorySeed;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested coherence time cannot be produced by an OU process with
    /// the given correlation time.
    #[error("calibration infeasible: need T2 > tau, got T2 = {t2:e} s and tau = {tau:e} s")]
    CalibrationInfeasible { t2: f64, tau: f64 },

    #[error("decoupling infeasible: Omega_DD / 2pi = {:e} Hz must exceed f_cr = {f_cr:e} Hz", omega_dd / std::f64::consts::TAU)]
    DecouplingInfeasible { omega_dd: f64, f_cr: f64 },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error(
        "truncation overflow at t = {time:e} s: top-two Fock level population {population:e} exceeds {tolerance:e}; raise n_trunc"
    )]
    TruncationOverflow {
        time: f64,
        population: f64,
        tolerance: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid scan: {0}")]
    InvalidScan(String),

    #[error("trajectory {seed} failed: {source}")]
    Trajectory {
        seed: TrajectorySeed,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::InvalidDimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }
}
