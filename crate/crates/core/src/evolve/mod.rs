//! Stochastic Schrödinger propagation, frames, observables and ensembles.

mod kernel;
mod propagate;
mod source;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::State;

pub use kernel::BATCH;
pub use propagate::{propagate, propagate_noisy, StepPlan};
pub use source::{HamiltonianSource, NoiseAxis, TermSource};
pub use trajectory::{
    ensemble, frame_align, reference_states, run_trajectory, EnsembleResult, Experiment, InitialState, Level,
    Observables, Simulation, TrajectoryRecord,
};

pub(crate) use propagate::{propagate_batch, ColumnInput};

/// Samples per period of the fastest drive.
pub const SAMPLES_PER_PERIOD: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    ExponentialMidpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    /// Requested step (s); rounded down so an integer number of steps fits
    /// each output interval.
    pub dt: f64,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_top_population")]
    pub max_top_level_population: f64,
}

fn default_top_population() -> f64 {
    1e-6
}

impl IntegratorSettings {
    pub fn new(dt: f64) -> Self {
        Self { dt, method: Method::ExponentialMidpoint, max_top_level_population: default_top_population() }
    }

    /// The largest step the rule allows for a level whose fastest drive is
    /// `f_max` Hz.
    pub fn max_dt(f_max: f64) -> f64 {
        if f_max > 0.0 {
            1.0 / (SAMPLES_PER_PERIOD * f_max)
        } else {
            f64::INFINITY
        }
    }

    pub fn for_frequency(f_max: f64, fallback: f64) -> Self {
        let dt = Self::max_dt(f_max);
        Self::new(if dt.is_finite() { dt } else { fallback })
    }

    pub fn validate(&self, f_max: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        let limit = Self::max_dt(f_max);
        if self.dt > limit * (1.0 + 1e-9) {
            return Err(Error::config(format!(
                "dt = {:.4e} s exceeds 1/(50 f_max) = {limit:.4e} s for f_max = {f_max:.4e} Hz",
                self.dt
            )));
        }
        if !(self.max_top_level_population > 0.0) {
            return Err(Error::config("max_top_level_population must be positive"));
        }
        Ok(())
    }
}

/// `|<a|b>|`.
pub fn fidelity(a: &State, b: &State) -> Result<f64> {
    Ok(a.inner(b)?.norm())
}
