//! User-facing experiment description (TOML) and its translation into an
//! [`Experiment`]. Frequencies are given in Hz and multiplied by 2pi here.
//! See `docs/config.md` for the schema.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{Experiment, InitialState, IntegratorSettings, Level};
use crate::models::{protected_config, unprotected_config, IonBase, Scheme, TwoPhotonRabiParams};
use crate::noise::OUParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub name: String,
    pub scheme: Scheme,
    #[serde(default)]
    pub level: Level,
    /// `(up|down)-(par|perp)-<n>`.
    pub initial_state: String,
    /// Total evolution time (s).
    pub duration: f64,
    #[serde(default = "default_outputs")]
    pub n_outputs: usize,
    #[serde(default = "default_trunc")]
    pub n_trunc: usize,
    pub model: ModelSection,
    pub ion: IonSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
}

fn default_outputs() -> usize {
    200
}

fn default_trunc() -> usize {
    40
}

/// The simulated model, as ratios to the boson frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `g / w0`.
    pub coupling_over_boson: f64,
    /// `W / w0`.
    pub qubit_over_boson: f64,
    /// `g / 2pi` (Hz); derived from the sideband drive when absent.
    #[serde(default)]
    pub coupling_hz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonSection {
    #[serde(default = "default_qubit_hz")]
    pub qubit_frequency_hz: f64,
    pub trap_frequency_hz: f64,
    /// Sideband Rabi frequency `Omega / 2pi` (Hz); solved from the coupling
    /// when absent.
    #[serde(default)]
    pub sideband_rabi_hz: Option<f64>,
    pub lamb_dicke: f64,
    #[serde(default = "default_carrier_eta")]
    pub carrier_lamb_dicke: f64,
    /// `Omega_DD / 2pi` (Hz); protected scheme only.
    #[serde(default)]
    pub omega_dd_hz: Option<f64>,
}

fn default_qubit_hz() -> f64 {
    4e14
}

fn default_carrier_eta() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// Correlation time (s).
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Coherence time (s); ignored when `diffusion` is given.
    #[serde(default = "default_t2")]
    pub t2: f64,
    /// Diffusion constant `c` (rad^2 s^-3).
    #[serde(default)]
    pub diffusion: Option<f64>,
}

fn default_true() -> bool {
    true
}

fn default_tau() -> f64 {
    100e-6
}

fn default_t2() -> f64 {
    3e-3
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { enabled: true, tau: default_tau(), t2: default_t2(), diffusion: None }
    }
}

impl NoiseSection {
    pub fn params(&self) -> Result<OUParams> {
        match self.diffusion {
            Some(c) => OUParams::new(self.tau, c),
            None => OUParams::from_t2(self.t2, self.tau),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    /// Step (s); the largest step the rule allows when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_top")]
    pub max_top_level_population: f64,
}

fn default_top() -> f64 {
    1e-6
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self { dt: None, max_top_level_population: default_top() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
}

fn default_n_traj() -> usize {
    100
}

fn default_seed() -> u64 {
    20240601
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self { n_traj: default_n_traj(), master_seed: default_seed() }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    fn coupling(&self) -> Result<f64> {
        let divisor = match self.scheme {
            Scheme::Unprotected => 4.0,
            Scheme::Protected => 8.0,
        };
        match (self.model.coupling_hz, self.ion.sideband_rabi_hz) {
            (Some(g), _) => Ok(TAU * g),
            (None, Some(rabi)) => Ok(self.ion.lamb_dicke.powi(2) * TAU * rabi / divisor),
            (None, None) => Err(Error::config("give model.coupling_hz or ion.sideband_rabi_hz")),
        }
    }

    /// Builds the experiment, running every consistency check of the scheme
    /// maps.
    pub fn experiment(&self) -> Result<Experiment> {
        let m = &self.model;
        if !(m.coupling_over_boson > 0.0) {
            return Err(Error::config("model.coupling_over_boson must be positive"));
        }
        let target =
            TwoPhotonRabiParams::from_ratios(self.coupling()?, m.coupling_over_boson, m.qubit_over_boson, self.scheme.spin_basis())?;
        let noise = self.noise.params()?;
        let base = IonBase {
            omega_qubit_splitting: TAU * self.ion.qubit_frequency_hz,
            trap_freq: TAU * self.ion.trap_frequency_hz,
            noise: Some(noise),
        };
        let rabi = self.ion.sideband_rabi_hz.map(|r| TAU * r);
        let (scheme, ion) = match self.scheme {
            Scheme::Unprotected => {
                if self.ion.omega_dd_hz.is_some() {
                    return Err(Error::config("ion.omega_dd_hz applies to the protected scheme only"));
                }
                unprotected_config(&target, rabi, self.ion.lamb_dicke, &base)?
            }
            Scheme::Protected => {
                let omega_dd = self
                    .ion
                    .omega_dd_hz
                    .ok_or_else(|| Error::config("protected scheme needs ion.omega_dd_hz"))?;
                protected_config(&target, rabi, self.ion.lamb_dicke, TAU * omega_dd, self.ion.carrier_lamb_dicke, &base)?
            }
        };
        let f_max = match self.level {
            Level::Ion => ion.max_frequency(),
            Level::Interaction => scheme.max_frequency(),
        };
        let mut integrator = match self.integrator.dt {
            Some(dt) => IntegratorSettings::new(dt),
            None => IntegratorSettings::for_frequency(f_max, self.duration / self.n_outputs.max(1) as f64),
        };
        integrator.max_top_level_population = self.integrator.max_top_level_population;
        let experiment = Experiment {
            name: self.name.clone(),
            scheme,
            ion,
            level: self.level,
            initial: self.initial_state.parse::<InitialState>()?,
            n_trunc: self.n_trunc,
            duration: self.duration,
            n_outputs: self.n_outputs,
            noise: self.noise.enabled,
            integrator,
        };
        experiment.validate()?;
        Ok(experiment)
    }
}
