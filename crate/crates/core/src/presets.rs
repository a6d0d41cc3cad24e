//! Named experiments: the three dynamics scenarios in both schemes, at the
//! laboratory parameter scale and at a cheaper desk scale.
//!
//! Names are `fig1{ab,cd,ef}-{u,p}-{paper,desk}`. Dropping the scheme part
//! (`fig1ef-desk`) selects both schemes, and `fig1-desk` selects all six.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{Config, EnsembleSection, IntegratorSection, IonSection, ModelSection, NoiseSection};
use crate::error::{Error, Result};
use crate::evolve::Level;
use crate::models::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Paper,
    Desk,
}

impl Scale {
    pub fn tag(self) -> &'static str {
        match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        }
    }

    pub fn hardware(self) -> Hardware {
        match self {
            Scale::Paper => PAPER,
            Scale::Desk => DESK,
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Trap, drive and noise parameters shared by every scenario at one scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hardware {
    pub trap_frequency_hz: f64,
    pub sideband_rabi_hz: f64,
    pub lamb_dicke: f64,
    pub carrier_lamb_dicke: f64,
    pub omega_dd_hz: f64,
    pub tau: f64,
    pub t2: f64,
    pub n_trunc: usize,
    pub max_top_level_population: f64,
}

pub const PAPER: Hardware = Hardware {
    trap_frequency_hz: 2e6,
    sideband_rabi_hz: 100e3,
    lamb_dicke: 0.06,
    carrier_lamb_dicke: 0.01,
    omega_dd_hz: 20e3,
    tau: 100e-6,
    t2: 3e-3,
    n_trunc: 60,
    max_top_level_population: 1e-3,
};

/// The laboratory drive and noise on a softer trap with a stronger Lamb-Dicke
/// factor, which cuts the integration cost by the trap frequency ratio.
pub const DESK: Hardware = Hardware {
    trap_frequency_hz: 720e3,
    sideband_rabi_hz: 36e3,
    lamb_dicke: 0.1,
    carrier_lamb_dicke: 0.01,
    omega_dd_hz: 20e3,
    tau: 100e-6,
    t2: 3e-3,
    n_trunc: 60,
    max_top_level_population: 1e-3,
};

/// One panel row of the dynamics figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub panel: &'static str,
    pub coupling_over_boson: f64,
    pub qubit_over_boson: f64,
    pub initial_state: &'static str,
}

pub const SCENARIOS: [Scenario; 3] = [
    Scenario { panel: "fig1ab", coupling_over_boson: 0.1, qubit_over_boson: 3.0, initial_state: "down-perp-0" },
    Scenario { panel: "fig1cd", coupling_over_boson: 0.2, qubit_over_boson: 2.0, initial_state: "up-par-2" },
    Scenario { panel: "fig1ef", coupling_over_boson: 0.3, qubit_over_boson: 1.0, initial_state: "down-par-2" },
];

pub fn duration(scheme: Scheme) -> f64 {
    match scheme {
        Scheme::Unprotected => 5e-3,
        Scheme::Protected => 10e-3,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub scale: Scale,
    pub scenario: Scenario,
    pub scheme: Scheme,
    pub config: Config,
}

fn scheme_tag(scheme: Scheme) -> &'static str {
    match scheme {
        Scheme::Unprotected => "u",
        Scheme::Protected => "p",
    }
}

impl Preset {
    pub fn new(scenario: Scenario, scheme: Scheme, scale: Scale) -> Self {
        let hw = scale.hardware();
        let name = format!("{}-{}-{}", scenario.panel, scheme_tag(scheme), scale);
        let config = Config {
            name: name.clone(),
            scheme,
            level: Level::Ion,
            initial_state: scenario.initial_state.to_string(),
            duration: duration(scheme),
            n_outputs: 200,
            n_trunc: hw.n_trunc,
            model: ModelSection {
                coupling_over_boson: scenario.coupling_over_boson,
                qubit_over_boson: scenario.qubit_over_boson,
                coupling_hz: None,
            },
            ion: IonSection {
                qubit_frequency_hz: 4e14,
                trap_frequency_hz: hw.trap_frequency_hz,
                sideband_rabi_hz: Some(hw.sideband_rabi_hz),
                lamb_dicke: hw.lamb_dicke,
                carrier_lamb_dicke: hw.carrier_lamb_dicke,
                omega_dd_hz: (scheme == Scheme::Protected).then_some(hw.omega_dd_hz),
            },
            noise: NoiseSection { enabled: true, tau: hw.tau, t2: hw.t2, diffusion: None },
            integrator: IntegratorSection { dt: None, max_top_level_population: hw.max_top_level_population },
            ensemble: EnsembleSection {
                n_traj: match scale {
                    Scale::Paper => 400,
                    Scale::Desk => 100,
                },
                ..EnsembleSection::default()
            },
        };
        Self { name, scale, scenario, scheme, config }
    }
}

pub fn all() -> Vec<Preset> {
    let mut out = Vec::new();
    for scale in [Scale::Desk, Scale::Paper] {
        for s in SCENARIOS {
            for scheme in [Scheme::Unprotected, Scheme::Protected] {
                out.push(Preset::new(s, scheme, scale));
            }
        }
    }
    out
}

/// Resolves a preset or group name to its members, unprotected first.
pub fn lookup(name: &str) -> Result<Vec<Preset>> {
    let found: Vec<Preset> = all()
        .into_iter()
        .filter(|p| {
            p.name == name
                || format!("{}-{}", p.scenario.panel, p.scale) == name
                || format!("fig1-{}", p.scale) == name
        })
        .collect();
    if found.is_empty() {
        return Err(Error::config(format!("unknown preset `{name}`; see list-presets")));
    }
    Ok(found)
}

/// Every name [`lookup`] accepts.
pub fn names() -> Vec<String> {
    let mut out = Vec::new();
    for scale in [Scale::Desk, Scale::Paper] {
        out.push(format!("fig1-{scale}"));
        for s in SCENARIOS {
            out.push(format!("{}-{scale}", s.panel));
            for scheme in [Scheme::Unprotected, Scheme::Protected] {
                out.push(format!("{}-{}-{scale}", s.panel, scheme_tag(scheme)));
            }
        }
    }
    out
}
