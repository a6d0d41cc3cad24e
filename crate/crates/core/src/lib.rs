//! Simulation of the two-photon quantum Rabi model realized on a trapped ion,
//! with and without continuous dynamical decoupling, under
//! Ornstein-Uhlenbeck dephasing of the qubit.

pub mod config;
pub mod error;
pub mod evolve;
pub mod hilbert;
pub mod models;
pub mod noise;
pub mod noise_check;
pub mod output;
pub mod presets;
pub mod spectrum;

pub use error::{Error, Result};
