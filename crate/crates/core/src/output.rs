//! Ensemble CSV files and their JSON metadata sidecars.
//!
//! The CSV header is fixed ([`ENSEMBLE_COLUMNS`]); values are written in
//! shortest round-trip form, so identical results give identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::evolve::{EnsembleResult, Experiment, Method};

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const ENSEMBLE_COLUMNS: [&str; 15] = [
    "t",
    "sigma_par_mean",
    "sigma_par_stderr",
    "sigma_perp_mean",
    "sigma_perp_stderr",
    "sigma_y_mean",
    "sigma_y_stderr",
    "n_mean",
    "n_stderr",
    "fidelity_mean",
    "fidelity_stderr",
    "ref_sigma_par",
    "ref_sigma_perp",
    "ref_sigma_y",
    "ref_n",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRange {
    pub master_seed: u64,
    /// Trajectory indices `first..=last`.
    pub first_index: u64,
    pub last_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorEcho {
    pub method: Method,
    pub dt_requested: f64,
    pub dt_used: f64,
    pub max_top_level_population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_version: u32,
    pub code_version: String,
    pub name: String,
    pub csv: String,
    pub config: Config,
    pub experiment: Experiment,
    pub n_traj: usize,
    pub seeds: SeedRange,
    pub integrator: IntegratorEcho,
    pub norm_drift_max: f64,
    pub final_fidelity_mean: f64,
    pub final_fidelity_stderr: f64,
    pub wall_time_s: f64,
    pub threads: usize,
}

impl Sidecar {
    pub fn new(config: &Config, experiment: &Experiment, result: &EnsembleResult, csv: &str, wall_time_s: f64, threads: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            code_version: CODE_VERSION.to_string(),
            name: experiment.name.clone(),
            csv: csv.to_string(),
            config: config.clone(),
            experiment: experiment.clone(),
            n_traj: result.n_traj,
            seeds: SeedRange {
                master_seed: result.master_seed,
                first_index: 0,
                last_index: result.n_traj as u64 - 1,
            },
            integrator: IntegratorEcho {
                method: experiment.integrator.method,
                dt_requested: experiment.integrator.dt,
                dt_used: result.dt,
                max_top_level_population: experiment.integrator.max_top_level_population,
            },
            norm_drift_max: result.norm_drift_max,
            final_fidelity_mean: result.final_mean().fidelity,
            final_fidelity_stderr: result.final_stderr().fidelity,
            wall_time_s,
            threads,
        }
    }
}

pub fn write_ensemble_csv(path: &Path, result: &EnsembleResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ENSEMBLE_COLUMNS)?;
    for (i, &t) in result.t_grid.iter().enumerate() {
        let (m, s, r) = (result.mean[i], result.stderr[i], result.reference[i]);
        let row = [
            t,
            m.sigma_par,
            s.sigma_par,
            m.sigma_perp,
            s.sigma_perp,
            m.sigma_y,
            s.sigma_y,
            m.n,
            s.n,
            m.fidelity,
            s.fidelity,
            r.sigma_par,
            r.sigma_perp,
            r.sigma_y,
            r.n,
        ];
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Columns of an ensemble CSV, checked against the fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleTable {
    pub rows: Vec<[f64; 15]>,
}

impl EnsembleTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = ENSEMBLE_COLUMNS.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

pub fn read_ensemble_csv(path: &Path) -> Result<EnsembleTable> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(ENSEMBLE_COLUMNS.iter().copied()) {
        return Err(Error::config(format!("{} does not carry the ensemble header", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut row = [0.0; 15];
        for (slot, field) in row.iter_mut().zip(rec.iter()) {
            *slot = field
                .parse()
                .map_err(|_| Error::config(format!("non-numeric field `{field}` in {}", path.display())))?;
        }
        rows.push(row);
    }
    Ok(EnsembleTable { rows })
}

pub fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Writes `<dir>/<name>.csv` and `<dir>/<name>.json`.
pub fn write_run(dir: &Path, config: &Config, experiment: &Experiment, result: &EnsembleResult, wall_time_s: f64, threads: usize) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_name = format!("{}.csv", experiment.name);
    let csv_path = dir.join(&csv_name);
    let json_path = dir.join(format!("{}.json", experiment.name));
    write_ensemble_csv(&csv_path, result)?;
    write_sidecar(&json_path, &Sidecar::new(config, experiment, result, &csv_name, wall_time_s, threads))?;
    Ok((csv_path, json_path))
}
