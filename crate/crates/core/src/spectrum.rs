//! Eigen-analysis of the ideal model and the spectral-collapse diagnostic.
//!
//! Energies in scans are in units of the boson frequency. A finite matrix
//! always has a finite spectrum, so collapse shows up as a ground energy that
//! keeps falling as the Fock cutoff grows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{boson_operators, expectation, joint, pauli, Eigh, FockSpace};
use crate::models::{h_2pqrm, SpinBasis, TwoPhotonRabiParams};

/// Coupling at which the spectrum collapses, in units of `w0`.
pub const COLLAPSE_COUPLING: f64 = 0.5;
/// Largest gap between the smallest and largest cutoff counted as converged.
pub const CONVERGENCE_GAP: f64 = 1e-6;
/// Smallest such gap counted as divergence.
pub const DIVERGENCE_GAP: f64 = 10.0 * CONVERGENCE_GAP;

const RESIDUAL_PAIRS: usize = 10;
const RESIDUAL_TOL: f64 = 1e-10;

/// Eigenvalues in ascending order with eigenvectors, checked on the lowest
/// pairs against `||Hv - lambda v|| < 1e-10 ||H||`.
pub fn eigenspectrum(params: &TwoPhotonRabiParams, space: FockSpace) -> Result<Eigh> {
    let h = h_2pqrm(params, space);
    let eig = h.eigh()?;
    let scale = h.norm_one().max(f64::MIN_POSITIVE);
    for k in 0..RESIDUAL_PAIRS.min(eig.values.len()) {
        let v = eig.vectors.column(k);
        let r = (h.matrix() * v - v * nalgebra::Complex::new(eig.values[k], 0.0)).norm();
        if r > RESIDUAL_TOL * scale {
            return Err(Error::Numerical(format!(
                "eigenpair {k} residual {r:e} exceeds {RESIDUAL_TOL:e} ||H|| for W = {}, w0 = {}, g = {}, n_trunc = {}",
                params.omega_qubit,
                params.omega_boson,
                params.coupling,
                space.n_trunc()
            )));
        }
    }
    Ok(eig)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumScan {
    pub qubit_over_boson: f64,
    pub g_over_omega: Vec<f64>,
    pub n_trunc: Vec<usize>,
    /// `ground_energy[i][j]` at `g_over_omega[i]`, `n_trunc[j]`.
    pub ground_energy: Vec<Vec<f64>>,
    /// `mean_phonon[i][j][k]` for the `k`-th lowest eigenstate.
    pub mean_phonon: Vec<Vec<Vec<f64>>>,
}

/// Convergence verdict for one coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseFlags {
    pub g_over_omega: f64,
    /// `|E0(largest cutoff) - E0(smallest cutoff)|`.
    pub gap: f64,
    pub converged: bool,
    /// Ground energy strictly decreasing over the whole cutoff grid with a
    /// final gap above [`DIVERGENCE_GAP`].
    pub diverging: bool,
}

impl SpectrumScan {
    pub fn flags(&self) -> Vec<CollapseFlags> {
        self.g_over_omega
            .iter()
            .zip(&self.ground_energy)
            .map(|(&g, row)| {
                let m = row.len();
                let gap = if m >= 2 { (row[m - 1] - row[0]).abs() } else { f64::NAN };
                let decreasing = m >= 2 && row.windows(2).all(|w| w[1] < w[0]);
                CollapseFlags {
                    g_over_omega: g,
                    gap,
                    converged: gap < CONVERGENCE_GAP,
                    diverging: decreasing && gap > DIVERGENCE_GAP,
                }
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let n_low = self.mean_phonon.first().and_then(|r| r.first()).map_or(0, Vec::len);
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["g_over_omega".to_string(), "n_trunc".into(), "ground_energy".into()];
        header.extend((0..n_low).map(|k| format!("mean_phonon_{k}")));
        w.write_record(&header)?;
        for (i, &g) in self.g_over_omega.iter().enumerate() {
            for (j, &n) in self.n_trunc.iter().enumerate() {
                let mut row = vec![g.to_string(), n.to_string(), self.ground_energy[i][j].to_string()];
                row.extend(self.mean_phonon[i][j].iter().map(f64::to_string));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_flags_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["g_over_omega", "gap", "converged", "diverging"])?;
        for f in self.flags() {
            w.write_record([f.g_over_omega.to_string(), f.gap.to_string(), f.converged.to_string(), f.diverging.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn validate_grids(g_grid: &[f64], n_trunc_grid: &[usize]) -> Result<()> {
    if g_grid.is_empty() || n_trunc_grid.is_empty() {
        return Err(Error::InvalidScan("empty grid".into()));
    }
    if let Some(g) = g_grid.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(Error::InvalidScan(format!("coupling {g} must be finite and nonnegative")));
    }
    if n_trunc_grid.iter().any(|&n| n < 2) {
        return Err(Error::InvalidScan("every n_trunc must be at least 2".into()));
    }
    if n_trunc_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidScan("n_trunc grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Ground energies and low-state phonon numbers over a grid, with `w0 = 1`.
pub fn spectrum_scan(qubit_over_boson: f64, g_grid: &[f64], n_trunc_grid: &[usize], n_low: usize) -> Result<SpectrumScan> {
    validate_grids(g_grid, n_trunc_grid)?;
    let mut ground_energy = Vec::with_capacity(g_grid.len());
    let mut mean_phonon = Vec::with_capacity(g_grid.len());
    for &g in g_grid {
        let params = TwoPhotonRabiParams::new(qubit_over_boson, 1.0, g, SpinBasis::U)?;
        let mut e_row = Vec::with_capacity(n_trunc_grid.len());
        let mut n_row = Vec::with_capacity(n_trunc_grid.len());
        for &n in n_trunc_grid {
            let space = FockSpace::new(n)?;
            let eig = eigenspectrum(&params, space)?;
            let number = joint(&pauli::identity(), &boson_operators(space).number)?;
            e_row.push(eig.values[0]);
            let phonons = (0..n_low.min(eig.values.len()))
                .map(|k| expectation(&eig.vector(k), &number).map(|z| z.re))
                .collect::<Result<Vec<f64>>>()?;
            n_row.push(phonons);
        }
        ground_energy.push(e_row);
        mean_phonon.push(n_row);
    }
    Ok(SpectrumScan {
        qubit_over_boson,
        g_over_omega: g_grid.to_vec(),
        n_trunc: n_trunc_grid.to_vec(),
        ground_energy,
        mean_phonon,
    })
}

/// [`spectrum_scan`] over a grid that must straddle the collapse point, with
/// at least two cutoffs.
pub fn collapse_scan(qubit_over_boson: f64, g_grid: &[f64], n_trunc_grid: &[usize], n_low: usize) -> Result<SpectrumScan> {
    validate_grids(g_grid, n_trunc_grid)?;
    let below = g_grid.iter().any(|&g| g < COLLAPSE_COUPLING);
    let above = g_grid.iter().any(|&g| g > COLLAPSE_COUPLING);
    if !(below && above) {
        return Err(Error::InvalidScan(format!("coupling grid must span both sides of {COLLAPSE_COUPLING} w0")));
    }
    if n_trunc_grid.len() < 2 {
        return Err(Error::InvalidScan("need at least two cutoffs to judge convergence".into()));
    }
    spectrum_scan(qubit_over_boson, g_grid, n_trunc_grid, n_low)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_spectrum_is_exact() {
        let space = FockSpace::new(9).unwrap();
        let p = TwoPhotonRabiParams::new(0.8, 1.0, 0.0, SpinBasis::U).unwrap();
        let eig = eigenspectrum(&p, space).unwrap();
        let mut want: Vec<f64> = (0..9).flat_map(|n| [0.4 + n as f64, -0.4 + n as f64]).collect();
        want.sort_by(f64::total_cmp);
        for (g, w) in eig.values.iter().zip(&want) {
            assert!((g - w).abs() < 1e-13);
        }
    }

    #[test]
    fn bases_share_a_spectrum() {
        let space = FockSpace::new(30).unwrap();
        let u = TwoPhotonRabiParams::new(1.0, 1.0, 0.3, SpinBasis::U).unwrap();
        let a = eigenspectrum(&u, space).unwrap();
        let b = eigenspectrum(&u.with_basis(SpinBasis::P), space).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn ground_energy_falls_with_coupling_without_qubit_term() {
        let grid: Vec<f64> = (0..10).map(|k| 0.05 * k as f64).collect();
        let scan = spectrum_scan(0.0, &grid, &[80], 1).unwrap();
        let e: Vec<f64> = scan.ground_energy.iter().map(|r| r[0]).collect();
        assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
    }

    #[test]
    fn grid_validation() {
        assert!(matches!(collapse_scan(1.0, &[0.1, 0.4], &[20, 30], 1), Err(Error::InvalidScan(_))));
        assert!(matches!(collapse_scan(1.0, &[0.4, 0.6], &[30], 1), Err(Error::InvalidScan(_))));
        assert!(matches!(spectrum_scan(1.0, &[0.4], &[30, 20], 1), Err(Error::InvalidScan(_))));
        assert!(matches!(spectrum_scan(1.0, &[-0.1], &[30], 1), Err(Error::InvalidScan(_))));
        assert!(matches!(spectrum_scan(1.0, &[], &[30], 1), Err(Error::InvalidScan(_))));
    }

    #[test]
    fn zero_coupling_column() {
        let scan = spectrum_scan(1.0, &[0.0], &[10, 20], 3).unwrap();
        assert!(scan.ground_energy[0].iter().all(|&e| (e + 0.5).abs() < 1e-13));
        // lowest three states: |down,0>, |up,0>, |down,1>
        let want = [0.0, 0.0, 1.0];
        for (got, w) in scan.mean_phonon[0][0].iter().zip(want) {
            assert!((got - w).abs() < 1e-12);
        }
    }
}
