use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::kernel::{BatchState, BATCH};
use crate::evolve::{fidelity, propagate_batch, ColumnInput, HamiltonianSource, IntegratorSettings, TermSource};
use crate::hilbert::{FockSpace, State, C64};
use crate::models::{h_2pqrm, IonConfig, Scheme, SchemeConfig, SpinAxis, SpinBasis, TwoPhotonRabiParams};
use crate::noise::TrajectorySeed;

/// Which Hamiltonian the simulated state is propagated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// The ion with the full displacement exponentials.
    #[default]
    Ion,
    /// The effective two-photon interaction the lasers produce.
    Interaction,
}

/// `|up or down along axis>|fock>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialState {
    pub axis: SpinAxis,
    pub up: bool,
    pub fock: usize,
}

impl InitialState {
    pub fn state(&self, basis: SpinBasis, space: FockSpace) -> Result<State> {
        State::product(space, basis.eigenstate(self.axis, self.up), self.fock)
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let spin = if self.up { "up" } else { "down" };
        let axis = match self.axis {
            SpinAxis::Parallel => "par",
            SpinAxis::Perpendicular => "perp",
        };
        write!(f, "{spin}-{axis}-{}", self.fock)
    }
}

impl FromStr for InitialState {
    type Err = Error;

    /// Parses labels like `down-perp-0` or `up-par-2`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("initial state `{s}` is not of the form (up|down)-(par|perp)-<n>"));
        let mut parts = s.split('-');
        let up = match parts.next() {
            Some("up") => true,
            Some("down") => false,
            _ => return Err(bad()),
        };
        let axis = match parts.next() {
            Some("par") => SpinAxis::Parallel,
            Some("perp") => SpinAxis::Perpendicular,
            _ => return Err(bad()),
        };
        let fock = parts.next().and_then(|n| n.parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(Self { axis, up, fock })
    }
}

/// Everything one ensemble needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub name: String,
    pub scheme: SchemeConfig,
    pub ion: IonConfig,
    pub level: Level,
    pub initial: InitialState,
    pub n_trunc: usize,
    /// Total evolution time (s).
    pub duration: f64,
    /// Number of output intervals; the grid has `n_outputs + 1` points.
    pub n_outputs: usize,
    /// Whether trajectories sample the dephasing process.
    pub noise: bool,
    pub integrator: IntegratorSettings,
}

impl Experiment {
    pub fn t_grid(&self) -> Vec<f64> {
        let dt = self.duration / self.n_outputs as f64;
        (0..=self.n_outputs).map(|k| k as f64 * dt).collect()
    }

    /// Fastest drive frequency of the chosen level (Hz).
    pub fn max_frequency(&self) -> f64 {
        match self.level {
            Level::Ion => self.ion.max_frequency(),
            Level::Interaction => self.scheme.max_frequency(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::config("duration must be positive"));
        }
        if self.n_outputs == 0 {
            return Err(Error::config("n_outputs must be at least 1"));
        }
        if self.initial.fock + 2 >= self.n_trunc {
            return Err(Error::config(format!(
                "initial Fock state {} must lie below the top two levels of n_trunc = {}",
                self.initial.fock, self.n_trunc
            )));
        }
        if self.noise && self.ion.noise.is_none() {
            return Err(Error::config("noise enabled but no noise parameters given"));
        }
        if self.scheme.target.spin_basis != self.scheme.scheme.spin_basis() {
            return Err(Error::config("target spin basis does not match the scheme"));
        }
        self.ion.validate()?;
        self.integrator.validate(self.max_frequency())
    }
}

/// Observables at one time. The spin and boson expectations are taken in the
/// frame of the simulated model (the interaction frame undone), so they are
/// directly comparable with the ideal model; fidelity is taken in the
/// interaction frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observables {
    pub sigma_par: f64,
    pub sigma_perp: f64,
    pub sigma_y: f64,
    pub n: f64,
    pub fidelity: f64,
}

impl Observables {
    pub const FIELDS: usize = 5;

    pub fn to_array(self) -> [f64; Self::FIELDS] {
        [self.sigma_par, self.sigma_perp, self.sigma_y, self.n, self.fidelity]
    }

    fn from_array(a: [f64; Self::FIELDS]) -> Self {
        Self { sigma_par: a[0], sigma_perp: a[1], sigma_y: a[2], n: a[3], fidelity: a[4] }
    }

    fn of_state(amps: &[C64], n_trunc: usize, basis: SpinBasis, fidelity: f64) -> Self {
        let (up, down) = amps.split_at(n_trunc);
        let mut cross = C64::new(0.0, 0.0);
        let (mut sz, mut n) = (0.0, 0.0);
        for (k, (u, d)) in up.iter().zip(down).enumerate() {
            cross += u.conj() * d;
            sz += u.norm_sqr() - d.norm_sqr();
            n += k as f64 * (u.norm_sqr() + d.norm_sqr());
        }
        let (sx, sy) = (2.0 * cross.re, 2.0 * cross.im);
        let (sigma_par, sigma_perp, sigma_y) = match basis {
            SpinBasis::U => (sz, sx, sy),
            SpinBasis::P => (sx, sz, -sy),
        };
        Self { sigma_par, sigma_perp, sigma_y, n, fidelity }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub seed: TrajectorySeed,
    pub t_grid: Vec<f64>,
    pub points: Vec<Observables>,
    /// Largest per-step `| ||psi|| - 1 |` before renormalization.
    pub norm_drift_max: f64,
    /// Interaction-frame states at each time, when requested.
    pub states: Option<Vec<State>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub t_grid: Vec<f64>,
    pub mean: Vec<Observables>,
    pub stderr: Vec<Observables>,
    /// The ideal model's observables (fidelity 1).
    pub reference: Vec<Observables>,
    pub n_traj: usize,
    pub master_seed: u64,
    pub norm_drift_max: f64,
    /// Step actually used (s).
    pub dt: f64,
}

impl EnsembleResult {
    pub fn final_mean(&self) -> Observables {
        *self.mean.last().expect("grid has at least one point")
    }

    pub fn final_stderr(&self) -> Observables {
        *self.stderr.last().expect("grid has at least one point")
    }
}

/// Brings a state propagated under the ion Hamiltonian into the frame of the
/// interaction-level Hamiltonian: identity for the unprotected scheme,
/// `exp(+i Omega_DD t s_x / 2)` for the protected one.
pub fn frame_align(scheme: &SchemeConfig, t: f64, psi_sim: &State) -> State {
    let mut amps = psi_sim.as_slice().to_vec();
    align_in_place(scheme, t, &mut amps);
    State::from_vec(amps).expect("nonempty state")
}

fn align_in_place(scheme: &SchemeConfig, t: f64, amps: &mut [C64]) {
    if scheme.scheme == Scheme::Unprotected {
        return;
    }
    let (s, c) = (0.5 * scheme.omega_dd * t).sin_cos();
    let is = C64::new(0.0, s);
    let n = amps.len() / 2;
    let (up, down) = amps.split_at_mut(n);
    for (u, d) in up.iter_mut().zip(down.iter_mut()) {
        let (u0, d0) = (*u, *d);
        *u = u0 * c + is * d0;
        *d = d0 * c + is * u0;
    }
}

/// `exp(-i s F t)` applied in place, where `F` is the frame generator of the
/// scheme: `(W/2) s_par + w0 a^dag a` (U) or `w0 a^dag a` (P).
fn rotate_frame(params: &TwoPhotonRabiParams, scheme: Scheme, t: f64, sign: f64, amps: &mut [C64]) {
    let n = amps.len() / 2;
    let half_w = match scheme {
        Scheme::Unprotected => 0.5 * params.omega_qubit,
        Scheme::Protected => 0.0,
    };
    for (r, a) in amps.iter_mut().enumerate() {
        let spin = if r < n { 1.0 } else { -1.0 };
        let energy = spin * half_w + params.omega_boson * (r % n) as f64;
        *a *= C64::from_polar(1.0, -sign * energy * t);
    }
}

/// `exp(+iFt) exp(-i H_2PQRM t) psi0` at every grid time: the ideal model seen
/// from the interaction frame of the scheme.
pub fn reference_states(scheme: Scheme, params: &TwoPhotonRabiParams, psi0: &State, t_grid: &[f64]) -> Result<Vec<State>> {
    let n = psi0.dim() / 2;
    let space = FockSpace::new(n)?;
    if params.spin_basis != scheme.spin_basis() {
        return Err(Error::config("reference parameters use the wrong spin basis for the scheme"));
    }
    let eig = h_2pqrm(params, space).eigh()?;
    let coeffs = eig.vectors.adjoint() * psi0.amplitudes();
    t_grid
        .iter()
        .map(|&t| {
            let phased = coeffs
                .iter()
                .zip(eig.values.iter())
                .map(|(c, &e)| c * C64::from_polar(1.0, -e * t));
            let v = &eig.vectors * nalgebra::DVector::from_iterator(coeffs.len(), phased);
            let mut amps: Vec<C64> = v.iter().copied().collect();
            rotate_frame(params, scheme, t, -1.0, &mut amps);
            State::from_vec(amps)
        })
        .collect()
}

/// A validated experiment with its Hamiltonian and reference prepared.
pub struct Simulation {
    experiment: Experiment,
    source: TermSource,
    space: FockSpace,
    psi0: State,
    t_grid: Vec<f64>,
    reference: Vec<State>,
    reference_obs: Vec<Observables>,
    params: TwoPhotonRabiParams,
    keep_states: bool,
}

impl Simulation {
    pub fn new(experiment: &Experiment) -> Result<Self> {
        experiment.validate()?;
        let space = FockSpace::new(experiment.n_trunc)?;
        let source = match experiment.level {
            Level::Ion => TermSource::ion(&experiment.ion, space),
            Level::Interaction => TermSource::interaction(&experiment.scheme, space),
        };
        let params = experiment.scheme.simulated_params();
        let basis = params.spin_basis;
        let psi0 = experiment.initial.state(basis, space)?;
        let t_grid = experiment.t_grid();
        let reference = reference_states(experiment.scheme.scheme, &params, &psi0, &t_grid)?;
        let reference_obs = reference
            .iter()
            .zip(&t_grid)
            .map(|(psi, &t)| {
                let mut amps = psi.as_slice().to_vec();
                rotate_frame(&params, experiment.scheme.scheme, t, 1.0, &mut amps);
                Observables::of_state(&amps, space.n_trunc(), basis, 1.0)
            })
            .collect();
        Ok(Self {
            experiment: experiment.clone(),
            source,
            space,
            psi0,
            t_grid,
            reference,
            reference_obs,
            params,
            keep_states: false,
        })
    }

    /// Keep the interaction-frame state at every output time in records.
    pub fn keep_states(mut self, keep: bool) -> Self {
        self.keep_states = keep;
        self
    }

    pub fn experiment(&self) -> &Experiment {
        &self.experiment
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn reference(&self) -> &[State] {
        &self.reference
    }

    pub fn reference_observables(&self) -> &[Observables] {
        &self.reference_obs
    }

    pub fn source(&self) -> &TermSource {
        &self.source
    }

    /// Step size after rounding to the output grid.
    pub fn dt(&self) -> Result<f64> {
        Ok(crate::evolve::StepPlan::new(&self.experiment.integrator, self.source.max_frequency(), &self.t_grid)?.dt)
    }

    /// Runs up to [`BATCH`] trajectories together.
    pub fn run_batch(&self, seeds: &[TrajectorySeed]) -> Result<Vec<TrajectoryRecord>> {
        let noise = if self.experiment.noise { self.experiment.ion.noise } else { None };
        let columns: Vec<ColumnInput> = seeds
            .iter()
            .map(|&seed| ColumnInput { psi0: self.psi0.clone(), noise: noise.map(|p| (p, seed)) })
            .collect();
        let n_out = self.t_grid.len();
        let mut records: Vec<TrajectoryRecord> = seeds
            .iter()
            .map(|&seed| TrajectoryRecord {
                seed,
                t_grid: self.t_grid.clone(),
                points: Vec::with_capacity(n_out),
                norm_drift_max: 0.0,
                states: self.keep_states.then(|| Vec::with_capacity(n_out)),
            })
            .collect();
        let level = self.experiment.level;
        let scheme = self.experiment.scheme;
        let basis = self.params.spin_basis;
        let n = self.space.n_trunc();
        let on_output = |out: usize, t: f64, batch: &BatchState| -> Result<()> {
            for (k, rec) in records.iter_mut().enumerate() {
                let mut amps = batch.column(k);
                if level == Level::Ion {
                    align_in_place(&scheme, t, &mut amps);
                }
                let aligned = State::from_vec(amps)?;
                let f = fidelity(&aligned, &self.reference[out])?;
                let mut model = aligned.as_slice().to_vec();
                rotate_frame(&self.params, scheme.scheme, t, 1.0, &mut model);
                rec.points.push(Observables::of_state(&model, n, basis, f));
                if let Some(states) = rec.states.as_mut() {
                    states.push(aligned);
                }
            }
            Ok(())
        };
        let stats = propagate_batch(&self.source, &columns, &self.experiment.integrator, &self.t_grid, on_output)
            .map_err(|e| match e {
                Error::Trajectory { .. } => e,
                e if seeds.len() == 1 => Error::Trajectory { seed: seeds[0], source: Box::new(e) },
                e => e,
            })?;
        for (k, rec) in records.iter_mut().enumerate() {
            rec.norm_drift_max = stats.norm_drift_max[k];
        }
        Ok(records)
    }

    pub fn run_trajectory(&self, seed: TrajectorySeed) -> Result<TrajectoryRecord> {
        Ok(self.run_batch(&[seed])?.remove(0))
    }

    /// Mean and standard error over `n_traj` trajectories with seeds
    /// `(master_seed, 0..n_traj)`. Batches run on the current rayon pool; the
    /// reduction is sequential in trajectory order, so the result does not
    /// depend on the thread count.
    pub fn ensemble(&self, n_traj: usize, master_seed: u64) -> Result<EnsembleResult> {
        if n_traj == 0 {
            return Err(Error::arg("n_traj must be at least 1"));
        }
        let seeds: Vec<TrajectorySeed> = (0..n_traj as u64).map(|i| TrajectorySeed::new(master_seed, i)).collect();
        let records: Vec<TrajectoryRecord> = if self.experiment.noise {
            let batches: Vec<Result<Vec<TrajectoryRecord>>> =
                seeds.par_chunks(BATCH).map(|chunk| self.run_batch(chunk)).collect();
            let mut all = Vec::with_capacity(n_traj);
            for b in batches {
                all.extend(b?);
            }
            all
        } else {
            // without noise every trajectory is the same
            vec![self.run_trajectory(seeds[0])?]
        };
        Ok(self.reduce(&records, master_seed))
    }

    fn reduce(&self, records: &[TrajectoryRecord], master_seed: u64) -> EnsembleResult {
        let n_out = self.t_grid.len();
        let count = records.len() as f64;
        let mut mean = Vec::with_capacity(n_out);
        let mut stderr = Vec::with_capacity(n_out);
        for i in 0..n_out {
            let mut sum = [0.0; Observables::FIELDS];
            for rec in records {
                for (s, v) in sum.iter_mut().zip(rec.points[i].to_array()) {
                    *s += v;
                }
            }
            let m = sum.map(|s| s / count);
            let mut sq = [0.0; Observables::FIELDS];
            for rec in records {
                for ((s, v), mu) in sq.iter_mut().zip(rec.points[i].to_array()).zip(m) {
                    *s += (v - mu) * (v - mu);
                }
            }
            let se = if records.len() > 1 { sq.map(|s| (s / (count - 1.0) / count).sqrt()) } else { [0.0; Observables::FIELDS] };
            mean.push(Observables::from_array(m));
            stderr.push(Observables::from_array(se));
        }
        EnsembleResult {
            t_grid: self.t_grid.clone(),
            mean,
            stderr,
            reference: self.reference_obs.clone(),
            n_traj: records.len(),
            master_seed,
            norm_drift_max: records.iter().map(|r| r.norm_drift_max).fold(0.0, f64::max),
            dt: self.dt().unwrap_or(self.experiment.integrator.dt),
        }
    }
}

pub fn run_trajectory(experiment: &Experiment, seed: TrajectorySeed) -> Result<TrajectoryRecord> {
    Simulation::new(experiment)?.run_trajectory(seed)
}

pub fn ensemble(experiment: &Experiment, n_traj: usize, master_seed: u64) -> Result<EnsembleResult> {
    Simulation::new(experiment)?.ensemble(n_traj, master_seed)
}
