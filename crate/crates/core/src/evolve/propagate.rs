use crate::error::{Error, Result};
use crate::evolve::kernel::{exp_step, BatchState, NoiseStep, Workspace, BATCH};
use crate::evolve::{HamiltonianSource, IntegratorSettings};
use crate::hilbert::{FockSpace, State, C64};
use crate::noise::{OUParams, OuProcess, TrajectorySeed};

/// Step size and count resolved against an output grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPlan {
    pub dt: f64,
    pub steps_per_output: usize,
}

impl StepPlan {
    pub fn new(settings: &IntegratorSettings, f_max: f64, t_grid: &[f64]) -> Result<Self> {
        settings.validate(f_max)?;
        if t_grid.is_empty() {
            return Err(Error::arg("empty time grid"));
        }
        if t_grid.len() == 1 {
            return Ok(Self { dt: settings.dt, steps_per_output: 0 });
        }
        let spacing = t_grid[1] - t_grid[0];
        if !(spacing > 0.0) {
            return Err(Error::arg("time grid must be increasing"));
        }
        for (k, &t) in t_grid.iter().enumerate() {
            let want = t_grid[0] + k as f64 * spacing;
            if (t - want).abs() > 1e-9 * spacing.max(want.abs()) {
                return Err(Error::arg(format!("time grid is not uniform at index {k}")));
            }
        }
        let steps = ((spacing / settings.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok(Self { dt: spacing / steps as f64, steps_per_output: steps })
    }
}

/// One column of a batched propagation.
#[derive(Debug, Clone)]
pub(crate) struct ColumnInput {
    pub psi0: State,
    pub noise: Option<(OUParams, TrajectorySeed)>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BatchStats {
    pub norm_drift_max: [f64; BATCH],
}

fn top_population(amps: &[C64], space: FockSpace) -> f64 {
    let n = space.n_trunc();
    [n - 2, n - 1, 2 * n - 2, 2 * n - 1].iter().map(|&r| amps[r].norm_sqr()).sum()
}

/// Propagates up to [`BATCH`] states on `t_grid`, calling `on_output` with
/// the batch at every grid time (including the first).
pub(crate) fn propagate_batch<S, F>(
    source: &S,
    columns: &[ColumnInput],
    settings: &IntegratorSettings,
    t_grid: &[f64],
    mut on_output: F,
) -> Result<BatchStats>
where
    S: HamiltonianSource + ?Sized,
    F: FnMut(usize, f64, &BatchState) -> Result<()>,
{
    assert!(columns.len() <= BATCH, "at most {BATCH} columns per batch");
    let space = source.space();
    let dim = space.joint_dim();
    let plan = StepPlan::new(settings, source.max_frequency(), t_grid)?;
    let mut psi = BatchState::zeros(dim);
    let mut processes: Vec<Option<OuProcess>> = Vec::with_capacity(columns.len());
    for (k, col) in columns.iter().enumerate() {
        if col.psi0.dim() != dim {
            return Err(Error::dim(format!("initial state has dimension {}, Hamiltonian {dim}", col.psi0.dim())));
        }
        let norm = col.psi0.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::arg(format!("initial state norm {norm} is not 1")));
        }
        psi.set_column(k, &col.psi0);
        processes.push(match &col.noise {
            Some((params, seed)) => Some(OuProcess::new(params, plan.dt, *seed)?),
            None => None,
        });
    }
    let mut h = source.template();
    let mut ws = Workspace::new(dim);
    let mut noise = NoiseStep::none(space.n_trunc());
    let mut drift_max = [0.0f64; BATCH];
    let t0 = t_grid[0];

    for (out, &t_out) in t_grid.iter().enumerate() {
        if out > 0 {
            for s in 0..plan.steps_per_output {
                let step = (out - 1) * plan.steps_per_output + s;
                let t = t0 + step as f64 * plan.dt;
                let t_mid = t + 0.5 * plan.dt;
                source.fill(t_mid, &mut h);
                noise.axis = source.noise_axis(t_mid);
                for (k, p) in processes.iter().enumerate() {
                    noise.half_xi[k] = p.as_ref().map_or(0.0, |p| 0.5 * p.value());
                }
                exp_step(&h, &noise, plan.dt, &mut psi, &mut ws)?;
                let drift = psi.renormalize();
                for k in 0..columns.len() {
                    drift_max[k] = drift_max[k].max(drift[k]);
                }
                for p in processes.iter_mut().flatten() {
                    p.advance();
                }
            }
        }
        for k in 0..columns.len() {
            let pop = top_population(&psi.column(k), space);
            if pop > settings.max_top_level_population {
                let err = Error::TruncationOverflow {
                    time: t_out,
                    population: pop,
                    tolerance: settings.max_top_level_population,
                };
                return Err(match columns[k].noise {
                    Some((_, seed)) => Error::Trajectory { seed, source: Box::new(err) },
                    None => err,
                });
            }
        }
        on_output(out, t_out, &psi)?;
    }
    Ok(BatchStats { norm_drift_max: drift_max })
}

/// Noiseless propagation of one state; returns the state at every grid time.
pub fn propagate<S: HamiltonianSource + ?Sized>(
    source: &S,
    psi0: &State,
    settings: &IntegratorSettings,
    t_grid: &[f64],
) -> Result<Vec<State>> {
    collect(source, ColumnInput { psi0: psi0.clone(), noise: None }, settings, t_grid)
}

/// Propagation of one state under one dephasing realization.
pub fn propagate_noisy<S: HamiltonianSource + ?Sized>(
    source: &S,
    psi0: &State,
    settings: &IntegratorSettings,
    t_grid: &[f64],
    noise: &OUParams,
    seed: TrajectorySeed,
) -> Result<Vec<State>> {
    collect(source, ColumnInput { psi0: psi0.clone(), noise: Some((*noise, seed)) }, settings, t_grid)
}

fn collect<S: HamiltonianSource + ?Sized>(
    source: &S,
    column: ColumnInput,
    settings: &IntegratorSettings,
    t_grid: &[f64],
) -> Result<Vec<State>> {
    let mut out = Vec::with_capacity(t_grid.len());
    propagate_batch(source, &[column], settings, t_grid, |_, _, batch| {
        out.push(State::from_vec(batch.column(0))?);
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::TermSource;
    use crate::hilbert::{boson_operators, joint, pauli, Operator};
    use crate::models::{SpinBasis, TwoPhotonRabiParams};

    fn grid(n: usize, spacing: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * spacing).collect()
    }

    #[test]
    fn plan_rounds_dt_down() {
        let s = IntegratorSettings::new(0.3);
        let plan = StepPlan::new(&s, 0.0, &grid(3, 1.0)).unwrap();
        assert_eq!(plan.steps_per_output, 4);
        assert!((plan.dt - 0.25).abs() < 1e-15);
        let exact = StepPlan::new(&IntegratorSettings::new(0.25), 0.0, &grid(3, 1.0)).unwrap();
        assert_eq!(exact.steps_per_output, 4);
        assert!(StepPlan::new(&s, 0.0, &[0.0, 1.0, 2.5]).is_err());
        assert!(StepPlan::new(&s, 1.0, &grid(3, 1.0)).is_err());
    }

    #[test]
    fn constant_hamiltonian_matches_eigendecomposition() {
        let space = FockSpace::new(40).unwrap();
        let params = TwoPhotonRabiParams::new(1.3, 1.0, 0.3, SpinBasis::U).unwrap();
        let src = TermSource::two_photon_rabi(&params, space);
        let h = src.operator_at(0.0);
        let psi0 = State::product(space, [C64::new(0.0, 0.0), C64::new(1.0, 0.0)], 2).unwrap();
        let t_grid = grid(11, 0.1);
        let states = propagate(&src, &psi0, &IntegratorSettings::new(0.001), &t_grid).unwrap();
        let eig = h.eigh().unwrap();
        for (t, s) in t_grid.iter().zip(&states) {
            let want = eig.exp_i(-t).apply(&psi0).unwrap();
            let err = s.sub(&want).unwrap().norm();
            assert!(err < 1e-10, "t = {t}: {err}");
        }
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let space = FockSpace::new(4).unwrap();
        let src = TermSource::constant(&Operator::zeros(8), space);
        let psi0 = State::basis(8, 5).unwrap();
        let states = propagate(&src, &psi0, &IntegratorSettings::new(0.1), &grid(5, 1.0)).unwrap();
        assert!(states.iter().all(|s| s == &psi0));
    }

    #[test]
    fn free_boson_phases() {
        let space = FockSpace::new(6).unwrap();
        let w0 = 2.0;
        let params = TwoPhotonRabiParams::new(0.0, w0, 0.0, SpinBasis::U).unwrap();
        let src = TermSource::two_photon_rabi(&params, space);
        let amps: Vec<C64> = (0..12).map(|i| C64::new(1.0 + i as f64, 0.5)).collect();
        let psi0 = State::from_vec(amps).unwrap().normalized().unwrap();
        let t_grid = grid(4, 0.7);
        let mut settings = IntegratorSettings::new(0.01);
        settings.max_top_level_population = 1.0;
        let states = propagate(&src, &psi0, &settings, &t_grid).unwrap();
        for (t, s) in t_grid.iter().zip(&states) {
            for i in 0..12 {
                let n = (i % 6) as f64;
                let want = psi0.as_slice()[i] * C64::from_polar(1.0, -w0 * n * t);
                assert!((s.as_slice()[i] - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn truncation_guard_names_the_time() {
        let space = FockSpace::new(4).unwrap();
        let ops = boson_operators(space);
        let x = joint(&pauli::identity(), &(&ops.a + &ops.a_dag)).unwrap();
        let src = TermSource::constant(&x, space);
        let psi0 = State::basis(8, 0).unwrap();
        let err = propagate(&src, &psi0, &IntegratorSettings::new(0.01), &grid(20, 0.5)).unwrap_err();
        match err {
            Error::TruncationOverflow { time, .. } => assert!(time > 0.0),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn noise_enters_as_sample_and_hold_phase() {
        // qubit only (boson frozen): relative phase equals the left sum of xi
        let space = FockSpace::new(2).unwrap();
        let src = TermSource::constant(&Operator::zeros(4), space).with_noise_axis(crate::evolve::NoiseAxis::Z);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let psi0 = State::product(space, [C64::new(h, 0.0), C64::new(h, 0.0)], 0).unwrap();
        let params = OUParams::from_t2(3e-3, 1e-4).unwrap();
        let seed = TrajectorySeed::new(5, 9);
        let dt = 1e-6;
        let t_grid = grid(101, 10.0 * dt);
        let mut settings = IntegratorSettings::new(dt);
        settings.max_top_level_population = 2.0;
        let states = propagate_noisy(&src, &psi0, &settings, &t_grid, &params, seed).unwrap();
        let path = crate::noise::NoisePath::generate(&params, dt, 1001, seed).unwrap();
        let phi = path.integrated();
        for (k, s) in states.iter().enumerate() {
            let amps = s.as_slice();
            let rel = (amps[2] * amps[0].conj()).arg();
            let want = phi[10 * k];
            let diff = (rel - want + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
            assert!(diff.abs() < 1e-9, "k = {k}: {rel} vs {want}");
        }
    }
}
