//! Batched propagation kernel.
//!
//! A batch holds [`BATCH`] state vectors in split real/imaginary storage,
//! laid out row-major with the batch index fastest, so the inner loops of the
//! sparse matrix-vector product run over contiguous lanes. Each column's
//! arithmetic never depends on the other columns, which makes a trajectory's
//! result independent of which batch it was computed in.

use crate::error::{Error, Result};
use crate::hilbert::{State, C64};

pub const BATCH: usize = 16;

const MAX_TERMS: usize = 60;
/// Squared norm below which a Taylor term ends the series for its column.
const TERM_TOL_SQ: f64 = 1e-36;
/// Largest `||H||_1 dt` taken in one Taylor substep.
const MAX_THETA: f64 = 1.0;

/// Compressed sparse row matrix with a fixed pattern and mutable values.
#[derive(Debug, Clone)]
pub struct Csr {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Csr {
    /// Builds the pattern from `(row, col)` pairs; values start at zero.
    /// Returns the matrix and, for every input pair, its slot.
    pub fn from_pattern(dim: usize, entries: &[(usize, usize)]) -> (Self, Vec<usize>) {
        let mut sorted: Vec<(usize, usize)> = entries.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut row_ptr = vec![0; dim + 1];
        for &(r, _) in &sorted {
            row_ptr[r + 1] += 1;
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let col: Vec<usize> = sorted.iter().map(|&(_, c)| c).collect();
        let slots = entries
            .iter()
            .map(|e| sorted.binary_search(e).expect("entry present in its own pattern"))
            .collect();
        let nnz = col.len();
        (Self { dim, row_ptr, col, re: vec![0.0; nnz], im: vec![0.0; nnz] }, slots)
    }

    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    pub fn clear(&mut self) {
        self.re.fill(0.0);
        self.im.fill(0.0);
    }

    pub fn add(&mut self, slot: usize, v: C64) {
        self.re[slot] += v.re;
        self.im[slot] += v.im;
    }

    /// Upper bound on the induced 1-norm, with `|z|` bounded by
    /// `|re| + |im|` (exact enough to pick a step count).
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|e| self.re[e].abs() + self.im[e].abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// Per-step noise: `(xi_k/2)(n_x s_x + n_y s_y + n_z s_z) (x) I` on column k.
#[derive(Debug, Clone, Copy)]
pub struct NoiseStep {
    pub half_xi: [f64; BATCH],
    pub axis: [f64; 3],
    /// Size of each spin block (the Fock cutoff).
    pub block: usize,
}

impl NoiseStep {
    pub fn none(block: usize) -> Self {
        Self { half_xi: [0.0; BATCH], axis: [0.0; 3], block }
    }

    fn is_zero(&self) -> bool {
        self.half_xi.iter().all(|&x| x == 0.0) || self.axis == [0.0; 3]
    }
}

#[derive(Debug, Clone)]
pub struct BatchState {
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl BatchState {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, re: vec![0.0; dim * BATCH], im: vec![0.0; dim * BATCH] }
    }

    pub fn set_column(&mut self, k: usize, state: &State) {
        for (r, z) in state.as_slice().iter().enumerate() {
            self.re[r * BATCH + k] = z.re;
            self.im[r * BATCH + k] = z.im;
        }
    }

    pub fn column(&self, k: usize) -> Vec<C64> {
        (0..self.dim).map(|r| C64::new(self.re[r * BATCH + k], self.im[r * BATCH + k])).collect()
    }

    /// Squared norms of all columns.
    pub fn norms_sq(&self) -> [f64; BATCH] {
        let mut out = [0.0; BATCH];
        for (re, im) in self.re.chunks_exact(BATCH).zip(self.im.chunks_exact(BATCH)) {
            for k in 0..BATCH {
                out[k] += re[k] * re[k] + im[k] * im[k];
            }
        }
        out
    }

    /// Divides every nonzero column by its norm; returns `|norm - 1|` per
    /// column (zero for empty columns).
    pub fn renormalize(&mut self) -> [f64; BATCH] {
        let n2 = self.norms_sq();
        let mut inv = [1.0; BATCH];
        let mut drift = [0.0; BATCH];
        for k in 0..BATCH {
            if n2[k] > 0.0 {
                let n = n2[k].sqrt();
                inv[k] = 1.0 / n;
                drift[k] = (n - 1.0).abs();
            }
        }
        for (re, im) in self.re.chunks_exact_mut(BATCH).zip(self.im.chunks_exact_mut(BATCH)) {
            for k in 0..BATCH {
                re[k] *= inv[k];
                im[k] *= inv[k];
            }
        }
        drift
    }
}

/// Scratch buffers for [`exp_step`].
#[derive(Debug, Clone)]
pub struct Workspace {
    term_re: Vec<f64>,
    term_im: Vec<f64>,
    y_re: Vec<f64>,
    y_im: Vec<f64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        let z = vec![0.0; dim * BATCH];
        Self { term_re: z.clone(), term_im: z.clone(), y_re: z.clone(), y_im: z }
    }
}

/// `psi <- exp(-i H dt) psi` column by column, where `H` is `h` plus each
/// column's noise term.
pub fn exp_step(h: &Csr, noise: &NoiseStep, dt: f64, psi: &mut BatchState, ws: &mut Workspace) -> Result<()> {
    assert_eq!(h.dim, psi.dim);
    // each column picks its own substep count from its own noise strength
    let base = h.norm_bound();
    let axis = noise.axis.iter().map(|a| a.abs()).sum::<f64>();
    let mut substeps = [1usize; BATCH];
    for k in 0..BATCH {
        let norm = base + noise.half_xi[k].abs() * axis;
        substeps[k] = ((norm * dt / MAX_THETA).ceil() as usize).max(1);
    }
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { exp_step_avx512(h, noise, dt, substeps, psi, ws) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { exp_step_avx2(h, noise, dt, substeps, psi, ws) };
        }
    }
    exp_step_body(h, noise, dt, substeps, psi, ws)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn exp_step_avx512(
    h: &Csr,
    noise: &NoiseStep,
    dt: f64,
    substeps: [usize; BATCH],
    psi: &mut BatchState,
    ws: &mut Workspace,
) -> Result<()> {
    exp_step_body(h, noise, dt, substeps, psi, ws)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn exp_step_avx2(
    h: &Csr,
    noise: &NoiseStep,
    dt: f64,
    substeps: [usize; BATCH],
    psi: &mut BatchState,
    ws: &mut Workspace,
) -> Result<()> {
    exp_step_body(h, noise, dt, substeps, psi, ws)
}

#[inline(always)]
fn lanes(v: &[f64], r: usize) -> &[f64; BATCH] {
    v[r * BATCH..(r + 1) * BATCH].try_into().expect("batch-sized chunk")
}

#[inline(always)]
fn lanes_mut(v: &mut [f64], r: usize) -> &mut [f64; BATCH] {
    (&mut v[r * BATCH..(r + 1) * BATCH]).try_into().expect("batch-sized chunk")
}

/// `y = H x` including the per-column noise term.
#[inline(always)]
fn apply(h: &Csr, noise: &NoiseStep, x_re: &[f64], x_im: &[f64], y_re: &mut [f64], y_im: &mut [f64]) {
    for r in 0..h.dim {
        let mut acc_re = [0.0; BATCH];
        let mut acc_im = [0.0; BATCH];
        for e in h.row_ptr[r]..h.row_ptr[r + 1] {
            let (hr, hi) = (h.re[e], h.im[e]);
            let xr = lanes(x_re, h.col[e]);
            let xi = lanes(x_im, h.col[e]);
            for k in 0..BATCH {
                acc_re[k] += hr * xr[k] - hi * xi[k];
                acc_im[k] += hr * xi[k] + hi * xr[k];
            }
        }
        *lanes_mut(y_re, r) = acc_re;
        *lanes_mut(y_im, r) = acc_im;
    }
    if noise.is_zero() {
        return;
    }
    let n = noise.block;
    let [nx, ny, nz] = noise.axis;
    let a = &noise.half_xi;
    for r in 0..n {
        let (ur, ui) = (*lanes(x_re, r), *lanes(x_im, r));
        let (dr, di) = (*lanes(x_re, r + n), *lanes(x_im, r + n));
        {
            let yr = lanes_mut(y_re, r);
            for k in 0..BATCH {
                yr[k] += a[k] * (nz * ur[k] + nx * dr[k] + ny * di[k]);
            }
        }
        {
            let yi = lanes_mut(y_im, r);
            for k in 0..BATCH {
                yi[k] += a[k] * (nz * ui[k] + nx * di[k] - ny * dr[k]);
            }
        }
        {
            let yr = lanes_mut(y_re, r + n);
            for k in 0..BATCH {
                yr[k] += a[k] * (nx * ur[k] - ny * ui[k] - nz * dr[k]);
            }
        }
        {
            let yi = lanes_mut(y_im, r + n);
            for k in 0..BATCH {
                yi[k] += a[k] * (nx * ui[k] + ny * ur[k] - nz * di[k]);
            }
        }
    }
}

#[inline(always)]
fn exp_step_body(
    h: &Csr,
    noise: &NoiseStep,
    dt: f64,
    substeps: [usize; BATCH],
    psi: &mut BatchState,
    ws: &mut Workspace,
) -> Result<()> {
    let hs = substeps.map(|s| dt / s as f64);
    let dim = h.dim;
    let rounds = substeps.iter().copied().max().unwrap_or(1);
    for round in 0..rounds {
        ws.term_re.copy_from_slice(&psi.re);
        ws.term_im.copy_from_slice(&psi.im);
        let mut active = substeps.map(|s| round < s);
        let mut converged = false;
        for m in 1..=MAX_TERMS {
            apply(h, noise, &ws.term_re, &ws.term_im, &mut ws.y_re, &mut ws.y_im);
            let f = hs.map(|h| h / m as f64);
            let mut sq = [0.0; BATCH];
            for r in 0..dim {
                let yr = *lanes(&ws.y_re, r);
                let yi = *lanes(&ws.y_im, r);
                let tr = lanes_mut(&mut ws.term_re, r);
                let ti = lanes_mut(&mut ws.term_im, r);
                // term <- -i f y
                for k in 0..BATCH {
                    tr[k] = f[k] * yi[k];
                    ti[k] = -(f[k] * yr[k]);
                    sq[k] += tr[k] * tr[k] + ti[k] * ti[k];
                }
                let (tr, ti) = (*tr, *ti);
                let pr = lanes_mut(&mut psi.re, r);
                for k in 0..BATCH {
                    pr[k] = if active[k] { pr[k] + tr[k] } else { pr[k] };
                }
                let pi = lanes_mut(&mut psi.im, r);
                for k in 0..BATCH {
                    pi[k] = if active[k] { pi[k] + ti[k] } else { pi[k] };
                }
            }
            for k in 0..BATCH {
                if sq[k] < TERM_TOL_SQ {
                    active[k] = false;
                }
            }
            if active.iter().all(|a| !a) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numerical(format!(
                "Taylor series did not converge in {MAX_TERMS} terms (||H|| dt = {:.3e})",
                h.norm_bound() * dt
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{Operator, ONE, ZERO};
    use nalgebra::DMatrix;

    pub(crate) fn csr_from_operator(op: &Operator) -> Csr {
        let d = op.dim();
        let mut entries = Vec::new();
        for r in 0..d {
            for c in 0..d {
                if op.get(r, c) != ZERO {
                    entries.push((r, c));
                }
            }
        }
        let (mut csr, slots) = Csr::from_pattern(d, &entries);
        for (&(r, c), &s) in entries.iter().zip(&slots) {
            csr.add(s, op.get(r, c));
        }
        csr
    }

    #[test]
    fn pattern_slots_roundtrip() {
        let entries = [(2, 1), (0, 0), (2, 0), (0, 0), (1, 2)];
        let (csr, slots) = Csr::from_pattern(3, &entries);
        assert_eq!(csr.nnz(), 4);
        assert_eq!(csr.row_ptr, vec![0, 1, 2, 4]);
        for (&(r, c), &s) in entries.iter().zip(&slots) {
            assert!(csr.row_ptr[r] <= s && s < csr.row_ptr[r + 1]);
            assert_eq!(csr.col[s], c);
        }
    }

    #[test]
    fn step_matches_dense_exponential() {
        let h = Operator::from_matrix(DMatrix::from_fn(6, 6, |r, c| {
            let v = C64::new(((r * 7 + c * 3) % 5) as f64 - 2.0, (r as f64 - c as f64) * 0.3);
            if r == c {
                C64::new(v.re, 0.0)
            } else {
                v
            }
        }))
        .unwrap();
        let h = &h + &h.adjoint();
        let csr = csr_from_operator(&h);
        let dt = 0.37;
        let u = h.exp_i_hermitian(-dt).unwrap();
        let mut batch = BatchState::zeros(6);
        let psi = State::from_vec(vec![ONE, C64::new(0.0, 1.0), ZERO, ONE, ZERO, C64::new(0.5, -0.5)])
            .unwrap()
            .normalized()
            .unwrap();
        batch.set_column(3, &psi);
        let mut ws = Workspace::new(6);
        exp_step(&csr, &NoiseStep::none(3), dt, &mut batch, &mut ws).unwrap();
        let want = u.apply(&psi).unwrap();
        for (g, w) in batch.column(3).iter().zip(want.as_slice()) {
            assert!((g - w).norm() < 1e-13);
        }
        assert!(batch.column(0).iter().all(|z| *z == ZERO));
    }

    #[test]
    fn noise_term_matches_dense_operator() {
        use crate::hilbert::{joint, pauli};
        let n = 3;
        let axis = [0.3, -0.8, 0.52];
        let xi = 1.7;
        let spin = &(&pauli::x().scale_re(axis[0]) + &pauli::y().scale_re(axis[1])) + &pauli::z().scale_re(axis[2]);
        let dense = joint(&spin.scale_re(xi / 2.0), &Operator::identity(n)).unwrap();
        let mut noise = NoiseStep::none(n);
        noise.axis = axis;
        noise.half_xi[5] = xi / 2.0;
        let empty = Csr::from_pattern(2 * n, &[]).0;
        let dt = 0.9;
        let psi = State::from_vec((0..6).map(|i| C64::new(i as f64, 1.0 - i as f64)).collect())
            .unwrap()
            .normalized()
            .unwrap();
        let mut batch = BatchState::zeros(6);
        batch.set_column(5, &psi);
        batch.set_column(2, &psi);
        exp_step(&empty, &noise, dt, &mut batch, &mut Workspace::new(6)).unwrap();
        let want = dense.exp_i_hermitian(-dt).unwrap().apply(&psi).unwrap();
        for (g, w) in batch.column(5).iter().zip(want.as_slice()) {
            assert!((g - w).norm() < 1e-13);
        }
        // column 2 saw no noise
        for (g, w) in batch.column(2).iter().zip(psi.as_slice()) {
            assert_eq!(g, w);
        }
    }

    #[test]
    fn columns_are_independent_of_neighbours() {
        let h = Operator::from_matrix(DMatrix::from_fn(4, 4, |r, c| C64::new((r + c) as f64, 0.0))).unwrap();
        let csr = csr_from_operator(&h);
        let psi = State::basis(4, 1).unwrap();
        let other = State::basis(4, 3).unwrap();
        let mut alone = BatchState::zeros(4);
        alone.set_column(0, &psi);
        let mut mixed = BatchState::zeros(4);
        for k in 0..BATCH {
            mixed.set_column(k, &other);
        }
        mixed.set_column(0, &psi);
        let mut noise = NoiseStep::none(2);
        noise.axis = [0.0, 0.0, 1.0];
        for k in 1..BATCH {
            noise.half_xi[k] = 40.0 * k as f64;
        }
        let mut ws = Workspace::new(4);
        for _ in 0..50 {
            exp_step(&csr, &noise, 0.05, &mut mixed, &mut ws).unwrap();
            exp_step(&csr, &NoiseStep::none(2), 0.05, &mut alone, &mut ws).unwrap();
        }
        assert_eq!(alone.column(0), mixed.column(0));
    }

    #[test]
    fn renormalize_reports_drift() {
        let mut b = BatchState::zeros(2);
        b.set_column(1, &State::from_vec(vec![C64::new(1.5, 0.0), ZERO]).unwrap());
        let drift = b.renormalize();
        assert!((drift[1] - 0.5).abs() < 1e-15);
        assert_eq!(drift[0], 0.0);
        assert!((b.norms_sq()[1] - 1.0).abs() < 1e-15);
    }
}
