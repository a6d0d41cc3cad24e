//! Time-dependent Hamiltonians in the form the kernel consumes.
//!
//! Every level is written as `sum_k c_k(t) O_k` with constant sparse `O_k`
//! and `c_k(t) = sum_l A_l e^{i w_l t}`, sharing one sparsity pattern. The
//! dephasing term `(xi/2) n(t).sigma (x) I` is kept apart because its
//! strength differs between trajectories.

use crate::evolve::kernel::Csr;
use crate::hilbert::{boson_operators, joint, pauli, FockSpace, Operator, C64};
use crate::models::{displacement_exponential, h_2pqrm, IonConfig, Scheme, SchemeConfig, TwoPhotonRabiParams};

/// Displacement matrix elements below this magnitude are dropped.
const DROP_TOL: f64 = 1e-15;

pub trait HamiltonianSource: Sync {
    fn space(&self) -> FockSpace;

    /// Matrix with the sparsity pattern of `H(t)` for every `t`.
    fn template(&self) -> Csr;

    /// Overwrites the values of `h` (from [`HamiltonianSource::template`])
    /// with the noise-free `H(t)`.
    fn fill(&self, t: f64, h: &mut Csr);

    /// The unit spin vector `n(t)` the dephasing couples to.
    fn noise_axis(&self, t: f64) -> [f64; 3];

    /// Fastest drive frequency of this level (Hz), used by the step rule.
    fn max_frequency(&self) -> f64;
}

/// How the qubit dephasing appears in the source's frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseAxis {
    None,
    Z,
    /// `s_z` seen from the frame rotating with `(Omega_DD/2) s_x`:
    /// `cos(Omega_DD t) s_z + sin(Omega_DD t) s_y`.
    Dressed { omega_dd: f64 },
}

impl NoiseAxis {
    pub fn at(self, t: f64) -> [f64; 3] {
        match self {
            NoiseAxis::None => [0.0; 3],
            NoiseAxis::Z => [0.0, 0.0, 1.0],
            NoiseAxis::Dressed { omega_dd } => {
                let (s, c) = (omega_dd * t).sin_cos();
                [0.0, s, c]
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Term {
    slots: Vec<usize>,
    values: Vec<C64>,
    phasors: Vec<(C64, f64)>,
}

/// A sum of phasor-weighted constant operators.
#[derive(Debug, Clone)]
pub struct TermSource {
    space: FockSpace,
    template: Csr,
    terms: Vec<Term>,
    noise: NoiseAxis,
    f_max: f64,
}

struct Builder {
    entries: Vec<(usize, usize)>,
    pending: Vec<(Vec<(usize, usize)>, Vec<C64>, Vec<(C64, f64)>)>,
}

impl Builder {
    fn new() -> Self {
        Self { entries: Vec::new(), pending: Vec::new() }
    }

    fn add(&mut self, op: &Operator, phasors: Vec<(C64, f64)>, drop: f64) {
        let d = op.dim();
        let mut pos = Vec::new();
        let mut vals = Vec::new();
        for r in 0..d {
            for c in 0..d {
                let v = op.get(r, c);
                if v.norm() > drop {
                    pos.push((r, c));
                    vals.push(v);
                }
            }
        }
        if pos.is_empty() {
            return;
        }
        self.entries.extend_from_slice(&pos);
        self.pending.push((pos, vals, phasors));
    }

    /// Adds `c(t) O + conj(c(t)) O^dag`.
    fn add_hermitian(&mut self, op: &Operator, phasors: Vec<(C64, f64)>, drop: f64) {
        let conj = phasors.iter().map(|&(a, w)| (a.conj(), -w)).collect();
        self.add(op, phasors, drop);
        self.add(&op.adjoint(), conj, drop);
    }

    fn finish(self, space: FockSpace, noise: NoiseAxis, f_max: f64) -> TermSource {
        let (template, slots) = Csr::from_pattern(space.joint_dim(), &self.entries);
        let mut offset = 0;
        let terms = self
            .pending
            .into_iter()
            .map(|(pos, values, phasors)| {
                let term = Term { slots: slots[offset..offset + pos.len()].to_vec(), values, phasors };
                offset += pos.len();
                term
            })
            .collect();
        TermSource { space, template, terms, noise, f_max }
    }
}

impl TermSource {
    /// A time-independent Hamiltonian.
    pub fn constant(op: &Operator, space: FockSpace) -> Self {
        let mut b = Builder::new();
        b.add(op, vec![(C64::new(1.0, 0.0), 0.0)], 0.0);
        b.finish(space, NoiseAxis::None, 0.0)
    }

    /// The ideal model, no dephasing.
    pub fn two_photon_rabi(params: &TwoPhotonRabiParams, space: FockSpace) -> Self {
        Self::constant(&h_2pqrm(params, space), space)
    }

    /// The effective interaction-level Hamiltonian of either scheme, with
    /// dephasing mapped into its frame.
    pub fn interaction(scheme: &SchemeConfig, space: FockSpace) -> Self {
        let ops = boson_operators(space);
        let a2 = &ops.a * &ops.a;
        let ad2 = a2.adjoint();
        let eta2 = scheme.lamb_dicke * scheme.lamb_dicke;
        let id = Operator::identity(space.n_trunc());
        let mut b = Builder::new();
        let noise = match scheme.scheme {
            Scheme::Unprotected => {
                let amp = -0.25 * scheme.sideband_rabi * eta2;
                let red = joint(&pauli::plus(), &a2).expect("2x2 qubit factor");
                let blue = joint(&pauli::plus(), &ad2).expect("2x2 qubit factor");
                b.add_hermitian(&red, vec![(C64::from_polar(amp, -scheme.phase_r), scheme.delta_r)], 0.0);
                b.add_hermitian(&blue, vec![(C64::from_polar(amp, -scheme.phase_b), scheme.delta_b)], 0.0);
                NoiseAxis::Z
            }
            Scheme::Protected => {
                let params = scheme.simulated_params();
                let g = eta2 * scheme.sideband_rabi / 8.0;
                let qubit = joint(&pauli::x(), &id).expect("2x2 qubit factor");
                let coupling = joint(&pauli::z(), &a2).expect("2x2 qubit factor");
                b.add(&qubit, vec![(C64::new(0.5 * params.omega_qubit, 0.0), 0.0)], 0.0);
                b.add_hermitian(&coupling, vec![(C64::new(g, 0.0), -2.0 * params.omega_boson)], 0.0);
                NoiseAxis::Dressed { omega_dd: scheme.omega_dd }
            }
        };
        b.finish(space, noise, scheme.max_frequency())
    }

    /// The ion Hamiltonian with the full displacement exponentials, split by
    /// diagonal of `E_j(t)` so each piece carries one phasor per laser.
    /// Lasers with equal Lamb-Dicke parameters share their pieces.
    pub fn ion(ion: &IonConfig, space: FockSpace) -> Self {
        let n = space.n_trunc();
        let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
        for (j, laser) in ion.lasers.iter().enumerate() {
            match groups.iter_mut().find(|(eta, _)| *eta == laser.lamb_dicke) {
                Some((_, members)) => members.push(j),
                None => groups.push((laser.lamb_dicke, vec![j])),
            }
        }
        let mut b = Builder::new();
        for (eta, members) in &groups {
            let d = displacement_exponential(*eta, 0.0, space);
            for offset in -(n as isize - 1)..n as isize {
                let mut any = false;
                let mut matrix = Operator::zeros(n).into_matrix();
                for m in 0..n {
                    let k = m as isize - offset;
                    if (0..n as isize).contains(&k) {
                        let v = d.get(m, k as usize);
                        if v.norm() > DROP_TOL {
                            matrix[(m, k as usize)] = v;
                            any = true;
                        }
                    }
                }
                if !any {
                    continue;
                }
                let diag = Operator::from_matrix(matrix).expect("square");
                let phasors = members
                    .iter()
                    .map(|&j| {
                        let l = &ion.lasers[j];
                        let w = l.detuning_from_qubit() + ion.trap_freq * offset as f64;
                        (C64::from_polar(0.5 * l.rabi, -l.phase), w)
                    })
                    .collect();
                let op = joint(&pauli::plus(), &diag).expect("2x2 qubit factor");
                b.add_hermitian(&op, phasors, 0.0);
            }
        }
        b.finish(space, NoiseAxis::Z, ion.max_frequency())
    }

    /// Same operator content with the dephasing switched off or on.
    pub fn with_noise_axis(mut self, noise: NoiseAxis) -> Self {
        self.noise = noise;
        self
    }

    pub fn operator_at(&self, t: f64) -> Operator {
        let mut h = self.template();
        self.fill(t, &mut h);
        let d = h.dim;
        let mut m = Operator::zeros(d).into_matrix();
        for r in 0..d {
            for e in h.row_ptr[r]..h.row_ptr[r + 1] {
                m[(r, h.col[e])] = C64::new(h.re[e], h.im[e]);
            }
        }
        Operator::from_matrix(m).expect("square")
    }
}

impl HamiltonianSource for TermSource {
    fn space(&self) -> FockSpace {
        self.space
    }

    fn template(&self) -> Csr {
        self.template.clone()
    }

    fn fill(&self, t: f64, h: &mut Csr) {
        h.clear();
        for term in &self.terms {
            let c: C64 = term
                .phasors
                .iter()
                .map(|&(a, w)| if w == 0.0 { a } else { a * C64::from_polar(1.0, w * t) })
                .sum();
            for (&s, &v) in term.slots.iter().zip(&term.values) {
                h.add(s, c * v);
            }
        }
    }

    fn noise_axis(&self, t: f64) -> [f64; 3] {
        self.noise.at(t)
    }

    fn max_frequency(&self) -> f64 {
        self.f_max
    }
}
