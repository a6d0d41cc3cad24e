//! Dense operator algebra on the joint space of one qubit and one truncated
//! bosonic mode.
//!
//! Conventions used throughout the crate:
//!
//! * the qubit factor is leftmost in every tensor product, so the joint basis
//!   index of `|s, n>` is `s * n_trunc + n`;
//! * the qubit basis is ordered `|up>, |down>` with `sigma_z |up> = +|up>`;
//! * the Fock space is hard-truncated, `a_dag |n_trunc - 1> = 0`.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Truncated Fock space holding levels `0..n_trunc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockSpace {
    n_trunc: usize,
}

impl FockSpace {
    pub fn new(n_trunc: usize) -> Result<Self> {
        if n_trunc < 2 {
            return Err(Error::dim(format!("n_trunc must be at least 2, got {n_trunc}")));
        }
        Ok(Self { n_trunc })
    }

    pub fn n_trunc(&self) -> usize {
        self.n_trunc
    }

    /// Dimension of the joint qubit-boson space.
    pub fn joint_dim(&self) -> usize {
        2 * self.n_trunc
    }

    /// Joint basis index of `|spin, n>`.
    pub fn index(&self, spin: Spin, n: usize) -> usize {
        debug_assert!(n < self.n_trunc);
        spin.index() * self.n_trunc + n
    }
}

/// Computational basis label of the qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: DMatrix<C64>,
}

impl Operator {
    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::dim(format!(
                "operator must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { matrix: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim, dim) }
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        Self { matrix: DMatrix::from_diagonal(&DVector::from_column_slice(diag)) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint() }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self { matrix: &self.matrix * factor }
    }

    pub fn scale_re(&self, factor: f64) -> Self {
        self.scale(C64::new(factor, 0.0))
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    /// Induced 1-norm (largest column sum of moduli).
    pub fn norm_one(&self) -> f64 {
        self.matrix
            .column_iter()
            .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max |H - H^dagger|` relative to `max |H|`; zero for the zero operator.
    pub fn hermiticity_defect(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let diff = &self.matrix - self.matrix.adjoint();
        diff.iter().fold(0.0_f64, |m, z| m.max(z.norm())) / scale
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.hermiticity_defect() <= rel_tol
    }

    pub fn apply(&self, state: &State) -> Result<State> {
        check_dims(self.dim(), state.dim())?;
        Ok(State { amplitudes: &self.matrix * &state.amplitudes })
    }

    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        check_dims(self.dim(), other.dim())?;
        Ok(Operator { matrix: &self.matrix * &other.matrix - &other.matrix * &self.matrix })
    }

    /// Eigendecomposition of a Hermitian operator, eigenvalues ascending.
    pub fn eigh(&self) -> Result<Eigh> {
        if !self.is_hermitian(1e-10) {
            return Err(Error::Numerical(format!(
                "eigh called on non-Hermitian operator (defect {:e})",
                self.hermiticity_defect()
            )));
        }
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("eigensolver produced non-finite eigenvalues".into()));
        }
        let vectors = DMatrix::from_fn(self.dim(), self.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Eigh { values, vectors })
    }

    /// `exp(i * theta * H)` for Hermitian `H`, through its eigendecomposition.
    pub fn exp_i_hermitian(&self, theta: f64) -> Result<Operator> {
        Ok(self.eigh()?.exp_i(theta))
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator { matrix: &self.matrix + &rhs.matrix }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator { matrix: &self.matrix - &rhs.matrix }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator { matrix: &self.matrix * &rhs.matrix }
    }
}

/// Spectral decomposition `H = V diag(values) V^dagger`.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl Eigh {
    /// `V diag(exp(i theta lambda)) V^dagger`.
    pub fn exp_i(&self, theta: f64) -> Operator {
        let phases: Vec<C64> = self.values.iter().map(|&l| C64::from_polar(1.0, theta * l)).collect();
        let mut scaled = self.vectors.clone();
        for (c, p) in phases.iter().enumerate() {
            for r in 0..scaled.nrows() {
                scaled[(r, c)] *= p;
            }
        }
        Operator { matrix: scaled * self.vectors.adjoint() }
    }

    pub fn vector(&self, k: usize) -> State {
        State { amplitudes: self.vectors.column(k).into_owned() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    amplitudes: DVector<C64>,
}

impl State {
    pub fn from_vec(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::dim("state must be nonempty"));
        }
        Ok(Self { amplitudes: DVector::from_vec(amplitudes) })
    }

    pub fn from_vector(amplitudes: DVector<C64>) -> Self {
        Self { amplitudes }
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::dim(format!("basis index {index} outside dimension {dim}")));
        }
        let mut v = DVector::zeros(dim);
        v[index] = ONE;
        Ok(Self { amplitudes: v })
    }

    /// Product state `qubit ⊗ |n>`.
    pub fn product(space: FockSpace, qubit: [C64; 2], n: usize) -> Result<Self> {
        if n >= space.n_trunc() {
            return Err(Error::dim(format!("Fock level {n} outside truncation {}", space.n_trunc())));
        }
        let mut v = DVector::zeros(space.joint_dim());
        v[space.index(Spin::Up, n)] = qubit[0];
        v[space.index(Spin::Down, n)] = qubit[1];
        Ok(Self { amplitudes: v })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn as_slice(&self) -> &[C64] {
        self.amplitudes.as_slice()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Numerical("cannot normalize a zero or non-finite state".into()));
        }
        self.amplitudes.unscale_mut(n);
        Ok(self)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &State) -> Result<C64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn scale(&self, factor: C64) -> State {
        State { amplitudes: &self.amplitudes * factor }
    }

    pub fn sub(&self, other: &State) -> Result<State> {
        check_dims(self.dim(), other.dim())?;
        Ok(State { amplitudes: &self.amplitudes - &other.amplitudes })
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::dim(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Ladder and number operators of a truncated mode.
#[derive(Debug, Clone)]
pub struct BosonOperators {
    pub a: Operator,
    pub a_dag: Operator,
    pub number: Operator,
}

pub fn boson_operators(space: FockSpace) -> BosonOperators {
    let n = space.n_trunc();
    let mut a = DMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    let a = Operator { matrix: a };
    let a_dag = a.adjoint();
    let number = &a_dag * &a;
    BosonOperators { a, a_dag, number }
}

pub mod pauli {
    use super::*;

    fn op2(m: [[C64; 2]; 2]) -> Operator {
        Operator { matrix: DMatrix::from_fn(2, 2, |r, c| m[r][c]) }
    }

    pub fn identity() -> Operator {
        Operator::identity(2)
    }

    pub fn x() -> Operator {
        op2([[ZERO, ONE], [ONE, ZERO]])
    }

    pub fn y() -> Operator {
        op2([[ZERO, -I], [I, ZERO]])
    }

    pub fn z() -> Operator {
        op2([[ONE, ZERO], [ZERO, -ONE]])
    }

    /// Raising operator `|up><down|`.
    pub fn plus() -> Operator {
        op2([[ZERO, ONE], [ZERO, ZERO]])
    }

    pub fn minus() -> Operator {
        op2([[ZERO, ZERO], [ONE, ZERO]])
    }
}

/// Tensor product `qubit_op ⊗ boson_op`.
pub fn joint(qubit_op: &Operator, boson_op: &Operator) -> Result<Operator> {
    if qubit_op.dim() != 2 {
        return Err(Error::dim(format!("qubit operator must be 2x2, got {}", qubit_op.dim())));
    }
    if boson_op.dim() < 2 {
        return Err(Error::dim("boson operator must have n_trunc >= 2"));
    }
    Ok(Operator { matrix: qubit_op.matrix.kronecker(&boson_op.matrix) })
}

/// `<psi|O|psi>`.
pub fn expectation(state: &State, op: &Operator) -> Result<C64> {
    check_dims(state.dim(), op.dim())?;
    Ok(state.amplitudes.dotc(&(&op.matrix * &state.amplitudes)))
}
