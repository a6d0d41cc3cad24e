//! Hamiltonians at every level of the construction and the maps between
//! trapped-ion laser settings and the simulated two-photon Rabi parameters.
//!
//! Levels, from the ideal model down to the ion:
//!
//! * [`h_2pqrm`]: `(W/2) s_par + w0 a^dag a + g (a^2 + a^dag^2) s_perp`;
//! * [`h_two_photon_interaction`]: the effective interaction-picture
//!   Hamiltonian the lasers produce after the Lamb-Dicke and vibrational
//!   rotating-wave approximations (and, for the protected scheme, the
//!   additional rotating-wave approximation in the dressed frame);
//! * [`h_ion_full`]: the ion in the interaction picture of
//!   `w_I/2 s_z + nu a^dag a`, with the full displacement exponential.
//!
//! Laser frequencies are stored as offsets from the qubit transition, so that
//! `w_I - w_j` never has to be formed from two numbers of order 1e15.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{boson_operators, joint, pauli, FockSpace, Operator, C64, ONE, ZERO};
use crate::noise::OUParams;

/// Largest sideband Rabi frequency the solver will pick on its own (rad/s).
pub const MAX_SIDEBAND_RABI: f64 = 2.0 * PI * 100e3;

/// Which Pauli operators play the roles of `s_par` and `s_perp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpinBasis {
    /// `s_par = s_z`, `s_perp = s_x`.
    U,
    /// `s_par = s_x`, `s_perp = s_z`.
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinAxis {
    Parallel,
    Perpendicular,
}

impl SpinBasis {
    pub fn parallel(self) -> Operator {
        match self {
            SpinBasis::U => pauli::z(),
            SpinBasis::P => pauli::x(),
        }
    }

    pub fn perpendicular(self) -> Operator {
        match self {
            SpinBasis::U => pauli::x(),
            SpinBasis::P => pauli::z(),
        }
    }

    /// The Pauli operator completing `(s_par, s_perp)` to a right-handed
    /// triple, `-i s_par s_perp`: `s_y` for U and `-s_y` for P.
    pub fn third(self) -> Operator {
        match self {
            SpinBasis::U => pauli::y(),
            SpinBasis::P => pauli::y().scale_re(-1.0),
        }
    }

    pub fn axis(self, axis: SpinAxis) -> Operator {
        match axis {
            SpinAxis::Parallel => self.parallel(),
            SpinAxis::Perpendicular => self.perpendicular(),
        }
    }

    /// Qubit amplitudes `(up, down)` of the eigenstate of `axis` with
    /// eigenvalue `+1` (`up = true`) or `-1`.
    pub fn eigenstate(self, axis: SpinAxis, up: bool) -> [C64; 2] {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let along_z = matches!(
            (self, axis),
            (SpinBasis::U, SpinAxis::Parallel) | (SpinBasis::P, SpinAxis::Perpendicular)
        );
        match (along_z, up) {
            (true, true) => [ONE, ZERO],
            (true, false) => [ZERO, ONE],
            (false, true) => [h, h],
            (false, false) => [h, -h],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPhotonRabiParams {
    /// Qubit splitting (rad/s).
    pub omega_qubit: f64,
    /// Boson frequency (rad/s).
    pub omega_boson: f64,
    /// Two-photon coupling (rad/s).
    pub coupling: f64,
    pub spin_basis: SpinBasis,
}

impl TwoPhotonRabiParams {
    pub fn new(omega_qubit: f64, omega_boson: f64, coupling: f64, spin_basis: SpinBasis) -> Result<Self> {
        if !(coupling >= 0.0) {
            return Err(Error::arg(format!("coupling must be nonnegative, got {coupling}")));
        }
        if !(omega_boson.is_finite() && omega_qubit.is_finite()) {
            return Err(Error::arg("frequencies must be finite"));
        }
        Ok(Self { omega_qubit, omega_boson, coupling, spin_basis })
    }

    /// Parameters from the dimensionless ratios `g/w0` and `W/w0`.
    pub fn from_ratios(coupling: f64, g_over_w0: f64, w_over_w0: f64, spin_basis: SpinBasis) -> Result<Self> {
        if !(g_over_w0 > 0.0) {
            return Err(Error::arg("g/w0 must be positive"));
        }
        let w0 = coupling / g_over_w0;
        Self::new(w_over_w0 * w0, w0, coupling, spin_basis)
    }

    pub fn with_basis(self, spin_basis: SpinBasis) -> Self {
        Self { spin_basis, ..self }
    }
}

/// `(W/2) s_par + w0 a^dag a + g (a^2 + a^dag^2) s_perp`.
pub fn h_2pqrm(params: &TwoPhotonRabiParams, space: FockSpace) -> Operator {
    let ops = boson_operators(space);
    let id_b = Operator::identity(space.n_trunc());
    let a2 = &ops.a * &ops.a;
    let squeeze = &a2 + &a2.adjoint();
    let qubit = joint(&params.spin_basis.parallel(), &id_b).expect("2x2 qubit factor");
    let boson = joint(&pauli::identity(), &ops.number).expect("2x2 qubit factor");
    let coupling = joint(&params.spin_basis.perpendicular(), &squeeze).expect("2x2 qubit factor");
    &(&qubit.scale_re(0.5 * params.omega_qubit) + &boson.scale_re(params.omega_boson))
        + &coupling.scale_re(params.coupling)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveKind {
    Carrier,
    Red2,
    Blue2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserDrive {
    /// Rabi frequency (rad/s).
    pub rabi: f64,
    pub lamb_dicke: f64,
    /// `w_j - w_I` (rad/s); the absolute frequency is
    /// [`LaserDrive::frequency`].
    pub offset: f64,
    /// Initial phase (rad).
    pub phase: f64,
    pub kind: DriveKind,
}

impl LaserDrive {
    pub fn frequency(&self, omega_qubit_splitting: f64) -> f64 {
        omega_qubit_splitting + self.offset
    }

    /// `w_I - w_j`.
    pub fn detuning_from_qubit(&self) -> f64 {
        -self.offset
    }

    fn validate(&self) -> Result<()> {
        if !(self.rabi >= 0.0) {
            return Err(Error::config(format!("laser Rabi frequency must be nonnegative, got {}", self.rabi)));
        }
        if !(0.0..1.0).contains(&self.lamb_dicke) {
            return Err(Error::config(format!("Lamb-Dicke parameter must lie in [0, 1), got {}", self.lamb_dicke)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonConfig {
    /// Qubit transition frequency `w_I` (rad/s).
    pub omega_qubit_splitting: f64,
    /// Trap frequency `nu` (rad/s).
    pub trap_freq: f64,
    pub lasers: Vec<LaserDrive>,
    pub noise: Option<OUParams>,
}

impl IonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.trap_freq > 0.0) {
            return Err(Error::config("trap frequency must be positive"));
        }
        self.lasers.iter().try_for_each(LaserDrive::validate)
    }

    /// Violations of the vibrational rotating-wave conditions
    /// `Omega_j << nu` and `|delta| << nu`, taken as a factor-of-ten margin.
    pub fn warnings(&self) -> Vec<String> {
        let nu = self.trap_freq;
        let mut out = Vec::new();
        for (j, laser) in self.lasers.iter().enumerate() {
            if laser.rabi > 0.1 * nu {
                out.push(format!("laser {j}: Omega = {:.4e} rad/s is not << nu = {:.4e} rad/s", laser.rabi, nu));
            }
            let delta = match laser.kind {
                DriveKind::Carrier => laser.offset,
                DriveKind::Red2 => -laser.offset - 2.0 * nu,
                DriveKind::Blue2 => 2.0 * nu - laser.offset,
            };
            if delta.abs() > 0.1 * nu {
                out.push(format!("laser {j}: |delta| = {:.4e} rad/s is not << nu = {:.4e} rad/s", delta.abs(), nu));
            }
        }
        out
    }

    /// Fastest oscillation in the ion Hamiltonian (Hz): the largest laser
    /// detuning from the qubit, and at least the trap frequency.
    pub fn max_frequency(&self) -> f64 {
        if self.lasers.is_empty() {
            return 0.0;
        }
        let detuning = self.lasers.iter().map(|l| l.offset.abs()).fold(0.0, f64::max);
        detuning.max(self.trap_freq) / (2.0 * PI)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Unprotected,
    Protected,
}

impl Scheme {
    pub fn spin_basis(self) -> SpinBasis {
        match self {
            Scheme::Unprotected => SpinBasis::U,
            Scheme::Protected => SpinBasis::P,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Unprotected => "U",
            Scheme::Protected => "P",
        }
    }
}

/// Ion-independent description of one realization: sideband drive,
/// detunings, and (protected only) the decoupling split of the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Sideband Rabi frequency `Omega` (rad/s), shared by both sidebands.
    pub sideband_rabi: f64,
    /// Sideband Lamb-Dicke parameter `eta`.
    pub lamb_dicke: f64,
    pub delta_r: f64,
    pub delta_b: f64,
    pub phase_r: f64,
    pub phase_b: f64,
    /// Decoupling part of the carrier; zero for the unprotected scheme.
    pub omega_dd: f64,
    /// Full carrier Rabi frequency; zero for the unprotected scheme.
    pub omega_carrier: f64,
    pub carrier_lamb_dicke: f64,
    pub target: TwoPhotonRabiParams,
}

impl SchemeConfig {
    /// The simulated parameters implied by the laser settings.
    pub fn simulated_params(&self) -> TwoPhotonRabiParams {
        let eta2 = self.lamb_dicke * self.lamb_dicke;
        let omega_boson = (self.delta_b - self.delta_r) / 4.0;
        match self.scheme {
            Scheme::Unprotected => TwoPhotonRabiParams {
                omega_qubit: (self.delta_b + self.delta_r) / 2.0,
                omega_boson,
                coupling: eta2 * self.sideband_rabi / 4.0,
                spin_basis: SpinBasis::U,
            },
            Scheme::Protected => TwoPhotonRabiParams {
                omega_qubit: self.omega_carrier - self.omega_dd,
                omega_boson,
                coupling: eta2 * self.sideband_rabi / 8.0,
                spin_basis: SpinBasis::P,
            },
        }
    }

    /// Fastest oscillation of the effective Hamiltonian (Hz).
    pub fn max_frequency(&self) -> f64 {
        self.delta_r.abs().max(self.delta_b.abs()).max(self.omega_dd.abs()) / (2.0 * PI)
    }
}

/// Ion constants shared by both schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonBase {
    pub omega_qubit_splitting: f64,
    pub trap_freq: f64,
    pub noise: Option<OUParams>,
}

fn solve_rabi(target: &TwoPhotonRabiParams, rabi: Option<f64>, eta: f64, divisor: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::config(format!("Lamb-Dicke parameter must lie in (0, 1), got {eta}")));
    }
    let needed = divisor * target.coupling / (eta * eta);
    match rabi {
        None if needed > MAX_SIDEBAND_RABI * (1.0 + 1e-12) => Err(Error::config(format!(
            "coupling {:.4e} rad/s needs Omega = {needed:.4e} rad/s above the cap {MAX_SIDEBAND_RABI:.4e} rad/s",
            target.coupling
        ))),
        None => Ok(needed),
        Some(r) if r < 0.0 => Err(Error::config(format!("sideband Rabi frequency must be nonnegative, got {r}"))),
        Some(r) if (r - needed).abs() > 1e-9 * needed.max(r) => Err(Error::config(format!(
            "eta^2 Omega / {divisor} = {:.6e} rad/s does not match the target coupling {:.6e} rad/s",
            eta * eta * r / divisor,
            target.coupling
        ))),
        Some(r) => Ok(r),
    }
}

fn sidebands(base: &IonBase, rabi: f64, eta: f64, delta_r: f64, delta_b: f64) -> Result<[LaserDrive; 2]> {
    let nu = base.trap_freq;
    for (name, d) in [("delta_r", delta_r), ("delta_b", delta_b)] {
        if d.abs() >= nu {
            return Err(Error::config(format!("|{name}| = {:.4e} rad/s must stay below nu = {nu:.4e} rad/s", d.abs())));
        }
    }
    // w_{r,b} = w_I -+ 2 nu - delta_{r,b}
    Ok([
        LaserDrive { rabi, lamb_dicke: eta, offset: -2.0 * nu - delta_r, phase: PI, kind: DriveKind::Red2 },
        LaserDrive { rabi, lamb_dicke: eta, offset: 2.0 * nu - delta_b, phase: PI, kind: DriveKind::Blue2 },
    ])
}

/// Bare realization: two second sidebands with `delta_r = W - 2 w0`,
/// `delta_b = W + 2 w0` and `g = eta^2 Omega / 4`. `Omega` is solved from
/// the target coupling when not given.
pub fn unprotected_config(
    target: &TwoPhotonRabiParams,
    rabi: Option<f64>,
    eta: f64,
    base: &IonBase,
) -> Result<(SchemeConfig, IonConfig)> {
    if target.spin_basis != SpinBasis::U {
        return Err(Error::config("unprotected scheme realizes the model in the U spin basis"));
    }
    let rabi = solve_rabi(target, rabi, eta, 4.0)?;
    let delta_r = target.omega_qubit - 2.0 * target.omega_boson;
    let delta_b = target.omega_qubit + 2.0 * target.omega_boson;
    let lasers = sidebands(base, rabi, eta, delta_r, delta_b)?;
    let scheme = SchemeConfig {
        scheme: Scheme::Unprotected,
        sideband_rabi: rabi,
        lamb_dicke: eta,
        delta_r,
        delta_b,
        phase_r: PI,
        phase_b: PI,
        omega_dd: 0.0,
        omega_carrier: 0.0,
        carrier_lamb_dicke: 0.0,
        target: *target,
    };
    let ion = IonConfig {
        omega_qubit_splitting: base.omega_qubit_splitting,
        trap_freq: base.trap_freq,
        lasers: lasers.to_vec(),
        noise: base.noise,
    };
    ion.validate()?;
    Ok((scheme, ion))
}

/// Protected realization: a carrier `Omega_c = Omega_DD + W` plus sidebands
/// detuned by `delta_{r,b} = Omega_DD -+ 2 w0`, with `g = eta^2 Omega / 8`.
pub fn protected_config(
    target: &TwoPhotonRabiParams,
    rabi: Option<f64>,
    eta: f64,
    omega_dd: f64,
    carrier_eta: f64,
    base: &IonBase,
) -> Result<(SchemeConfig, IonConfig)> {
    if target.spin_basis != SpinBasis::P {
        return Err(Error::config("protected scheme realizes the model in the P spin basis"));
    }
    if let Some(noise) = &base.noise {
        // Omega_DD is angular; decoupling needs Omega_DD / 2pi > f_cr
        if omega_dd <= 2.0 * PI * noise.f_cr() {
            return Err(Error::DecouplingInfeasible { omega_dd, f_cr: noise.f_cr() });
        }
    } else if !(omega_dd > 0.0) {
        return Err(Error::config("Omega_DD must be positive"));
    }
    let rabi = solve_rabi(target, rabi, eta, 8.0)?;
    let delta_r = omega_dd - 2.0 * target.omega_boson;
    let delta_b = omega_dd + 2.0 * target.omega_boson;
    let omega_carrier = omega_dd + target.omega_qubit;
    let [red, blue] = sidebands(base, rabi, eta, delta_r, delta_b)?;
    let carrier = LaserDrive {
        rabi: omega_carrier,
        lamb_dicke: carrier_eta,
        offset: 0.0,
        phase: 0.0,
        kind: DriveKind::Carrier,
    };
    let scheme = SchemeConfig {
        scheme: Scheme::Protected,
        sideband_rabi: rabi,
        lamb_dicke: eta,
        delta_r,
        delta_b,
        phase_r: PI,
        phase_b: PI,
        omega_dd,
        omega_carrier,
        carrier_lamb_dicke: carrier_eta,
        target: *target,
    };
    let ion = IonConfig {
        omega_qubit_splitting: base.omega_qubit_splitting,
        trap_freq: base.trap_freq,
        lasers: vec![carrier, red, blue],
        noise: base.noise,
    };
    ion.validate()?;
    Ok((scheme, ion))
}

/// Effective two-photon Hamiltonian in the frame where the simulated model
/// appears.
///
/// Unprotected: `-(Omega eta^2/4)[s+ a^2 e^{i d_r t - i phi_r} + s+ a^dag^2
/// e^{i d_b t - i phi_b} + h.c.]`. Protected (phases fixed to pi):
/// `(W/2) s_x + (eta^2 Omega/8) s_z [a^2 e^{-2i w0 t} + a^dag^2 e^{2i w0 t}]`.
pub fn h_two_photon_interaction(t: f64, scheme: &SchemeConfig, space: FockSpace) -> Operator {
    let ops = boson_operators(space);
    let a2 = &ops.a * &ops.a;
    let ad2 = a2.adjoint();
    let eta2 = scheme.lamb_dicke * scheme.lamb_dicke;
    match scheme.scheme {
        Scheme::Unprotected => {
            let red = C64::from_polar(1.0, scheme.delta_r * t - scheme.phase_r);
            let blue = C64::from_polar(1.0, scheme.delta_b * t - scheme.phase_b);
            let boson = &a2.scale(red) + &ad2.scale(blue);
            let half = joint(&pauli::plus(), &boson).expect("2x2 qubit factor");
            (&half + &half.adjoint()).scale_re(-0.25 * scheme.sideband_rabi * eta2)
        }
        Scheme::Protected => {
            let params = scheme.simulated_params();
            let rot = C64::from_polar(1.0, -2.0 * params.omega_boson * t);
            let boson = &a2.scale(rot) + &ad2.scale(rot.conj());
            let coupling = joint(&pauli::z(), &boson).expect("2x2 qubit factor");
            let qubit = joint(&pauli::x(), &Operator::identity(space.n_trunc())).expect("2x2 qubit factor");
            &qubit.scale_re(0.5 * params.omega_qubit) + &coupling.scale_re(eta2 * scheme.sideband_rabi / 8.0)
        }
    }
}

/// `exp(i eta (a e^{-i theta} + a^dag e^{i theta}))`, exact matrix exponential
/// of the truncated generator.
pub fn displacement_exponential(eta: f64, phase_nu_t: f64, space: FockSpace) -> Operator {
    let ops = boson_operators(space);
    let rot = C64::from_polar(1.0, -phase_nu_t);
    let generator = &ops.a.scale(rot) + &ops.a_dag.scale(rot.conj());
    generator
        .exp_i_hermitian(eta)
        .expect("displacement generator is Hermitian by construction")
}

/// Ion Hamiltonian after the optical rotating-wave approximation only:
/// `(xi/2) s_z + sum_j (Omega_j/2)[s+ E_j(t) e^{i(w_I - w_j)t - i phi_j} + h.c.]`
/// with `E_j(t) = exp(i eta_j (a e^{-i nu t} + a^dag e^{i nu t}))`.
pub fn h_ion_full(t: f64, ion: &IonConfig, xi: f64, space: FockSpace) -> Operator {
    let id_b = Operator::identity(space.n_trunc());
    let mut h = joint(&pauli::z(), &id_b).expect("2x2 qubit factor").scale_re(0.5 * xi);
    for laser in &ion.lasers {
        let e = displacement_exponential(laser.lamb_dicke, ion.trap_freq * t, space);
        let phase = C64::from_polar(0.5 * laser.rabi, laser.detuning_from_qubit() * t - laser.phase);
        let half = joint(&pauli::plus(), &e.scale(phase)).expect("2x2 qubit factor");
        h = &(&h + &half) + &half.adjoint();
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{Spin, State};

    const TWO_PI: f64 = 2.0 * PI;

    fn space(n: usize) -> FockSpace {
        FockSpace::new(n).unwrap()
    }

    fn paper_base() -> IonBase {
        IonBase {
            omega_qubit_splitting: TWO_PI * 4e14,
            trap_freq: TWO_PI * 2e6,
            noise: Some(OUParams::from_t2(3e-3, 100e-6).unwrap()),
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn free_spectrum_without_coupling() {
        let s = space(12);
        for basis in [SpinBasis::U, SpinBasis::P] {
            let p = TwoPhotonRabiParams::new(1.3, 0.7, 0.0, basis).unwrap();
            let eig = h_2pqrm(&p, s).eigh().unwrap();
            let mut want: Vec<f64> = (0..12)
                .flat_map(|n| [0.65 + 0.7 * n as f64, -0.65 + 0.7 * n as f64])
                .collect();
            want.sort_by(f64::total_cmp);
            for (got, w) in eig.values.iter().zip(&want) {
                assert!((got - w).abs() < 1e-12, "{got} vs {w}");
            }
        }
    }

    #[test]
    fn coupling_matrix_element() {
        let s = space(8);
        let g = 0.37;
        let p = TwoPhotonRabiParams::new(1.0, 1.0, g, SpinBasis::U).unwrap();
        let h = h_2pqrm(&p, s);
        let el = h.get(s.index(Spin::Up, 0), s.index(Spin::Down, 2));
        assert!((el - C64::new(2f64.sqrt() * g, 0.0)).norm() < 1e-14);
        assert_eq!(h.get(s.index(Spin::Up, 0), s.index(Spin::Up, 2)), ZERO);
        // in the P basis the coupling is diagonal in spin
        let hp = h_2pqrm(&p.with_basis(SpinBasis::P), s);
        let el = hp.get(s.index(Spin::Up, 0), s.index(Spin::Up, 2));
        assert!((el - C64::new(2f64.sqrt() * g, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn ground_energy_converges_in_truncation() {
        let p = TwoPhotonRabiParams::new(1.0, 1.0, 0.3, SpinBasis::U).unwrap();
        let e60 = h_2pqrm(&p, space(60)).eigh().unwrap().values[0];
        let e80 = h_2pqrm(&p, space(80)).eigh().unwrap().values[0];
        assert!((e60 - e80).abs() < 1e-8, "{e60} {e80}");
    }

    #[test]
    fn spin_basis_eigenstates() {
        for basis in [SpinBasis::U, SpinBasis::P] {
            for axis in [SpinAxis::Parallel, SpinAxis::Perpendicular] {
                for up in [true, false] {
                    let amps = basis.eigenstate(axis, up);
                    let psi = State::from_vec(amps.to_vec()).unwrap();
                    let e = crate::hilbert::expectation(&psi, &basis.axis(axis)).unwrap();
                    let want = if up { 1.0 } else { -1.0 };
                    assert!((e.re - want).abs() < 1e-15 && e.im.abs() < 1e-15);
                }
            }
            // (par, perp, third) is right-handed: s_par s_perp = i third
            let prod = &basis.parallel() * &basis.perpendicular();
            let want = basis.third().scale(C64::new(0.0, 1.0));
            assert!((&prod - &want).max_abs() < 1e-15);
        }
    }

    #[test]
    fn unprotected_paper_coupling() {
        // eta = 0.06, Omega = 2pi 100 kHz
        let g = 0.06f64.powi(2) * TWO_PI * 100e3 / 4.0;
        assert!(rel(g, TWO_PI * 90.0) < 1e-12);
        let target = TwoPhotonRabiParams::from_ratios(g, 0.1, 3.0, SpinBasis::U).unwrap();
        assert!(rel(target.omega_boson, TWO_PI * 900.0) < 1e-12);
        let (scheme, ion) = unprotected_config(&target, Some(TWO_PI * 100e3), 0.06, &paper_base()).unwrap();
        assert!(rel(scheme.delta_r, TWO_PI * 900.0) < 1e-12);
        assert!(rel(scheme.delta_b, TWO_PI * 4500.0) < 1e-12);
        assert_eq!(ion.lasers.len(), 2);
        let nu = paper_base().trap_freq;
        assert!(rel(ion.lasers[0].detuning_from_qubit(), 2.0 * nu + scheme.delta_r) < 1e-15);
        assert!(rel(ion.lasers[1].detuning_from_qubit(), -2.0 * nu + scheme.delta_b) < 1e-15);
        assert!(ion.warnings().is_empty(), "{:?}", ion.warnings());
    }

    #[test]
    fn unprotected_solves_rabi_and_rejects_bad_inputs() {
        let target = TwoPhotonRabiParams::from_ratios(TWO_PI * 90.0, 0.3, 1.0, SpinBasis::U).unwrap();
        let (scheme, _) = unprotected_config(&target, None, 0.06, &paper_base()).unwrap();
        assert!(rel(scheme.sideband_rabi, TWO_PI * 100e3) < 1e-12);
        assert!(unprotected_config(&target, Some(-1.0), 0.06, &paper_base()).is_err());
        assert!(unprotected_config(&target, Some(TWO_PI * 50e3), 0.06, &paper_base()).is_err());
        // twice the coupling needs Omega above the cap
        let strong = TwoPhotonRabiParams { coupling: 2.0 * target.coupling, ..target };
        assert!(matches!(unprotected_config(&strong, None, 0.06, &paper_base()), Err(Error::Configuration(_))));
        let far = TwoPhotonRabiParams { omega_qubit: 3.0 * paper_base().trap_freq, ..target };
        assert!(unprotected_config(&far, None, 0.06, &paper_base()).is_err());
        assert!(unprotected_config(&target.with_basis(SpinBasis::P), None, 0.06, &paper_base()).is_err());
    }

    #[test]
    fn resonant_sidebands_give_degenerate_model() {
        let s = SchemeConfig {
            scheme: Scheme::Unprotected,
            sideband_rabi: 1.0,
            lamb_dicke: 0.1,
            delta_r: 0.0,
            delta_b: 0.0,
            phase_r: PI,
            phase_b: PI,
            omega_dd: 0.0,
            omega_carrier: 0.0,
            carrier_lamb_dicke: 0.0,
            target: TwoPhotonRabiParams::new(0.0, 0.0, 0.0025, SpinBasis::U).unwrap(),
        };
        let p = s.simulated_params();
        assert_eq!(p.omega_qubit, 0.0);
        assert_eq!(p.omega_boson, 0.0);
    }

    #[test]
    fn protected_paper_values() {
        let omega_dd = TWO_PI * 20e3;
        let g = 0.06f64.powi(2) * TWO_PI * 100e3 / 8.0;
        let target = TwoPhotonRabiParams::from_ratios(g, 0.1, 1.0, SpinBasis::P).unwrap();
        assert!(rel(target.omega_boson, TWO_PI * 450.0) < 1e-12);
        let (scheme, ion) = protected_config(&target, None, 0.06, omega_dd, 0.01, &paper_base()).unwrap();
        assert!(rel(scheme.delta_r, TWO_PI * 19.1e3) < 1e-12);
        assert!(rel(scheme.delta_b, TWO_PI * 20.9e3) < 1e-12);
        assert!(rel(scheme.omega_carrier, TWO_PI * 20.45e3) < 1e-12);
        assert_eq!(ion.lasers[0].kind, DriveKind::Carrier);
        assert_eq!(ion.lasers[0].offset, 0.0);
        assert_eq!(ion.lasers[0].phase, 0.0);
        assert!(ion.lasers[1..].iter().all(|l| l.phase == PI));
    }

    #[test]
    fn protected_requires_decoupling_gap() {
        let target = TwoPhotonRabiParams::from_ratios(TWO_PI * 45.0, 0.1, 1.0, SpinBasis::P).unwrap();
        let f_cr = paper_base().noise.unwrap().f_cr();
        let res = protected_config(&target, None, 0.06, 0.9 * TWO_PI * f_cr, 0.01, &paper_base());
        assert!(matches!(res, Err(Error::DecouplingInfeasible { .. })));
    }

    #[test]
    fn coupling_halving_between_schemes() {
        let (eta, omega) = (0.06, TWO_PI * 100e3);
        let gu = eta * eta * omega / 4.0;
        let gp = eta * eta * omega / 8.0;
        for ratio in [0.1, 0.2, 0.3] {
            let u = TwoPhotonRabiParams::from_ratios(gu, ratio, 2.0, SpinBasis::U).unwrap();
            let p = TwoPhotonRabiParams::from_ratios(gp, ratio, 2.0, SpinBasis::P).unwrap();
            let (su, _) = unprotected_config(&u, Some(omega), eta, &paper_base()).unwrap();
            let (sp, _) = protected_config(&p, Some(omega), eta, TWO_PI * 20e3, 0.01, &paper_base()).unwrap();
            let (fu, fp) = (su.simulated_params(), sp.simulated_params());
            assert!(rel(fp.coupling, fu.coupling / 2.0) < 1e-12);
            assert!(rel(fp.omega_boson, fu.omega_boson / 2.0) < 1e-12);
        }
    }

    #[test]
    fn interaction_phases_at_origin() {
        let s = space(6);
        let target = TwoPhotonRabiParams::from_ratios(TWO_PI * 90.0, 0.2, 2.0, SpinBasis::U).unwrap();
        let (u, _) = unprotected_config(&target, None, 0.06, &paper_base()).unwrap();
        let h = h_two_photon_interaction(0.0, &u, s);
        let el = h.get(s.index(Spin::Up, 0), s.index(Spin::Down, 2));
        let coef = u.sideband_rabi * 0.06f64.powi(2) / 4.0;
        assert!((el - C64::new(coef * 2f64.sqrt(), 0.0)).norm() < 1e-12 * coef);

        let target = TwoPhotonRabiParams::from_ratios(TWO_PI * 45.0, 0.2, 2.0, SpinBasis::P).unwrap();
        let (p, _) = protected_config(&target, None, 0.06, TWO_PI * 20e3, 0.01, &paper_base()).unwrap();
        let h = h_two_photon_interaction(0.0, &p, s);
        let coef = p.sideband_rabi * 0.06f64.powi(2) / 8.0;
        // s_z (a^2 + a^dag^2): +coef sqrt2 on up, -coef sqrt2 on down
        let up = h.get(s.index(Spin::Up, 0), s.index(Spin::Up, 2));
        let dn = h.get(s.index(Spin::Down, 2), s.index(Spin::Down, 0));
        assert!((up - C64::new(coef * 2f64.sqrt(), 0.0)).norm() < 1e-12 * coef);
        assert!((dn + C64::new(coef * 2f64.sqrt(), 0.0)).norm() < 1e-12 * coef);
    }

    #[test]
    fn displacement_identity_and_vacuum_overlap() {
        let s = space(30);
        assert!((&displacement_exponential(0.0, 0.4, s) - &Operator::identity(30)).max_abs() < 1e-14);
        for phase in [0.0, 0.9, 2.5] {
            let d = displacement_exponential(0.06, phase, s);
            let want = (-0.06f64 * 0.06 / 2.0).exp();
            assert!((d.get(0, 0).re - want).abs() < 1e-13 && d.get(0, 0).im.abs() < 1e-13);
            assert!((want - 0.998201).abs() < 1e-6);
        }
    }

    #[test]
    fn displacement_unitarity_below_cutoff() {
        let n = 30;
        let d = displacement_exponential(0.3, 1.1, space(n));
        let dd = &d.adjoint() * &d;
        for r in 0..n - 2 {
            for c in 0..n - 2 {
                let want = if r == c { ONE } else { ZERO };
                assert!((dd.get(r, c) - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn displacement_matches_series_oracle() {
        // exp(iX) by summing the power series in a larger space, then
        // restricting to the low block
        let small = space(12);
        let big = space(48);
        let eta = 0.25;
        let theta = 0.8;
        let ops = boson_operators(big);
        let rot = C64::from_polar(1.0, -theta);
        let x = (&ops.a.scale(rot) + &ops.a_dag.scale(rot.conj())).scale(C64::new(0.0, eta));
        let mut term = Operator::identity(48);
        let mut sum = Operator::identity(48);
        for k in 1..60 {
            term = (&term * &x).scale_re(1.0 / k as f64);
            sum = &sum + &term;
        }
        let d = displacement_exponential(eta, theta, big);
        let d_small = displacement_exponential(eta, theta, small);
        for r in 0..8 {
            for c in 0..8 {
                assert!((d.get(r, c) - sum.get(r, c)).norm() < 1e-12);
                if r < 4 && c < 4 {
                    assert!((d_small.get(r, c) - sum.get(r, c)).norm() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn ion_hamiltonian_limits() {
        let s = space(6);
        let empty = IonConfig { omega_qubit_splitting: 1.0, trap_freq: 10.0, lasers: vec![], noise: None };
        let h = h_ion_full(0.3, &empty, 2.0, s);
        let sz = joint(&pauli::z(), &Operator::identity(6)).unwrap();
        assert!((&h - &sz).max_abs() < 1e-15);

        let omega_c = 3.0;
        let phi = 0.4;
        let carrier = IonConfig {
            omega_qubit_splitting: 1e3,
            trap_freq: 10.0,
            lasers: vec![LaserDrive { rabi: omega_c, lamb_dicke: 0.0, offset: 0.0, phase: phi, kind: DriveKind::Carrier }],
            noise: None,
        };
        let id = Operator::identity(6);
        let want = &joint(&pauli::plus(), &id).unwrap().scale(C64::from_polar(omega_c / 2.0, -phi))
            + &joint(&pauli::minus(), &id).unwrap().scale(C64::from_polar(omega_c / 2.0, phi));
        for t in [0.0, 0.7, 13.0] {
            assert!((&h_ion_full(t, &carrier, 0.0, s) - &want).max_abs() < 1e-14);
        }
    }

    #[test]
    fn ion_vacuum_element_is_debye_waller() {
        let s = space(20);
        let ion = IonConfig {
            omega_qubit_splitting: 1e3,
            trap_freq: 10.0,
            lasers: vec![LaserDrive { rabi: 2.0, lamb_dicke: 0.06, offset: 0.0, phase: 0.0, kind: DriveKind::Carrier }],
            noise: None,
        };
        let h = h_ion_full(0.0, &ion, 0.0, s);
        let el = h.get(s.index(Spin::Up, 0), s.index(Spin::Down, 0));
        assert!((el.re - 0.998201).abs() < 1e-6, "{el}");
    }

    #[test]
    fn builders_are_hermitian() {
        let s = space(10);
        let base = paper_base();
        let tu = TwoPhotonRabiParams::from_ratios(TWO_PI * 90.0, 0.3, 1.0, SpinBasis::U).unwrap();
        let tp = TwoPhotonRabiParams::from_ratios(TWO_PI * 45.0, 0.3, 1.0, SpinBasis::P).unwrap();
        let (su, iu) = unprotected_config(&tu, None, 0.06, &base).unwrap();
        let (sp, ip) = protected_config(&tp, None, 0.06, TWO_PI * 20e3, 0.01, &base).unwrap();
        for t in [0.0, 1.3e-4, 4.9e-3] {
            for xi in [0.0, -1234.5] {
                assert!(h_ion_full(t, &iu, xi, s).is_hermitian(1e-12));
                assert!(h_ion_full(t, &ip, xi, s).is_hermitian(1e-12));
            }
            assert!(h_two_photon_interaction(t, &su, s).is_hermitian(1e-12));
            assert!(h_two_photon_interaction(t, &sp, s).is_hermitian(1e-12));
            assert!(h_2pqrm(&tu, s).is_hermitian(1e-12));
        }
    }

    /// Second-order Lamb-Dicke expansion of one laser term with only the
    /// phonon-number changing parts resonant with that laser retained.
    fn expanded_and_rotated(laser: &LaserDrive, s: FockSpace) -> Operator {
        let ops = boson_operators(s);
        let eta = laser.lamb_dicke;
        // (i eta)^2/2 (a e^{-i nu t} + a^dag e^{i nu t})^2 keeps a^2 e^{-2i nu t}
        // for the red and a^dag^2 e^{2i nu t} for the blue sideband; at t = 0
        // the laser phase e^{i(w_I - w_j)t} is 1
        let boson = match laser.kind {
            DriveKind::Red2 => (&ops.a * &ops.a).scale_re(-eta * eta / 2.0),
            DriveKind::Blue2 => (&ops.a_dag * &ops.a_dag).scale_re(-eta * eta / 2.0),
            DriveKind::Carrier => Operator::identity(s.n_trunc()),
        };
        let half = joint(&pauli::plus(), &boson.scale(C64::from_polar(0.5 * laser.rabi, -laser.phase))).unwrap();
        &half + &half.adjoint()
    }

    #[test]
    fn lamb_dicke_reduction_matches_interaction_form() {
        let s = space(10);
        let base = paper_base();
        let tu = TwoPhotonRabiParams::from_ratios(TWO_PI * 90.0, 0.2, 2.0, SpinBasis::U).unwrap();
        let (su, iu) = unprotected_config(&tu, None, 0.06, &base).unwrap();
        let mut reduced = Operator::zeros(20);
        for laser in &iu.lasers {
            reduced = &reduced + &expanded_and_rotated(laser, s);
        }
        let eff = h_two_photon_interaction(0.0, &su, s);
        let scale = eff.max_abs();
        assert!((&reduced - &eff).max_abs() < 1e-12 * scale);

        // the full exponential agrees with the expansion on the retained
        // element up to fourth order in eta
        let full = displacement_exponential(0.06, 0.0, s);
        let second = -0.06f64.powi(2) / 2.0 * 2f64.sqrt();
        assert!((full.get(0, 2).re - second).abs() < 3.0 * 0.06f64.powi(4));
    }
}
