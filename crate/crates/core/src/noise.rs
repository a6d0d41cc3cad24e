//! Ornstein-Uhlenbeck model of magnetic-field fluctuations.
//!
//! The process `xi(t)` (rad/s) has correlation time `tau` and diffusion
//! constant `c`; its stationary variance is `c tau / 2` and its
//! autocovariance `C(s) = (c tau / 2) exp(-s / tau)`. Paths always start from
//! the stationary distribution.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUParams {
    /// Correlation time (s).
    pub tau: f64,
    /// Diffusion constant (rad^2 s^-3).
    pub c: f64,
}

impl OUParams {
    pub fn new(tau: f64, c: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::arg(format!("tau must be positive, got {tau}")));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::arg(format!("c must be nonnegative, got {c}")));
        }
        Ok(Self { tau, c })
    }

    /// Parameters reproducing a coherence time `t2` for correlation time `tau`.
    pub fn from_t2(t2: f64, tau: f64) -> Result<Self> {
        Self::new(tau, diffusion_from_t2(t2, tau)?)
    }

    /// Stationary variance `c tau / 2` (rad^2/s^2).
    pub fn stationary_variance(&self) -> f64 {
        0.5 * self.c * self.tau
    }

    /// Crossover frequency `1 / (2 pi tau)` (Hz).
    pub fn f_cr(&self) -> f64 {
        1.0 / (2.0 * PI * self.tau)
    }

    /// Coherence time implied by `(tau, c)`: the inverse of
    /// [`diffusion_from_t2`]. Infinite for `c = 0`.
    pub fn t2(&self) -> f64 {
        if self.c == 0.0 {
            return f64::INFINITY;
        }
        // c tau^2 g(T2) = 2 with g increasing, g(T) = T - tau(3/2 - 2e^{-T/tau} + e^{-2T/tau}/2)
        let target = 2.0 / (self.c * self.tau * self.tau);
        let g = |t: f64| self.tau * from_rest_shape(t / self.tau);
        let mut lo = 0.0;
        let mut hi = target + 2.0 * self.tau;
        while g(hi) < target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Exact OU update over an interval `dt` given a unit normal draw.
pub fn ou_step(xi_prev: f64, dt: f64, params: &OUParams, gaussian_draw: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::arg(format!("dt must be positive, got {dt}")));
    }
    let (decay, kick) = step_coefficients(dt, params);
    Ok(xi_prev * decay + kick * gaussian_draw)
}

fn step_coefficients(dt: f64, params: &OUParams) -> (f64, f64) {
    let decay = (-dt / params.tau).exp();
    // 1 - e^{-2dt/tau} without cancellation for small steps
    let kick = (0.5 * params.c * params.tau * -(-2.0 * dt / params.tau).exp_m1()).sqrt();
    (decay, kick)
}

/// Diffusion constant giving `<sigma_x(T2)> = e^{-1}` for a process started
/// at rest:
/// `c = 2 / (tau^2 (T2 - tau (3/2 - 2 e^{-T2/tau} + e^{-2 T2/tau} / 2)))`.
pub fn diffusion_from_t2(t2: f64, tau: f64) -> Result<f64> {
    if !(t2 > 0.0 && tau > 0.0) {
        return Err(Error::arg(format!("t2 and tau must be positive, got t2={t2}, tau={tau}")));
    }
    let denom = tau * tau * tau * from_rest_shape(t2 / tau);
    // the shape is positive for all t2 > 0 analytically; guard against the
    // regime where it is lost to rounding or where t2 does not exceed tau
    if !(denom > 0.0) || t2 <= tau {
        return Err(Error::CalibrationInfeasible { t2, tau });
    }
    Ok(2.0 / denom)
}

/// Short-correlation limit `2 / (T2 tau^2)`.
pub fn diffusion_from_t2_approx(t2: f64, tau: f64) -> f64 {
    2.0 / (t2 * tau * tau)
}

/// `x - 3/2 + 2 e^{-x} - e^{-2x}/2`, the integrated-noise variance shape for
/// a process started at `xi(0) = 0`.
fn from_rest_shape(x: f64) -> f64 {
    if x < 1e-3 {
        x * x * x / 3.0 - x.powi(4) / 4.0 + 7.0 * x.powi(5) / 60.0
    } else {
        x - 1.5 + 2.0 * (-x).exp() - 0.5 * (-2.0 * x).exp()
    }
}

/// `x - (1 - e^{-x})`, the same shape for a stationary start.
fn stationary_shape(x: f64) -> f64 {
    if x < 1e-3 {
        x * x / 2.0 - x * x * x / 6.0 + x.powi(4) / 24.0
    } else {
        x + (-x).exp_m1()
    }
}

/// Variance of `Xi(t) = int_0^t xi` for a stationary start:
/// `c tau^2 (t - tau (1 - e^{-t/tau}))`.
pub fn xi_integral_variance(t: f64, params: &OUParams) -> f64 {
    debug_assert!(t >= 0.0);
    params.c * params.tau.powi(3) * stationary_shape(t / params.tau)
}

/// Variance of `Xi(t)` conditioned on `xi(0) = 0`:
/// `c tau^2 (t - tau (3/2 - 2 e^{-t/tau} + e^{-2t/tau} / 2))`.
pub fn xi_integral_variance_from_rest(t: f64, params: &OUParams) -> f64 {
    debug_assert!(t >= 0.0);
    params.c * params.tau.powi(3) * from_rest_shape(t / params.tau)
}

/// One-sided spectral density `2 c tau^2 / (1 + (2 pi tau f)^2)`.
pub fn spectral_density(f: f64, params: &OUParams) -> f64 {
    let w = 2.0 * PI * params.tau * f;
    2.0 * params.c * params.tau * params.tau / (1.0 + w * w)
}

/// Ensemble-averaged `<sigma_x(t)>` of a qubit dephased by stationary noise.
pub fn coherence_curve(t: f64, params: &OUParams) -> f64 {
    (-0.5 * xi_integral_variance(t, params)).exp()
}

/// Reproducible key of one stochastic trajectory: the master seed selects
/// the generator key, the index selects an independent stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrajectorySeed {
    pub master: u64,
    pub index: u64,
}

impl TrajectorySeed {
    pub fn new(master: u64, index: u64) -> Self {
        Self { master, index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.index);
        rng
    }
}

impl fmt::Display for TrajectorySeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.master, self.index)
    }
}

/// Streaming OU generator on a uniform grid. `value()` is `xi` at the current
/// grid point; `advance()` moves one step forward.
#[derive(Debug, Clone)]
pub struct OuProcess {
    decay: f64,
    kick: f64,
    value: f64,
    rng: ChaCha8Rng,
}

impl OuProcess {
    pub fn new(params: &OUParams, dt: f64, seed: TrajectorySeed) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::arg(format!("dt must be positive, got {dt}")));
        }
        let mut rng = seed.rng();
        let z: f64 = rng.sample(StandardNormal);
        let value = params.stationary_variance().sqrt() * z;
        let (decay, kick) = step_coefficients(dt, params);
        Ok(Self { decay, kick, value, rng })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn advance(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        self.value = self.value * self.decay + self.kick * z;
        self.value
    }
}

/// A fully materialized noise realization.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub t_grid: Vec<f64>,
    pub xi: Vec<f64>,
    pub seed: TrajectorySeed,
}

impl NoisePath {
    /// Samples `n_points` values at `t_k = k dt`.
    pub fn generate(params: &OUParams, dt: f64, n_points: usize, seed: TrajectorySeed) -> Result<Self> {
        let mut process = OuProcess::new(params, dt, seed)?;
        let mut xi = Vec::with_capacity(n_points);
        if n_points > 0 {
            xi.push(process.value());
        }
        for _ in 1..n_points {
            xi.push(process.advance());
        }
        let t_grid = (0..n_points).map(|k| k as f64 * dt).collect();
        Ok(Self { t_grid, xi, seed })
    }

    /// Left Riemann sum of `xi` up to each grid point, matching the
    /// sample-and-hold coupling used by the integrator.
    pub fn integrated(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.xi.len());
        let mut acc = 0.0;
        out.push(0.0);
        for k in 1..self.xi.len() {
            acc += self.xi[k - 1] * (self.t_grid[k] - self.t_grid[k - 1]);
            out.push(acc);
        }
        out.truncate(self.xi.len());
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "t,xi")?;
        for (t, x) in self.t_grid.iter().zip(&self.xi) {
            writeln!(file, "{t:.12e},{x:.12e}")?;
        }
        file.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU: f64 = 100e-6;
    const T2: f64 = 3e-3;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn deterministic_decay_without_diffusion() {
        let p = OUParams::new(TAU, 0.0).unwrap();
        let x = ou_step(2.5, 3e-5, &p, 0.7).unwrap();
        assert_eq!(x, 2.5 * (-0.3f64).exp());
    }

    #[test]
    fn step_rejects_nonpositive_dt() {
        let p = OUParams::new(TAU, 1.0).unwrap();
        assert!(matches!(ou_step(0.0, 0.0, &p, 0.0), Err(Error::InvalidArgument(_))));
        assert!(ou_step(0.0, -1e-6, &p, 0.0).is_err());
    }

    #[test]
    fn long_step_reaches_stationary_spread() {
        let p = OUParams::new(TAU, 7.0e10).unwrap();
        // a unit draw after dt >> tau lands one stationary sigma away
        let x = ou_step(1e3, 100.0 * TAU, &p, 1.0).unwrap();
        assert!(rel(x, p.stationary_variance().sqrt()) < 1e-12);
    }

    #[test]
    fn innovation_amplitude() {
        let p = OUParams::new(1e-4, 7.018e10).unwrap();
        let sd = ou_step(0.0, 1e-6, &p, 1.0).unwrap();
        let direct = (0.5 * 7.018e10 * 1e-4 * (1.0 - (-2.0e-2f64).exp())).sqrt();
        assert!(rel(sd, direct) < 1e-12);
        assert!((sd - 263.6).abs() < 0.05, "{sd}");
    }

    #[test]
    fn calibration_values() {
        let exact = diffusion_from_t2(T2, TAU).unwrap();
        // denominator tau^2 (T2 - 1.5 tau) since e^{-30} is negligible
        assert!(rel(exact, 2.0 / (TAU * TAU * (T2 - 1.5 * TAU))) < 1e-12);
        assert!((exact / 1e10 - 7.018).abs() < 5e-4);
        let approx = diffusion_from_t2_approx(T2, TAU);
        assert!((approx / 1e10 - 6.667).abs() < 5e-4);
        assert!(((exact - approx) / approx - 0.0526).abs() < 1e-4);
        assert!((exact - approx) / exact <= 1.5 * TAU / T2);
    }

    #[test]
    fn calibration_guard() {
        assert!(matches!(diffusion_from_t2(TAU, TAU), Err(Error::CalibrationInfeasible { .. })));
        assert!(matches!(diffusion_from_t2(0.5 * TAU, TAU), Err(Error::CalibrationInfeasible { .. })));
        assert!(diffusion_from_t2(-1.0, TAU).is_err());
    }

    #[test]
    fn t2_round_trip() {
        for &(t2, tau) in &[(3e-3, 100e-6), (1.5e-3, 50e-6), (2e-3, 1e-3), (5e-4, 4e-4)] {
            let p = OUParams::from_t2(t2, tau).unwrap();
            assert!(rel(p.t2(), t2) < 1e-9, "t2={t2} tau={tau}: {}", p.t2());
        }
        assert!(OUParams::new(TAU, 0.0).unwrap().t2().is_infinite());
    }

    #[test]
    fn integrated_variance_calibration() {
        let p = OUParams::from_t2(T2, TAU).unwrap();
        assert_eq!(xi_integral_variance(0.0, &p), 0.0);
        assert_eq!(xi_integral_variance_from_rest(0.0, &p), 0.0);
        assert!(rel(xi_integral_variance_from_rest(T2, &p), 2.0) < 1e-12);
        // a stationary start adds the spread of xi(0) on top of it
        let extra = 0.5 * p.c * TAU.powi(3) * (1.0 - (-T2 / TAU).exp()).powi(2);
        assert!(rel(xi_integral_variance(T2, &p), 2.0 + extra) < 1e-12);
    }

    #[test]
    fn small_time_series_branches_are_continuous() {
        let p = OUParams::new(TAU, 1e10).unwrap();
        for f in [stationary_shape, from_rest_shape] {
            let below = f(0.999e-3);
            let above = f(1.001e-3);
            assert!((above - below) / above < 1e-2);
        }
        // short-time limits: c tau t^2 / 2 and c t^3 / 3
        let t = 1e-9;
        assert!(rel(xi_integral_variance(t, &p), 0.5 * p.c * TAU * t * t) < 1e-4);
        assert!(rel(xi_integral_variance_from_rest(t, &p), p.c * t * t * t / 3.0) < 1e-4);
    }

    #[test]
    fn spectral_density_shape() {
        let p = OUParams::from_t2(T2, TAU).unwrap();
        let s0 = spectral_density(0.0, &p);
        assert!(rel(s0, 2.0 * p.c * TAU * TAU) < 1e-14);
        assert!(rel(spectral_density(p.f_cr(), &p), 0.5 * s0) < 1e-14);
    }

    #[test]
    fn spectral_density_integrates_to_stationary_variance() {
        // midpoint rule out to 2000 f_cr plus the 1/f^2 tail
        let p = OUParams::from_t2(T2, TAU).unwrap();
        let fc = p.f_cr();
        let n = 2_000_000;
        let span = 2000.0 * fc;
        let h = span / n as f64;
        let mut sum = 0.0;
        for k in 0..n {
            let f = (k as f64 + 0.5) * h;
            sum += spectral_density(f, &p) * h;
        }
        // analytic tail beyond `span`: 2 c tau^2 / ((2 pi tau)^2 f) to leading order
        let tail = 2.0 * p.c * TAU * TAU / ((2.0 * PI * TAU).powi(2) * span);
        let total = sum + tail;
        assert!(rel(total, p.stationary_variance()) < 1e-6, "{}", rel(total, p.stationary_variance()));
    }

    #[test]
    fn coherence_curve_limits() {
        let p = OUParams::from_t2(T2, TAU).unwrap();
        assert_eq!(coherence_curve(0.0, &p), 1.0);
        let at_t2 = coherence_curve(T2, &p);
        // e^{-1} holds for a start at rest; the stationary start sits slightly below
        assert!(at_t2 < (-1.0f64).exp() && at_t2 > 0.36);
    }

    #[test]
    fn paths_are_reproducible() {
        let p = OUParams::from_t2(T2, TAU).unwrap();
        let s = TrajectorySeed::new(11, 3);
        let a = NoisePath::generate(&p, 1e-6, 500, s).unwrap();
        let b = NoisePath::generate(&p, 1e-6, 500, s).unwrap();
        assert_eq!(a, b);
        let c = NoisePath::generate(&p, 1e-6, 500, TrajectorySeed::new(11, 4)).unwrap();
        assert_ne!(a.xi, c.xi);
        assert_eq!(a.xi.len(), a.t_grid.len());
    }

    #[test]
    fn csv_dump() {
        let p = OUParams::from_t2(T2, TAU).unwrap();
        let path = NoisePath::generate(&p, 1e-6, 4, TrajectorySeed::new(1, 0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("noise.csv");
        path.write_csv(&file).unwrap();
        let text = std::fs::read_to_string(file).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,xi");
        assert_eq!(lines.len(), 5);
    }
}
