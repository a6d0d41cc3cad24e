//! Monte-Carlo validation of the noise generator against its closed forms.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::{xi_integral_variance, NoisePath, OUParams, TrajectorySeed};

/// Lags, in units of `tau`, at which the autocovariance is checked.
pub const LAGS: [f64; 4] = [0.0, 1.0, 2.0, 5.0];
/// Grid points per correlation time.
pub const POINTS_PER_TAU: f64 = 100.0;
const COHERENCE_TIMES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub sample: f64,
    pub expected: f64,
    pub stderr: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: String, samples: &[f64], expected: f64) -> Self {
        let (mean, stderr) = mean_stderr(samples);
        Self::from_estimate(name, mean, stderr, expected)
    }

    fn from_estimate(name: String, sample: f64, stderr: f64, expected: f64) -> Self {
        let pass = (sample - expected).abs() <= 3.0 * stderr;
        Self { name, sample, expected, stderr, pass }
    }

    /// Deviation in standard errors.
    pub fn z(&self) -> f64 {
        let d = (self.sample - self.expected).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseReport {
    pub params: OUParams,
    pub n_paths: usize,
    pub duration: f64,
    pub dt: f64,
    pub master_seed: u64,
    pub checks: Vec<Check>,
}

impl NoiseReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for NoiseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "OU check: tau = {:e} s, c = {:e} rad^2/s^3, {} paths over {:e} s (dt = {:e} s)",
            self.params.tau, self.params.c, self.n_paths, self.duration, self.dt
        )?;
        for c in &self.checks {
            writeln!(
                f,
                "{} {:<28} sample {:>13.6e}  expected {:>13.6e}  stderr {:>10.3e}  ({:.2} SE)",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.sample,
                c.expected,
                c.stderr,
                c.z()
            )?;
        }
        Ok(())
    }
}

fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-path values entering the ensemble statistics.
struct PathSample {
    end: f64,
    lag_products: [f64; LAGS.len()],
    cos_xi: [f64; COHERENCE_TIMES],
    cos_at_t2: Option<f64>,
}

/// Samples `n_paths` stationary paths and compares mean, variance,
/// autocovariance, `<cos Xi(t)>` and the dephased-qubit coherence at `T2`
/// with their analytic values, each within three standard errors.
pub fn noise_check(params: &OUParams, n_paths: usize, duration: f64, master_seed: u64) -> Result<NoiseReport> {
    if n_paths < 2 {
        return Err(Error::arg(format!("need at least 2 paths, got {n_paths}")));
    }
    let dt = params.tau / POINTS_PER_TAU;
    let min_duration = LAGS[LAGS.len() - 1] * params.tau;
    if !(duration >= min_duration) {
        return Err(Error::arg(format!("duration {duration:e} s must cover the largest lag {min_duration:e} s")));
    }
    let t2 = params.t2();
    let span = if t2.is_finite() { duration.max(t2) } else { duration };
    let n_points = (span / dt).ceil() as usize + 1;
    let idx = |t: f64| (t / dt).round() as usize;
    let lag_idx: Vec<usize> = LAGS.iter().map(|l| idx(l * params.tau)).collect();
    let end_idx = idx(duration).min(n_points - 1);
    let cos_idx: Vec<usize> = (1..=COHERENCE_TIMES).map(|k| idx(duration * k as f64 / COHERENCE_TIMES as f64)).collect();
    let t2_idx = t2.is_finite().then(|| idx(t2).min(n_points - 1));

    let samples = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = NoisePath::generate(params, dt, n_points, TrajectorySeed::new(master_seed, i))?;
            let phase = path.integrated();
            let mut lag_products = [0.0; LAGS.len()];
            for (p, &k) in lag_products.iter_mut().zip(&lag_idx) {
                *p = path.xi[0] * path.xi[k];
            }
            let mut cos_xi = [0.0; COHERENCE_TIMES];
            for (c, &k) in cos_xi.iter_mut().zip(&cos_idx) {
                *c = phase[k].cos();
            }
            Ok(PathSample { end: path.xi[end_idx], lag_products, cos_xi, cos_at_t2: t2_idx.map(|k| phase[k].cos()) })
        })
        .collect::<Result<Vec<_>>>()?;

    let var0 = params.stationary_variance();
    let column = |f: &dyn Fn(&PathSample) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
    let mut checks = Vec::new();

    let ends = column(&|s| s.end);
    checks.push(Check::new("stationary mean".into(), &ends, 0.0));
    let sq: Vec<f64> = ends.iter().map(|x| x * x).collect();
    let (m2, _) = mean_stderr(&sq);
    let (mean, _) = mean_stderr(&ends);
    let n = ends.len() as f64;
    let sample_var = (m2 - mean * mean) * n / (n - 1.0);
    // Gaussian sampling spread of the variance estimator
    let var_se = sample_var * (2.0 / (n - 1.0)).sqrt();
    checks.push(Check::from_estimate("stationary variance".into(), sample_var, var_se, var0));

    for (j, lag) in LAGS.iter().enumerate() {
        let expected = var0 * (-(lag_idx[j] as f64 * dt) / params.tau).exp();
        checks.push(Check::new(format!("autocovariance at {lag} tau"), &column(&|s| s.lag_products[j]), expected));
    }
    for (j, &k) in cos_idx.iter().enumerate() {
        let t = k as f64 * dt;
        let expected = (-0.5 * xi_integral_variance(t, params)).exp();
        checks.push(Check::new(format!("<cos Xi> at {t:.3e} s"), &column(&|s| s.cos_xi[j]), expected));
    }
    if t2_idx.is_some() {
        let at_t2 = column(&|s| s.cos_at_t2.unwrap_or(f64::NAN));
        checks.push(Check::new("<sigma_x(T2)> = 1/e".into(), &at_t2, (-1.0f64).exp()));
    }
    Ok(NoiseReport { params: *params, n_paths, duration, dt, master_seed, checks })
}
