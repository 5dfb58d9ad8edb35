//! Scalar state evolution of the message-passing detector.
//!
//! The effective noise variance of the decoupled channel follows
//! `sigma_{t+1}^2 = N0 + beta Psi(sigma_t^2)`, started at
//! `sigma_1^2 = N0 + beta Var[X]`, where `Psi` is the MSE of the denoiser on
//! `X + sigma Z`. The replica fixed-point equation for the individually
//! optimal detector is the same equation, so [`solve_fixed_point`] serves
//! both.

pub mod ser;
pub mod thresholds;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::constellation::Constellation;
use crate::denoiser::{Denoiser, GaussianMixtureDenoiser};
use crate::error::{Error, Result};
use crate::impairment::effective_variance;
use crate::random::{categorical, complex_normal, stream_rng};

pub use ser::{predicted_ser, scalar_ser_monte_carlo, ScalarSer};
pub use thresholds::{
    beta_min_over_nt, phase_map, thresholds, BetaMinScan, PhaseCell, Regime, ThresholdReport,
};

/// Default Monte Carlo sample count for `Psi`.
pub const DEFAULT_PSI_SAMPLES: usize = 1_000_000;
/// Minimum sample count accepted for threshold computations.
pub const MIN_THRESHOLD_SAMPLES: usize = 100_000;
/// Relative step of the central difference for `dPsi/dsigma^2`.
pub const DERIVATIVE_STEP: f64 = 1e-3;
/// Relative change of `sigma^2` at which the recursion is considered converged.
pub const SE_RTOL: f64 = 1e-10;

/// A scalar MSE curve `sigma^2 -> Psi(sigma^2)`.
pub trait MseFunction: Sync {
    fn mse(&self, sigma2: f64) -> f64;

    /// `Var[X]`, the MSE of an uninformative observation.
    fn prior_variance(&self) -> f64;

    /// Central difference with step `DERIVATIVE_STEP * sigma2`.
    fn mse_derivative(&self, sigma2: f64) -> f64 {
        let h = DERIVATIVE_STEP * sigma2;
        (self.mse(sigma2 + h) - self.mse(sigma2 - h)) / (2.0 * h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsiMethod {
    MonteCarlo {
        samples: usize,
        seed: u64,
    },
    /// Only valid for a single-point prior.
    ClosedForm,
}

#[derive(Debug, Clone)]
pub struct PsiSpec {
    pub constellation: Constellation,
    pub n_t: f64,
    pub method: PsiMethod,
}

impl PsiSpec {
    pub fn monte_carlo(constellation: Constellation, n_t: f64, samples: usize, seed: u64) -> Self {
        PsiSpec {
            constellation,
            n_t,
            method: PsiMethod::MonteCarlo { samples, seed },
        }
    }

    pub fn closed_form(constellation: Constellation, n_t: f64) -> Self {
        PsiSpec {
            constellation,
            n_t,
            method: PsiMethod::ClosedForm,
        }
    }

    /// Closed form for single-point priors, Monte Carlo otherwise.
    pub fn auto(constellation: Constellation, n_t: f64, samples: usize, seed: u64) -> Self {
        if active_points(&constellation) == 1 {
            Self::closed_form(constellation, n_t)
        } else {
            Self::monte_carlo(constellation, n_t, samples, seed)
        }
    }

    pub fn samples(&self) -> Option<usize> {
        match self.method {
            PsiMethod::MonteCarlo { samples, .. } => Some(samples),
            PsiMethod::ClosedForm => None,
        }
    }
}

fn active_points(c: &Constellation) -> usize {
    c.priors().iter().filter(|&&p| p > 0.0).count()
}

/// MSE of the posterior-mean denoiser.
///
/// The Monte Carlo variant stores its `X` and `Z` draws once and reuses them
/// for every `sigma^2` (common random numbers), which keeps the estimated
/// curve smooth enough for finite differences. `Z` is centred, made
/// orthogonal to the centred `X` draws and rescaled to unit second moment,
/// and the estimate is scaled by `Var[X]` over the sample variance of `X`,
/// so the curve reaches exactly `Var[X]` as `sigma^2 -> inf`.
#[derive(Debug, Clone)]
pub struct Psi {
    denoiser: GaussianMixtureDenoiser,
    n_t: f64,
    var_x: f64,
    samples: Option<McSamples>,
}

#[derive(Debug, Clone)]
struct McSamples {
    x: Vec<Complex64>,
    z: Vec<Complex64>,
    scale: f64,
}

impl Psi {
    pub fn new(spec: &PsiSpec) -> Result<Self> {
        if !(spec.n_t >= 0.0 && spec.n_t.is_finite()) {
            return Err(Error::Config(format!("N_T must be >= 0, got {}", spec.n_t)));
        }
        let denoiser = GaussianMixtureDenoiser::new(spec.constellation.clone(), spec.n_t)?;
        let var_x = effective_variance(&spec.constellation, spec.n_t);
        let samples = match spec.method {
            PsiMethod::ClosedForm => {
                if active_points(&spec.constellation) != 1 {
                    return Err(Error::Config(
                        "closed-form Psi needs a single-point prior".into(),
                    ));
                }
                None
            }
            PsiMethod::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(Error::Config("Psi needs at least one sample".into()));
                }
                Some(draw_samples(
                    &spec.constellation,
                    spec.n_t,
                    samples,
                    seed,
                    var_x,
                ))
            }
        };
        Ok(Psi {
            denoiser,
            n_t: spec.n_t,
            var_x,
            samples,
        })
    }

    pub fn n_t(&self) -> f64 {
        self.n_t
    }

    pub fn sample_count(&self) -> Option<usize> {
        self.samples.as_ref().map(|m| m.x.len())
    }
}

fn draw_samples(c: &Constellation, n_t: f64, n: usize, seed: u64, var_x: f64) -> McSamples {
    let mut rng = stream_rng(seed, 0, 0);
    let x: Vec<Complex64> = (0..n)
        .map(|_| {
            let a = c.point(categorical(&mut rng, c.priors()));
            if n_t > 0.0 {
                a + complex_normal(&mut rng, n_t)
            } else {
                a
            }
        })
        .collect();
    let mut rng = stream_rng(seed, 1, 0);
    let mut z: Vec<Complex64> = (0..n).map(|_| complex_normal(&mut rng, 1.0)).collect();

    let nf = n as f64;
    let (mean_x, _) = c.moments();
    let x_bar = x.iter().sum::<Complex64>() / nf;
    let z_bar = z.iter().sum::<Complex64>() / nf;
    let d: Vec<Complex64> = x.iter().map(|&v| v - x_bar).collect();
    let d_power: f64 = d.iter().map(|v| v.norm_sqr()).sum();
    let proj = if d_power > 0.0 {
        d.iter()
            .zip(&z)
            .map(|(di, zi)| di.conj() * zi)
            .sum::<Complex64>()
            / d_power
    } else {
        Complex64::new(0.0, 0.0)
    };
    for (zi, di) in z.iter_mut().zip(&d) {
        *zi -= z_bar + proj * di;
    }
    let power = z.iter().map(|v| v.norm_sqr()).sum::<f64>() / nf;
    let norm = power.sqrt().recip();
    for v in &mut z {
        *v *= norm;
    }

    let sample_var = x.iter().map(|v| (v - mean_x).norm_sqr()).sum::<f64>() / nf;
    let scale = if sample_var > 0.0 {
        var_x / sample_var
    } else {
        1.0
    };
    McSamples { x, z, scale }
}

impl MseFunction for Psi {
    fn mse(&self, sigma2: f64) -> f64 {
        match &self.samples {
            None => self.n_t * sigma2 / (self.n_t + sigma2),
            Some(m) => {
                let sigma = sigma2.sqrt();
                let total: f64 =
                    m.x.iter()
                        .zip(&m.z)
                        .map(|(&xi, &zi)| {
                            let (f, _) = self.denoiser.mean_variance(xi + zi * sigma, sigma2);
                            (f - xi).norm_sqr()
                        })
                        .sum();
                m.scale * total / m.x.len() as f64
            }
        }
    }

    fn prior_variance(&self) -> f64 {
        self.var_x
    }
}

/// MSE of the linear estimator `F_c(z) = c z + (1 - c) a` for the
/// single-point prior `X ~ CN(a, N_T)`: `(1 - c)^2 N_T + c^2 sigma^2`.
#[derive(Debug, Clone, Copy)]
pub struct LinearMse {
    pub n_t: f64,
    pub c: f64,
}

impl MseFunction for LinearMse {
    fn mse(&self, sigma2: f64) -> f64 {
        (1.0 - self.c).powi(2) * self.n_t + self.c * self.c * sigma2
    }

    fn prior_variance(&self) -> f64 {
        self.n_t
    }
}

/// Output of the state-evolution recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct SeTrace {
    /// `sigma_t^2` for `t = 1, 2, ...`.
    pub sigma2: Vec<f64>,
    /// True when the recursion met [`SE_RTOL`] before `tmax`.
    pub converged: bool,
    /// Fixed point reached from `sigma_1^2`.
    pub fixed_point: f64,
}

fn check_beta_n0(beta: f64, n0: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be > 0, got {beta}")));
    }
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(Error::Config(format!("N0 must be > 0, got {n0}")));
    }
    Ok(())
}

/// Runs `sigma_{t+1}^2 = N0 + beta Psi(sigma_t^2)` for at most `tmax` steps.
pub fn se_recursion(psi: &dyn MseFunction, beta: f64, n0: f64, tmax: usize) -> Result<SeTrace> {
    check_beta_n0(beta, n0)?;
    if tmax == 0 {
        return Err(Error::Config("tmax must be >= 1".into()));
    }
    let mut sigma2 = vec![n0 + beta * psi.prior_variance()];
    let mut converged = false;
    while sigma2.len() < tmax {
        let prev = *sigma2.last().unwrap();
        let next = n0 + beta * psi.mse(prev);
        sigma2.push(next);
        if (next - prev).abs() < SE_RTOL * prev {
            converged = true;
            break;
        }
    }
    let fixed_point = solve_fixed_point(psi, beta, n0)?;
    Ok(SeTrace {
        sigma2,
        converged,
        fixed_point,
    })
}

/// Fixed point of `sigma^2 = N0 + beta Psi(sigma^2)` reached from
/// `sigma_1^2 = N0 + beta Var[X]`.
///
/// The recursion decreases monotonically from `sigma_1^2`, so after it
/// slows down the root lies just below the current iterate; it is then
/// bracketed and bisected.
pub fn solve_fixed_point(psi: &dyn MseFunction, beta: f64, n0: f64) -> Result<f64> {
    check_beta_n0(beta, n0)?;
    let residual = |s: f64| s - n0 - beta * psi.mse(s);
    let mut s = n0 + beta * psi.prior_variance();
    for _ in 0..1000 {
        let next = n0 + beta * psi.mse(s);
        let done = (next - s).abs() < 1e-7 * s;
        s = next;
        if done {
            break;
        }
    }
    if residual(s).abs() < 1e-12 * s {
        return Ok(s);
    }
    // bracket on the side where the residual changes sign
    let r_hi = residual(s);
    let dir = if r_hi > 0.0 { -1.0 } else { 1.0 };
    let mut step = 1e-9 * s;
    let mut other = s;
    let mut found = false;
    for _ in 0..200 {
        other = (s + dir * step).max(n0 * 0.5);
        if residual(other).signum() != r_hi.signum() {
            found = true;
            break;
        }
        step *= 2.0;
    }
    if !found {
        // tangential root; the iterate is as good as it gets
        return Ok(s);
    }
    let (mut lo, mut hi) = if other < s { (other, s) } else { (s, other) };
    let r_lo = residual(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid).signum() == r_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `Psi` and its derivative tabulated on a `sigma^2` grid.
#[derive(Debug, Clone)]
pub struct PsiCurve {
    pub sigma2: Vec<f64>,
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
}

impl PsiCurve {
    pub const DEFAULT_LO: f64 = 1e-6;
    pub const DEFAULT_HI: f64 = 1e3;
    pub const DEFAULT_POINTS: usize = 400;

    /// Evaluates the grid points in parallel.
    pub fn evaluate(psi: &dyn MseFunction, grid: &[f64]) -> Self {
        let values: Vec<(f64, f64)> = grid
            .par_iter()
            .map(|&s| (psi.mse(s), psi.mse_derivative(s)))
            .collect();
        PsiCurve {
            sigma2: grid.to_vec(),
            psi: values.iter().map(|v| v.0).collect(),
            dpsi: values.iter().map(|v| v.1).collect(),
        }
    }

    pub fn default_grid() -> Vec<f64> {
        log_grid(Self::DEFAULT_LO, Self::DEFAULT_HI, Self::DEFAULT_POINTS)
    }

    /// Grid intervals on which `sigma^2 - N0 - beta Psi(sigma^2)` changes sign.
    pub fn fixed_point_brackets(&self, beta: f64, n0: f64) -> Vec<(f64, f64)> {
        let r: Vec<f64> = self
            .sigma2
            .iter()
            .zip(&self.psi)
            .map(|(&s, &p)| s - n0 - beta * p)
            .collect();
        sign_changes(&self.sigma2, &r)
    }
}

pub(crate) fn sign_changes(x: &[f64], f: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut last: Option<usize> = None;
    for i in 0..f.len() {
        if f[i] == 0.0 || !f[i].is_finite() {
            continue;
        }
        if let Some(j) = last {
            if f[j].signum() != f[i].signum() {
                out.push((x[j], x[i]));
            }
        }
        last = Some(i);
    }
    out
}

/// Bisection on `[lo, hi]` in log coordinates; `f(lo)` and `f(hi)` must differ in sign.
pub(crate) fn bisect_log(f: impl Fn(f64) -> f64, lo: f64, hi: f64, iters: usize) -> f64 {
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let fa = f(lo);
    for _ in 0..iters {
        let m = 0.5 * (a + b);
        if f(m.exp()).signum() == fa.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    (0.5 * (a + b)).exp()
}

/// Every solution of the fixed-point equation visible on `curve`'s grid,
/// refined by bisection against `psi`.
pub fn fixed_point_scan(psi: &dyn MseFunction, curve: &PsiCurve, beta: f64, n0: f64) -> Vec<f64> {
    curve
        .fixed_point_brackets(beta, n0)
        .into_iter()
        .map(|(lo, hi)| bisect_log(|s| s - n0 - beta * psi.mse(s), lo, hi, 60))
        .collect()
}
