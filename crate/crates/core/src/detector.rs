//! Message-passing data detectors.
//!
//! [`AmpDetector`] runs the complex Bayesian AMP recursion
//!
//! ```text
//! z^t     = x^t + H^H r^t
//! x^{t+1} = F(z^t, N0 (1 + tau^t))
//! tau^{t+1} = beta / N0 * <G(z^t, N0 (1 + tau^t))>
//! r^{t+1} = y - H x^{t+1} + tau^{t+1} / (1 + tau^t) * r^t
//! ```
//!
//! followed by per-user MAP decisions on `z^tmax`. The three detectors differ
//! only in the denoiser and the system they see:
//!
//! * impairment-aware: Gaussian-mixture prior with the true `N_T`;
//! * regular: discrete prior, `N_T` ignored;
//! * whitened: regular detector on the whitened system (see [`whitening`]).

pub mod whitening;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, GaussianMixtureDenoiser};
use crate::error::{Error, Result};
use crate::simulation::SystemConfig;

/// `tau` above this is treated as divergence.
pub const TAU_LIMIT: f64 = 1e9;
/// Relative `tau` change below which the recursion stops early.
pub const EARLY_STOP_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorKind {
    #[serde(rename = "lama-i")]
    LamaI,
    #[serde(rename = "lama")]
    Lama,
    #[serde(rename = "lama-whitened")]
    LamaWhitened,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [
        DetectorKind::LamaI,
        DetectorKind::Lama,
        DetectorKind::LamaWhitened,
    ];

    pub fn id(self) -> &'static str {
        match self {
            DetectorKind::LamaI => "lama-i",
            DetectorKind::Lama => "lama",
            DetectorKind::LamaWhitened => "lama-whitened",
        }
    }

    /// Parses a detector id; `all` expands to every detector.
    pub fn parse_list(s: &str) -> Result<Vec<DetectorKind>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "all" => out.extend(DetectorKind::ALL),
                other => out.push(other.parse()?),
            }
        }
        out.dedup();
        if out.is_empty() {
            return Err(Error::Config("no detector selected".into()));
        }
        Ok(out)
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lama-i" => Ok(DetectorKind::LamaI),
            "lama" => Ok(DetectorKind::Lama),
            "lama-whitened" => Ok(DetectorKind::LamaWhitened),
            _ => Err(Error::Config(format!("unknown detector '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetectionResult {
    /// Constellation index decided for each user.
    pub s_hat: Vec<usize>,
    pub z_final: DVector<Complex64>,
    /// `N0 (1 + tau)` at the final iteration.
    pub sigma2_postulated: f64,
    /// `tau^t` for every iteration that produced a `z^t`.
    pub tau_trace: Vec<f64>,
}

impl DetectionResult {
    pub fn iterations(&self) -> usize {
        self.tau_trace.len()
    }

    pub fn symbol_errors(&self, s_index: &[usize]) -> usize {
        self.s_hat
            .iter()
            .zip(s_index)
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// State handed to an observer after each `z^t` is formed.
#[derive(Debug)]
pub struct IterationView<'a> {
    pub t: usize,
    pub z: &'a DVector<Complex64>,
    pub x_hat: &'a DVector<Complex64>,
    pub tau: f64,
    pub n0: f64,
}

impl IterationView<'_> {
    /// Postulated variance `N0 (1 + tau^t)` of `z^t - x`.
    pub fn sigma2(&self) -> f64 {
        self.n0 * (1.0 + self.tau)
    }
}

/// Complex Bayesian AMP with a pluggable element-wise denoiser.
#[derive(Debug, Clone)]
pub struct AmpDetector<D> {
    denoiser: D,
    n0: f64,
    tmax: usize,
    early_stop: bool,
}

impl<D: Denoiser> AmpDetector<D> {
    pub fn new(denoiser: D, n0: f64, tmax: usize) -> Result<Self> {
        if tmax == 0 {
            return Err(Error::Config("tmax must be >= 1".into()));
        }
        if !(n0 > 0.0 && n0.is_finite()) {
            return Err(Error::Config(format!("N0 must be > 0, got {n0}")));
        }
        Ok(AmpDetector {
            denoiser,
            n0,
            tmax,
            early_stop: true,
        })
    }

    /// Disables the `tau` convergence test so exactly `tmax` iterations run.
    pub fn without_early_stop(mut self) -> Self {
        self.early_stop = false;
        self
    }

    pub fn denoiser(&self) -> &D {
        &self.denoiser
    }

    pub fn detect(
        &self,
        y: &DVector<Complex64>,
        h: &DMatrix<Complex64>,
    ) -> Result<DetectionResult> {
        self.detect_with(y, h, |_| {})
    }

    pub fn detect_with(
        &self,
        y: &DVector<Complex64>,
        h: &DMatrix<Complex64>,
        mut observer: impl FnMut(&IterationView<'_>),
    ) -> Result<DetectionResult> {
        let (mr, mt) = h.shape();
        if y.len() != mr {
            return Err(Error::Config(format!(
                "y has {} entries, H has {mr} rows",
                y.len()
            )));
        }
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let beta = mt as f64 / mr as f64;
        let n0 = self.n0;

        let mut x_hat = DVector::from_element(mt, self.denoiser.prior_mean());
        let mut r = y.clone();
        let mut tau = beta * self.denoiser.prior_variance() / n0;
        let mut z = DVector::from_element(mt, zero);
        let mut tau_trace = Vec::with_capacity(self.tmax);
        let mut converged = false;

        for t in 1..=self.tmax {
            z.copy_from(&x_hat);
            z.gemv_ad(one, h, &r, one);
            if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::Divergence {
                    iteration: t,
                    reason: "non-finite decoupled observation".into(),
                });
            }
            tau_trace.push(tau);
            observer(&IterationView {
                t,
                z: &z,
                x_hat: &x_hat,
                tau,
                n0,
            });
            if t == self.tmax || converged {
                break;
            }

            let sigma2 = n0 * (1.0 + tau);
            let mut g_sum = 0.0;
            for (xh, zl) in x_hat.iter_mut().zip(z.iter()) {
                let (f, g) = self.denoiser.mean_variance(*zl, sigma2);
                *xh = f;
                g_sum += g;
            }
            let tau_next = beta / n0 * g_sum / mt as f64;
            if !tau_next.is_finite() || tau_next > TAU_LIMIT {
                return Err(Error::Divergence {
                    iteration: t,
                    reason: format!("tau = {tau_next:e}"),
                });
            }
            let onsager = tau_next / (1.0 + tau);
            r *= Complex64::new(onsager, 0.0);
            r += y;
            r.gemv(-one, h, &x_hat, one);

            converged = self.early_stop && (tau_next - tau).abs() <= EARLY_STOP_RTOL * tau;
            tau = tau_next;
        }

        let sigma2 = n0 * (1.0 + tau);
        let s_hat = z
            .iter()
            .map(|zl| self.denoiser.decide(*zl, sigma2))
            .collect();
        Ok(DetectionResult {
            s_hat,
            z_final: z,
            sigma2_postulated: sigma2,
            tau_trace,
        })
    }
}

/// Impairment-aware detector for `cfg`.
pub fn lama_i(cfg: &SystemConfig, tmax: usize) -> Result<AmpDetector<GaussianMixtureDenoiser>> {
    let d = GaussianMixtureDenoiser::new(cfg.constellation.clone(), cfg.n_t())?;
    AmpDetector::new(d, cfg.n0, tmax)
}

/// Impairment-agnostic detector: `N_T` is ignored by the denoiser and the
/// decision rule.
pub fn lama_regular(
    cfg: &SystemConfig,
    tmax: usize,
) -> Result<AmpDetector<GaussianMixtureDenoiser>> {
    let d = GaussianMixtureDenoiser::new(cfg.constellation.clone(), 0.0)?;
    AmpDetector::new(d, cfg.n0, tmax)
}

pub fn lama_i_detect(
    y: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    cfg: &SystemConfig,
    tmax: usize,
) -> Result<DetectionResult> {
    lama_i(cfg, tmax)?.detect(y, h)
}

pub fn lama_regular_detect(
    y: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    cfg: &SystemConfig,
    tmax: usize,
) -> Result<DetectionResult> {
    lama_regular(cfg, tmax)?.detect(y, h)
}

/// Regular detector on the whitened system.
pub fn whitened_detect(
    y: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    cfg: &SystemConfig,
    tmax: usize,
) -> Result<DetectionResult> {
    let w = whitening::whiten(h, y, cfg.n0, cfg.n_t())?;
    let d = GaussianMixtureDenoiser::new(cfg.constellation.clone(), 0.0)?;
    AmpDetector::new(d, w.noise_variance, tmax)?.detect(&w.y, &w.h)
}

/// Dispatches on [`DetectorKind`].
pub fn detect(
    kind: DetectorKind,
    y: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    cfg: &SystemConfig,
    tmax: usize,
) -> Result<DetectionResult> {
    match kind {
        DetectorKind::LamaI => lama_i_detect(y, h, cfg, tmax),
        DetectorKind::Lama => lama_regular_detect(y, h, cfg, tmax),
        DetectorKind::LamaWhitened => whitened_detect(y, h, cfg, tmax),
    }
}
