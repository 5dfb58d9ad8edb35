//! Transmit-side impairment models `p(x | s)` and the effective transmit prior.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::random::complex_normal;

/// Capabilities a transmit-impairment model exposes to the simulator and
/// the analysis code. Models act independently per user.
pub trait ImpairmentModel: Send + Sync {
    /// Draws the impairment `e` for the symbol vector `s`.
    fn sample_impairment<R: Rng + ?Sized>(&self, s: &[Complex64], rng: &mut R) -> Vec<Complex64>
    where
        Self: Sized;

    /// `E[X]` of the effective signal `x = s + e`.
    fn effective_mean(&self, c: &Constellation) -> Complex64;

    /// `Var[X]` of the effective signal.
    fn effective_variance(&self, c: &Constellation) -> f64;

    /// Density of the effective signal, or [`Error::PointMassPrior`] when
    /// the prior has atoms.
    fn effective_prior_pdf(&self, x: Complex64, c: &Constellation) -> Result<f64>;
}

/// Additive `e ~ CN(0, N_T I)`, independent of the data and the receive noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTransmitNoise {
    n_t: f64,
}

impl GaussianTransmitNoise {
    pub fn new(n_t: f64) -> Result<Self> {
        if !(n_t >= 0.0 && n_t.is_finite()) {
            return Err(Error::Config(format!(
                "transmit-noise variance must be finite and >= 0, got {n_t}"
            )));
        }
        Ok(GaussianTransmitNoise { n_t })
    }

    /// The impairment-free model.
    pub fn none() -> Self {
        GaussianTransmitNoise { n_t: 0.0 }
    }

    pub fn variance(&self) -> f64 {
        self.n_t
    }

    pub fn is_impairment_free(&self) -> bool {
        self.n_t == 0.0
    }
}

impl ImpairmentModel for GaussianTransmitNoise {
    fn sample_impairment<R: Rng + ?Sized>(&self, s: &[Complex64], rng: &mut R) -> Vec<Complex64> {
        if self.n_t == 0.0 {
            return vec![Complex64::new(0.0, 0.0); s.len()];
        }
        s.iter().map(|_| complex_normal(rng, self.n_t)).collect()
    }

    fn effective_mean(&self, c: &Constellation) -> Complex64 {
        c.moments().0
    }

    fn effective_variance(&self, c: &Constellation) -> f64 {
        c.moments().1 + self.n_t
    }

    fn effective_prior_pdf(&self, x: Complex64, c: &Constellation) -> Result<f64> {
        effective_prior_pdf(x, c, self.n_t)
    }
}

/// Gaussian-mixture density `sum_a p_a CN(x; a, N_T)`.
pub fn effective_prior_pdf(x: Complex64, c: &Constellation, n_t: f64) -> Result<f64> {
    if n_t == 0.0 {
        return Err(Error::PointMassPrior);
    }
    if !(n_t > 0.0) {
        return Err(Error::Config(format!("transmit-noise variance {n_t} < 0")));
    }
    let norm = 1.0 / (PI * n_t);
    Ok(c.points()
        .iter()
        .zip(c.priors())
        .map(|(a, p)| p * norm * (-(x - a).norm_sqr() / n_t).exp())
        .sum())
}

/// `Var[X] = Var[S] + N_T`.
pub fn effective_variance(c: &Constellation, n_t: f64) -> f64 {
    c.moments().1 + n_t
}
