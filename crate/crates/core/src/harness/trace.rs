//! Per-iteration detector traces for comparison with state evolution.

use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoiser::GaussianMixtureDenoiser;
use crate::detector::{whitening, AmpDetector, DetectorKind, IterationView};
use crate::error::{Error, Result};
use crate::random::stream_rng;
use crate::simulation::{sample_realization, SystemConfig};
use crate::state_evolution::{se_recursion, Psi, PsiSpec};

/// Trial-averaged quantities at iteration `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    /// Mean of `tau^t` over trials.
    pub tau: f64,
    /// Mean postulated variance `N0 (1 + tau^t)`.
    pub postulated_sigma2: f64,
    /// Empirical `E|z^t - x|^2` pooled over users and trials.
    pub empirical_sigma2: f64,
    /// `sigma_t^2` from state evolution, when requested.
    pub se_sigma2: Option<f64>,
}

#[derive(Debug, Clone)]
struct Sums {
    tau: Vec<f64>,
    postulated: Vec<f64>,
    sq_err: Vec<f64>,
}

impl Sums {
    fn zeros(n: usize) -> Self {
        Sums {
            tau: vec![0.0; n],
            postulated: vec![0.0; n],
            sq_err: vec![0.0; n],
        }
    }

    fn add(mut self, other: &Sums) -> Self {
        for i in 0..self.tau.len() {
            self.tau[i] += other.tau[i];
            self.postulated[i] += other.postulated[i];
            self.sq_err[i] += other.sq_err[i];
        }
        self
    }
}

/// Runs `trials` independent detections with exactly `tmax` iterations and
/// averages the per-iteration statistics. For the whitened detector the
/// reference signal is `s` (the impairment is folded into the noise);
/// otherwise it is `x = s + e`.
///
/// With `se_samples` set, the state-evolution trace of the posterior-mean
/// denoiser is attached (only meaningful for the impairment-aware detector).
pub fn trace_detector(
    system: &SystemConfig,
    kind: DetectorKind,
    tmax: usize,
    trials: u64,
    se_samples: Option<usize>,
) -> Result<Vec<TraceRow>> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    let per_trial: Vec<Sums> = (0..trials)
        .into_par_iter()
        .map(|trial| trace_trial(system, kind, tmax, trial))
        .collect::<Result<_>>()?;
    let total = per_trial
        .iter()
        .fold(Sums::zeros(tmax), |acc, s| acc.add(s));

    let se = match se_samples {
        Some(samples) => {
            let psi = Psi::new(&PsiSpec::auto(
                system.constellation.clone(),
                system.n_t(),
                samples,
                system.seed,
            ))?;
            let mut trace = se_recursion(&psi, system.beta(), system.n0, tmax)?.sigma2;
            // converged recursions stop early; the tail is the fixed point
            while trace.len() < tmax {
                trace.push(*trace.last().unwrap());
            }
            Some(trace)
        }
        None => None,
    };

    let n = trials as f64;
    let users = (trials * system.mt as u64) as f64;
    Ok((0..tmax)
        .map(|i| TraceRow {
            t: i + 1,
            tau: total.tau[i] / n,
            postulated_sigma2: total.postulated[i] / n,
            empirical_sigma2: total.sq_err[i] / users,
            se_sigma2: se.as_ref().map(|s| s[i]),
        })
        .collect())
}

fn trace_trial(system: &SystemConfig, kind: DetectorKind, tmax: usize, trial: u64) -> Result<Sums> {
    let mut rng = stream_rng(system.seed, 0, trial);
    let r = sample_realization(system, &mut rng);
    let mut sums = Sums::zeros(tmax);
    let mut record = |reference: &DVector<Complex64>, v: &IterationView<'_>| {
        let i = v.t - 1;
        sums.tau[i] = v.tau;
        sums.postulated[i] = v.sigma2();
        sums.sq_err[i] = (v.z - reference).norm_squared();
    };
    match kind {
        DetectorKind::LamaI | DetectorKind::Lama => {
            let nt = if kind == DetectorKind::LamaI {
                system.n_t()
            } else {
                0.0
            };
            let d = GaussianMixtureDenoiser::new(system.constellation.clone(), nt)?;
            AmpDetector::new(d, system.n0, tmax)?
                .without_early_stop()
                .detect_with(&r.y, &r.h, |v| record(&r.x, v))?;
        }
        DetectorKind::LamaWhitened => {
            let w = whitening::whiten(&r.h, &r.y, system.n0, system.n_t())?;
            let d = GaussianMixtureDenoiser::new(system.constellation.clone(), 0.0)?;
            AmpDetector::new(d, w.noise_variance, tmax)?
                .without_early_stop()
                .detect_with(&w.y, &w.h, |v| record(&r.s, v))?;
        }
    }
    Ok(sums)
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "t",
        "tau",
        "postulated_sigma2",
        "empirical_sigma2",
        "se_sigma2",
    ])?;
    for r in rows {
        out.write_record([
            r.t.to_string(),
            r.tau.to_string(),
            r.postulated_sigma2.to_string(),
            r.empirical_sigma2.to_string(),
            r.se_sigma2.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
