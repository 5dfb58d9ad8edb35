//! Posterior moments by direct numerical integration of
//! `f(x | z, sigma2) ~ CN(z; x, sigma2) p(x)`.
//!
//! Nothing here uses the completed-square forms of the closed-form
//! denoiser: each prior component is multiplied against the likelihood on a
//! uniform grid and summed. Because both factors of every mixture component
//! separate into real and imaginary parts, the 2-D trapezoid sums factor
//! into products of 1-D sums over the same tensor grid.

use num_complex::Complex64;

use super::{DenoiserInput, PosteriorSummary};
use crate::error::{Error, Result};

const MAX_NODES_PER_AXIS: usize = 2_000_000;
const CONSISTENCY_TOL: f64 = 1e-4;

/// Grid layout for the quadrature oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    /// Margin around the observation and the constellation, in units of the
    /// widest standard deviation in play. Must be at least 8.
    pub half_width_stds: f64,
    /// Grid nodes per narrowest standard deviation.
    pub nodes_per_std: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            half_width_stds: 10.0,
            nodes_per_std: 1.5,
        }
    }
}

/// Uniform grid on one axis.
#[derive(Debug, Clone)]
struct Axis {
    start: f64,
    step: f64,
    len: usize,
}

impl Axis {
    fn node(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }
}

/// 1-D sums of `x^k g(x)` for k = 0, 1, 2, each with its exponent shifted by
/// `shift` to stay in range. `stride` 2 reuses every other node.
#[derive(Debug, Clone, Copy)]
struct AxisMoments {
    shift: f64,
    m0: f64,
    m1: f64,
    m2: f64,
}

fn axis_moments(axis: &Axis, stride: usize, exponent: impl Fn(f64) -> f64) -> AxisMoments {
    let shift = (0..axis.len)
        .step_by(stride)
        .map(|i| exponent(axis.node(i)))
        .fold(f64::NEG_INFINITY, f64::max);
    let h = axis.step * stride as f64;
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for i in (0..axis.len).step_by(stride) {
        let x = axis.node(i);
        let g = (exponent(x) - shift).exp() * h;
        m0 += g;
        m1 += g * x;
        m2 += g * x * x;
    }
    AxisMoments { shift, m0, m1, m2 }
}

/// Per-component log mass and conditional moments.
struct Component {
    log_mass: f64,
    mean: Complex64,
    second: f64,
}

fn integrate(
    input: &DenoiserInput<'_>,
    re: &Axis,
    im: &Axis,
    stride: usize,
) -> Vec<Option<Component>> {
    let DenoiserInput {
        z,
        sigma2,
        constellation,
        n_t,
    } = *input;
    constellation
        .points()
        .iter()
        .zip(constellation.priors())
        .map(|(a, &p)| {
            if p <= 0.0 {
                return None;
            }
            // likelihood exp(-|z-x|^2/sigma2) times component exp(-|x-a|^2/N_T)
            let r = axis_moments(re, stride, |x| {
                -(z.re - x).powi(2) / sigma2 - (x - a.re).powi(2) / n_t
            });
            let i = axis_moments(im, stride, |x| {
                -(z.im - x).powi(2) / sigma2 - (x - a.im).powi(2) / n_t
            });
            let log_mass =
                p.ln() - (std::f64::consts::PI * n_t).ln() + r.shift + i.shift + (r.m0 * i.m0).ln();
            Some(Component {
                log_mass,
                mean: Complex64::new(r.m1 / r.m0, i.m1 / i.m0),
                second: r.m2 / r.m0 + i.m2 / i.m0,
            })
        })
        .collect()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Posterior mean and variance by grid quadrature. With `n_t = 0` the
/// prior is a set of atoms and the integral collapses to a weighted sum.
pub fn brute_force_f_g(
    input: &DenoiserInput<'_>,
    spec: &QuadratureSpec,
) -> Result<PosteriorSummary> {
    if spec.half_width_stds < 8.0 {
        return Err(Error::Config(format!(
            "quadrature half-width {} must cover at least 8 standard deviations",
            spec.half_width_stds
        )));
    }
    if !(spec.nodes_per_std > 0.0) {
        return Err(Error::Config("nodes_per_std must be positive".into()));
    }
    let DenoiserInput {
        z,
        sigma2,
        constellation,
        n_t,
    } = *input;

    if n_t == 0.0 {
        return Ok(atomic_posterior(z, sigma2, constellation));
    }

    let widest = (sigma2.max(n_t) / 2.0).sqrt();
    let narrowest = (sigma2.min(n_t) / 4.0).sqrt();
    let step = narrowest / spec.nodes_per_std;
    let margin = spec.half_width_stds * widest;
    let axis = |vals: &mut dyn Iterator<Item = f64>| -> Result<Axis> {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        let start = lo - margin;
        let len = ((hi + margin - start) / step).ceil() as usize + 1;
        if len > MAX_NODES_PER_AXIS {
            return Err(Error::Tolerance(format!(
                "quadrature grid needs {len} nodes per axis"
            )));
        }
        Ok(Axis { start, step, len })
    };
    let re_axis =
        axis(&mut std::iter::once(z.re).chain(constellation.points().iter().map(|a| a.re)))?;
    let im_axis =
        axis(&mut std::iter::once(z.im).chain(constellation.points().iter().map(|a| a.im)))?;

    let fine = integrate(input, &re_axis, &im_axis, 1);
    let coarse = integrate(input, &re_axis, &im_axis, 2);

    let masses = |comps: &[Option<Component>]| {
        log_sum_exp(
            comps
                .iter()
                .flatten()
                .map(|c| c.log_mass)
                .collect::<Vec<_>>()
                .into_iter(),
        )
    };
    let log_z = masses(&fine);
    let log_z_coarse = masses(&coarse);
    let drift = (log_z - log_z_coarse).exp_m1().abs();
    if !(drift <= CONSISTENCY_TOL) {
        return Err(Error::Tolerance(format!(
            "normalization changes by {drift:e} when the grid step doubles"
        )));
    }

    let weights: Vec<f64> = fine
        .iter()
        .map(|c| c.as_ref().map_or(0.0, |c| (c.log_mass - log_z).exp()))
        .collect();
    let mut mean = Complex64::new(0.0, 0.0);
    let mut second = 0.0;
    for (w, comp) in weights.iter().zip(&fine) {
        if let Some(comp) = comp {
            mean += comp.mean * *w;
            second += w * comp.second;
        }
    }
    Ok(PosteriorSummary {
        mean,
        variance: (second - mean.norm_sqr()).max(0.0),
        weights,
    })
}

fn atomic_posterior(
    z: Complex64,
    sigma2: f64,
    c: &crate::constellation::Constellation,
) -> PosteriorSummary {
    let logs: Vec<f64> = c
        .points()
        .iter()
        .zip(c.priors())
        .map(|(a, &p)| {
            if p > 0.0 {
                p.ln() - (z - a).norm_sqr() / sigma2
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let log_z = log_sum_exp(logs.iter().cloned());
    let weights: Vec<f64> = logs.iter().map(|l| (l - log_z).exp()).collect();
    let mean: Complex64 = c.points().iter().zip(&weights).map(|(a, w)| a * w).sum();
    let second: f64 = c
        .points()
        .iter()
        .zip(&weights)
        .map(|(a, w)| w * a.norm_sqr())
        .sum();
    PosteriorSummary {
        mean,
        variance: (second - mean.norm_sqr()).max(0.0),
        weights,
    }
}

/// Rectangular 2-D grid for priors given only as a density.
#[derive(Debug, Clone, Copy)]
pub struct Grid2d {
    pub re_range: (f64, f64),
    pub im_range: (f64, f64),
    pub step: f64,
}

/// Posterior mean and variance for an arbitrary effective prior density on
/// an explicit 2-D grid. This is the route for impairment models without a
/// closed-form denoiser.
pub fn grid_posterior_moments(
    z: Complex64,
    sigma2: f64,
    prior_pdf: impl Fn(Complex64) -> f64,
    grid: &Grid2d,
) -> Result<(Complex64, f64)> {
    if !(grid.step > 0.0) {
        return Err(Error::Config("grid step must be positive".into()));
    }
    let nr = ((grid.re_range.1 - grid.re_range.0) / grid.step).ceil() as usize + 1;
    let ni = ((grid.im_range.1 - grid.im_range.0) / grid.step).ceil() as usize + 1;
    let mut norm = 0.0;
    let mut first = Complex64::new(0.0, 0.0);
    let mut second = 0.0;
    for i in 0..nr {
        for j in 0..ni {
            let x = Complex64::new(
                grid.re_range.0 + i as f64 * grid.step,
                grid.im_range.0 + j as f64 * grid.step,
            );
            let f = (-(z - x).norm_sqr() / sigma2).exp() * prior_pdf(x);
            norm += f;
            first += x * f;
            second += f * x.norm_sqr();
        }
    }
    if !(norm > 0.0) {
        return Err(Error::Tolerance(
            "posterior mass vanished on the grid".into(),
        ));
    }
    let mean = first / norm;
    Ok((mean, (second / norm - mean.norm_sqr()).max(0.0)))
}
