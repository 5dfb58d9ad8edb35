//! Posterior mean `F`, posterior variance `G` and the per-user MAP decision
//! for an effective transmit prior `sum_a p_a CN(a, N_T)` observed through a
//! scalar AWGN channel of variance `sigma2`.
//!
//! [`posterior_f_g`] evaluates the closed forms literally and returns the
//! softmax weights; [`GaussianMixtureDenoiser`] is the allocation-free
//! version used inside the detector loop. The [`quadrature`] submodule holds
//! a grid-integration oracle that never uses the closed forms.

pub mod quadrature;

use num_complex::Complex64;

use crate::constellation::Constellation;
use crate::error::{Error, Result};

/// Scalar observation `z` with postulated noise variance `sigma2`.
#[derive(Debug, Clone, Copy)]
pub struct DenoiserInput<'a> {
    pub z: Complex64,
    pub sigma2: f64,
    pub constellation: &'a Constellation,
    pub n_t: f64,
}

impl<'a> DenoiserInput<'a> {
    pub fn new(
        z: Complex64,
        sigma2: f64,
        constellation: &'a Constellation,
        n_t: f64,
    ) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Config(format!("sigma2 must be > 0, got {sigma2}")));
        }
        if !(n_t >= 0.0 && n_t.is_finite()) {
            return Err(Error::Config(format!("n_t must be >= 0, got {n_t}")));
        }
        Ok(DenoiserInput {
            z,
            sigma2,
            constellation,
            n_t,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    /// `F(z, sigma2)`
    pub mean: Complex64,
    /// `G(z, sigma2)`
    pub variance: f64,
    /// Posterior weight `w_a` of each constellation point.
    pub weights: Vec<f64>,
}

/// Softmax weights `w_a ~ p_a exp(-|z - a|^2 / (N_T + sigma2))`, computed with
/// the largest exponent subtracted. Points with `p_a = 0` get weight 0.
pub fn softmax_weights(z: Complex64, temperature: f64, c: &Constellation) -> Vec<f64> {
    let exponents: Vec<f64> = c
        .points()
        .iter()
        .zip(c.priors())
        .map(|(a, &p)| {
            if p > 0.0 {
                p.ln() - (z - a).norm_sqr() / temperature
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = exponents.iter().map(|e| (e - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Closed-form posterior mean and variance for the Gaussian transmit-noise
/// prior, written term by term.
pub fn posterior_f_g(input: &DenoiserInput<'_>) -> PosteriorSummary {
    let DenoiserInput {
        z,
        sigma2,
        constellation: c,
        n_t,
    } = *input;
    let weights = softmax_weights(z, n_t + sigma2, c);
    if n_t == 0.0 {
        // discrete prior: plain posterior over the atoms
        let mean: Complex64 = c.points().iter().zip(&weights).map(|(a, w)| a * w).sum();
        let variance = c
            .points()
            .iter()
            .zip(&weights)
            .map(|(a, w)| w * (a - mean).norm_sqr())
            .sum();
        return PosteriorSummary {
            mean,
            variance,
            weights,
        };
    }
    let denom = n_t + sigma2;
    let soft: Complex64 = c.points().iter().zip(&weights).map(|(a, w)| a * w).sum();
    let mean = z * (n_t / denom) + soft * (sigma2 / denom);
    let spread: f64 = c
        .points()
        .iter()
        .zip(&weights)
        .map(|(a, w)| w * ((z * n_t + a * sigma2) / denom - mean).norm_sqr())
        .sum();
    PosteriorSummary {
        mean,
        variance: n_t * sigma2 / denom + spread,
        weights,
    }
}

/// MAP symbol decision `argmin_a |z - a|^2 / (N_T + sigma2_eff) - ln p_a`.
/// Zero-prior points are never chosen; ties go to the lowest index.
pub fn map_decide(z: Complex64, sigma2_eff: f64, c: &Constellation, n_t: f64) -> usize {
    let scale = 1.0 / (n_t + sigma2_eff);
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (i, (a, &p)) in c.points().iter().zip(c.priors()).enumerate() {
        if p <= 0.0 {
            continue;
        }
        let cost = (z - a).norm_sqr() * scale - p.ln();
        if cost < best_cost {
            best_cost = cost;
            best = i;
        }
    }
    best
}

/// Element-wise denoiser consumed by the message-passing detector and the
/// state-evolution code.
pub trait Denoiser: Sync {
    /// Returns `(F(z, sigma2), G(z, sigma2))`.
    fn mean_variance(&self, z: Complex64, sigma2: f64) -> (Complex64, f64);

    /// Hard decision from the final decoupled observation; returns a point index.
    fn decide(&self, z: Complex64, sigma2_eff: f64) -> usize;

    fn prior_mean(&self) -> Complex64;

    fn prior_variance(&self) -> f64;

    fn constellation(&self) -> &Constellation;
}

/// Posterior-mean denoiser for `x = s + e`, `e ~ CN(0, N_T)`. With `N_T = 0`
/// it is the impairment-agnostic discrete-prior denoiser.
#[derive(Debug, Clone)]
pub struct GaussianMixtureDenoiser {
    constellation: Constellation,
    n_t: f64,
    active: Vec<(Complex64, f64)>,
}

impl GaussianMixtureDenoiser {
    pub fn new(constellation: Constellation, n_t: f64) -> Result<Self> {
        if !(n_t >= 0.0 && n_t.is_finite()) {
            return Err(Error::Config(format!("n_t must be >= 0, got {n_t}")));
        }
        let active = constellation
            .points()
            .iter()
            .zip(constellation.priors())
            .filter(|(_, &p)| p > 0.0)
            .map(|(&a, &p)| (a, p.ln()))
            .collect();
        Ok(GaussianMixtureDenoiser {
            constellation,
            n_t,
            active,
        })
    }

    pub fn n_t(&self) -> f64 {
        self.n_t
    }

    /// Softmax mean `sum_a w_a a` and spread `sum_a w_a |a - mean|^2`.
    #[inline]
    fn soft_symbol(&self, z: Complex64, temperature: f64) -> (Complex64, f64) {
        let inv = 1.0 / temperature;
        let mut max = f64::NEG_INFINITY;
        for (a, lp) in &self.active {
            let e = lp - (z - a).norm_sqr() * inv;
            if e > max {
                max = e;
            }
        }
        let mut total = 0.0;
        let mut first = Complex64::new(0.0, 0.0);
        let mut second = 0.0;
        for (a, lp) in &self.active {
            let w = (lp - (z - a).norm_sqr() * inv - max).exp();
            total += w;
            first += a * w;
            second += w * a.norm_sqr();
        }
        let mean = first / total;
        let spread = (second / total - mean.norm_sqr()).max(0.0);
        (mean, spread)
    }
}

impl Denoiser for GaussianMixtureDenoiser {
    #[inline]
    fn mean_variance(&self, z: Complex64, sigma2: f64) -> (Complex64, f64) {
        if self.n_t == 0.0 {
            return self.soft_symbol(z, sigma2);
        }
        let denom = self.n_t + sigma2;
        let (soft, spread) = self.soft_symbol(z, denom);
        let shrink = sigma2 / denom;
        let mean = z * (self.n_t / denom) + soft * shrink;
        (mean, self.n_t * shrink + shrink * shrink * spread)
    }

    fn decide(&self, z: Complex64, sigma2_eff: f64) -> usize {
        map_decide(z, sigma2_eff, &self.constellation, self.n_t)
    }

    fn prior_mean(&self) -> Complex64 {
        self.constellation.moments().0
    }

    fn prior_variance(&self) -> f64 {
        self.constellation.moments().1 + self.n_t
    }

    fn constellation(&self) -> &Constellation {
        &self.constellation
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::StandardConstellation;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn qpsk() -> Constellation {
        Constellation::standard(StandardConstellation::Qpsk, true)
    }

    #[test]
    fn single_point_is_wiener() {
        let a = c(0.3, -0.8);
        let k = Constellation::new(vec![a], vec![1.0]).unwrap();
        for (z, s2, nt) in [
            (c(1.0, 2.0), 0.2, 0.1),
            (c(-3.0, 0.5), 1.5, 0.01),
            (a, 0.3, 2.0),
        ] {
            let out = posterior_f_g(&DenoiserInput::new(z, s2, &k, nt).unwrap());
            let f = (z * nt + a * s2) / (nt + s2);
            let g = nt * s2 / (nt + s2);
            assert!((out.mean - f).norm() < 1e-15);
            assert!((out.variance - g).abs() < 1e-16);
            assert_eq!(out.weights, vec![1.0]);
        }
    }

    #[test]
    fn huge_transmit_noise_passes_observation_through() {
        let k = qpsk();
        let z = c(0.37, -1.4);
        let s2 = 0.3;
        let out = posterior_f_g(&DenoiserInput::new(z, s2, &k, 1e9).unwrap());
        assert!((out.mean - z).norm() / z.norm() < 1e-6);
        assert!((out.variance - s2).abs() / s2 < 1e-6);
    }

    #[test]
    fn qpsk_origin_symmetry() {
        let k = qpsk();
        let out = posterior_f_g(&DenoiserInput::new(c(0.0, 0.0), 0.2, &k, 0.1).unwrap());
        for w in &out.weights {
            assert!((w - 0.25).abs() < 1e-15);
        }
        assert!(out.mean.norm() < 1e-15);
        // N_T s2/(N_T+s2) + (s2/(N_T+s2))^2 * Var[S]
        let expected = 0.1 * 0.2 / 0.3 + (0.2f64 / 0.3).powi(2);
        assert!((out.variance - expected).abs() < 1e-14);
    }

    #[test]
    fn softmax_survives_high_snr() {
        let k = qpsk();
        let out = posterior_f_g(&DenoiserInput::new(c(40.0, -35.0), 1e-6, &k, 0.0).unwrap());
        assert!(out.weights.iter().all(|w| w.is_finite()));
        assert!((out.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out.mean.re.is_finite());
    }

    #[test]
    fn invalid_input_rejected() {
        let k = qpsk();
        assert!(DenoiserInput::new(c(0.0, 0.0), 0.0, &k, 0.1).is_err());
        assert!(DenoiserInput::new(c(0.0, 0.0), 1.0, &k, -0.1).is_err());
    }

    #[test]
    fn map_prior_pulls_decision() {
        let k = Constellation::new(vec![c(1.0, 0.0), c(-1.0, 0.0)], vec![0.9, 0.1]).unwrap();
        // cost(+1) = 1.0201 - ln 0.9, cost(-1) = 0.9801 - ln 0.1
        let plus = 1.0201 - 0.9f64.ln();
        let minus = 0.9801 - 0.1f64.ln();
        assert!((plus - 1.1255).abs() < 1e-4);
        assert!((minus - 3.2827).abs() < 1e-4);
        // N_T + sigma2_eff = 1
        assert_eq!(map_decide(c(-0.01, 0.0), 0.6, &k, 0.4), 0);
    }

    #[test]
    fn map_skips_zero_prior() {
        let k = Constellation::new(vec![c(1.0, 0.0), c(-1.0, 0.0)], vec![1.0, 0.0]).unwrap();
        assert_eq!(map_decide(c(-1.0, 0.0), 0.1, &k, 0.0), 0);
    }

    #[test]
    fn map_identity_on_points() {
        let k = Constellation::standard(StandardConstellation::Qam16, true);
        for i in 0..k.len() {
            assert_eq!(map_decide(k.point(i), 0.05, &k, 0.1), i);
        }
    }

    #[test]
    fn shrinkage_bound() {
        for kind in StandardConstellation::ALL {
            let k = Constellation::standard(kind, true);
            for nt in [0.0, 0.05, 0.5] {
                let d = GaussianMixtureDenoiser::new(k.clone(), nt).unwrap();
                for i in -20..=20 {
                    for s2 in [1e-3, 0.1, 1.0, 10.0] {
                        let z = c(0.1 * i as f64, -0.07 * i as f64);
                        let (_, g) = d.mean_variance(z, s2);
                        assert!(g >= 0.0 && g <= d.prior_variance() + 1e-12);
                    }
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn weights_on_simplex(re in -4.0f64..4.0, im in -4.0f64..4.0,
                              s2 in 1e-4f64..10.0, nt in 0.0f64..2.0, kind in 0usize..5) {
            let k = Constellation::standard(StandardConstellation::ALL[kind], true);
            let out = posterior_f_g(&DenoiserInput::new(c(re, im), s2, &k, nt).unwrap());
            prop_assert!(out.weights.iter().all(|w| (0.0..=1.0).contains(w)));
            prop_assert!((out.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(out.variance >= 0.0);
        }

        #[test]
        fn fast_path_matches_literal(re in -3.0f64..3.0, im in -3.0f64..3.0,
                                     s2 in 1e-3f64..5.0, nt in 0.0f64..2.0, kind in 0usize..5) {
            let k = Constellation::standard(StandardConstellation::ALL[kind], true);
            let z = c(re, im);
            let lit = posterior_f_g(&DenoiserInput::new(z, s2, &k, nt).unwrap());
            let d = GaussianMixtureDenoiser::new(k, nt).unwrap();
            let (f, g) = d.mean_variance(z, s2);
            prop_assert!((f - lit.mean).norm() < 1e-12);
            prop_assert!((g - lit.variance).abs() < 1e-12);
        }

        #[test]
        fn zero_transmit_noise_is_discrete_denoiser(re in -3.0f64..3.0, im in -3.0f64..3.0,
                                                     s2 in 1e-3f64..5.0, kind in 0usize..5) {
            let k = Constellation::standard(StandardConstellation::ALL[kind], true);
            let z = c(re, im);
            // impairment-free posterior over the atoms, computed from scratch
            let lik: Vec<f64> = k.points().iter().zip(k.priors())
                .map(|(a, p)| p * (-(z - a).norm_sqr() / s2).exp()).collect();
            let tot: f64 = lik.iter().sum();
            prop_assume!(tot > 1e-250);
            let mean: Complex64 = k.points().iter().zip(&lik).map(|(a, l)| a * (l / tot)).sum();
            let var: f64 = k.points().iter().zip(&lik).map(|(a, l)| l / tot * (a - mean).norm_sqr()).sum();
            let d = GaussianMixtureDenoiser::new(k, 0.0).unwrap();
            let (f, g) = d.mean_variance(z, s2);
            prop_assert!((f - mean).norm() < 1e-12);
            prop_assert!((g - var).abs() < 1e-12);
        }

        #[test]
        fn uniform_map_equals_hard_decision(re in -3.0f64..3.0, im in -3.0f64..3.0,
                                            v in 1e-3f64..10.0, nt in 0.0f64..1.0, kind in 0usize..5) {
            let k = Constellation::standard(StandardConstellation::ALL[kind], true);
            let z = c(re, im);
            prop_assert_eq!(map_decide(z, v, &k, nt), k.hard_decision_index(z));
        }
    }
}
