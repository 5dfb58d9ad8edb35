//! Symbol error rate of MAP detection on the decoupled scalar channel
//! `z = s + e + w`, `e ~ CN(0, N_T)`, `w ~ CN(0, sigma^2)`.

use crate::constellation::Constellation;
use crate::denoiser::map_decide;
use crate::random::{categorical, complex_normal, stream_rng};

/// Scalar Monte Carlo sample count for constellations without a closed form.
pub const SCALAR_SER_SAMPLES: usize = 10_000_000;

/// Gaussian tail `Q(u) = P(N(0,1) > u)`.
pub fn q_function(u: f64) -> f64 {
    0.5 * libm::erfc(u / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSer {
    pub ser: f64,
    pub stderr: f64,
}

/// Predicted SER for total per-symbol noise `N_T + sigma2`.
///
/// Uniform QPSK on the axes and uniform antipodal pairs use the closed
/// forms; other constellations fall back to [`scalar_ser_monte_carlo`].
pub fn predicted_ser(c: &Constellation, n_t: f64, sigma2: f64, seed: u64) -> f64 {
    let v = n_t + sigma2;
    if c.is_axis_qpsk() {
        let d = c.point(0).re.abs();
        let q = q_function(d * (2.0 / v).sqrt());
        return 2.0 * q - q * q;
    }
    if c.is_antipodal() {
        let d = c.point(0).norm();
        return q_function(d * (2.0 / v).sqrt());
    }
    scalar_ser_monte_carlo(c, n_t, sigma2, SCALAR_SER_SAMPLES, seed).ser
}

/// SER of `map_decide` on the scalar channel by simulation.
pub fn scalar_ser_monte_carlo(
    c: &Constellation,
    n_t: f64,
    sigma2: f64,
    samples: usize,
    seed: u64,
) -> ScalarSer {
    let mut rng = stream_rng(seed, 0, 0);
    let mut errors = 0usize;
    for _ in 0..samples {
        let k = categorical(&mut rng, c.priors());
        let mut z = c.point(k) + complex_normal(&mut rng, sigma2);
        if n_t > 0.0 {
            z += complex_normal(&mut rng, n_t);
        }
        if map_decide(z, sigma2, c, n_t) != k {
            errors += 1;
        }
    }
    let p = errors as f64 / samples as f64;
    ScalarSer {
        ser: p,
        stderr: (p * (1.0 - p) / samples as f64).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::StandardConstellation;

    fn qpsk() -> Constellation {
        Constellation::standard(StandardConstellation::Qpsk, true)
    }

    #[test]
    fn q_function_values() {
        assert!((q_function(0.0) - 0.5).abs() < 1e-15);
        // standard normal upper tail at sqrt(10)
        assert!((q_function(10f64.sqrt()) - 7.827e-4).abs() < 1e-7);
    }

    #[test]
    fn qpsk_closed_form_example() {
        let ser = predicted_ser(&qpsk(), 0.05, 0.05, 0);
        assert!((ser - 1.565e-3).abs() < 1e-6, "{ser}");
    }

    #[test]
    fn vanishing_noise_gives_no_errors() {
        assert!(predicted_ser(&qpsk(), 0.0, 1e-4, 0) < 1e-300);
    }

    #[test]
    fn closed_form_matches_simulation() {
        let k = qpsk();
        for (nt, s2) in [(0.1, 0.05), (0.0, 0.3), (0.2, 0.2)] {
            let exact = predicted_ser(&k, nt, s2, 0);
            let mc = scalar_ser_monte_carlo(&k, nt, s2, 400_000, 9);
            assert!(
                (mc.ser - exact).abs() < 3.0 * mc.stderr,
                "{nt} {s2}: {} vs {exact}",
                mc.ser
            );
        }
        let bpsk = Constellation::standard(StandardConstellation::Bpsk, true);
        let exact = predicted_ser(&bpsk, 0.1, 0.2, 0);
        let mc = scalar_ser_monte_carlo(&bpsk, 0.1, 0.2, 400_000, 10);
        assert!((mc.ser - exact).abs() < 3.0 * mc.stderr);
    }

    #[test]
    fn non_uniform_prior_uses_simulation() {
        let k = Constellation::new(qpsk().points().to_vec(), vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let a = predicted_ser(&k, 0.1, 0.1, 5);
        assert!(a > 0.0 && a < 0.1);
    }
}
