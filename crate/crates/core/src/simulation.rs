//! Channel and signal generation for `y = H (s + e) + n`, plus the SNR and
//! EVM conversions used to parameterize experiments.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::impairment::{GaussianTransmitNoise, ImpairmentModel};
use crate::random::{categorical, complex_normal};

/// Dimensions, noise levels and signal model of one MIMO uplink.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub mr: usize,
    pub mt: usize,
    /// Receive-noise variance `N0` per complex entry.
    pub n0: f64,
    pub constellation: Constellation,
    pub impairment: GaussianTransmitNoise,
    pub seed: u64,
}

impl SystemConfig {
    pub fn new(
        mr: usize,
        mt: usize,
        n0: f64,
        constellation: Constellation,
        impairment: GaussianTransmitNoise,
        seed: u64,
    ) -> Result<Self> {
        if mr == 0 || mt == 0 {
            return Err(Error::Config(format!(
                "antenna counts must be >= 1 (mr={mr}, mt={mt})"
            )));
        }
        if !(n0 > 0.0 && n0.is_finite()) {
            return Err(Error::Config(format!(
                "receive-noise variance must be > 0, got {n0}"
            )));
        }
        Ok(SystemConfig {
            mr,
            mt,
            n0,
            constellation,
            impairment,
            seed,
        })
    }

    /// System ratio `M_T / M_R`.
    pub fn beta(&self) -> f64 {
        self.mt as f64 / self.mr as f64
    }

    pub fn n_t(&self) -> f64 {
        self.impairment.variance()
    }
}

/// One draw of channel, data, impairment and noise.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: DMatrix<Complex64>,
    /// Constellation index of each transmitted symbol.
    pub s_index: Vec<usize>,
    pub s: DVector<Complex64>,
    pub e: DVector<Complex64>,
    pub x: DVector<Complex64>,
    pub n: DVector<Complex64>,
    pub y: DVector<Complex64>,
}

/// Draws `H` with i.i.d. `CN(0, 1/M_R)` entries, symbols from the prior,
/// the impairment, and `CN(0, N0)` receive noise, in that order.
pub fn sample_realization<R: Rng>(cfg: &SystemConfig, rng: &mut R) -> ChannelRealization {
    let h_var = 1.0 / cfg.mr as f64;
    let h = DMatrix::from_fn(cfg.mr, cfg.mt, |_, _| complex_normal(rng, h_var));
    let s_index: Vec<usize> = (0..cfg.mt)
        .map(|_| categorical(rng, cfg.constellation.priors()))
        .collect();
    let s = DVector::from_iterator(cfg.mt, s_index.iter().map(|&i| cfg.constellation.point(i)));
    let e = DVector::from_vec(cfg.impairment.sample_impairment(s.as_slice(), rng));
    let x = &s + &e;
    let n = DVector::from_fn(cfg.mr, |_, _| complex_normal(rng, cfg.n0));
    let y = &h * &x + &n;
    ChannelRealization {
        h,
        s_index,
        s,
        e,
        x,
        n,
        y,
    }
}

/// `N0 = beta Es / 10^(snr_db / 10)`.
pub fn snr_to_n0(snr_db: f64, beta: f64, es: f64) -> f64 {
    beta * es / 10f64.powf(snr_db / 10.0)
}

pub fn n0_to_snr_db(n0: f64, beta: f64, es: f64) -> f64 {
    10.0 * (beta * es / n0).log10()
}

/// `N_T = Es 10^(evm_db / 10)`; `-inf` dB maps to zero.
pub fn evm_to_nt(evm_db: f64, es: f64) -> f64 {
    if evm_db == f64::NEG_INFINITY {
        return 0.0;
    }
    es * 10f64.powf(evm_db / 10.0)
}

pub fn nt_to_evm_db(n_t: f64, es: f64) -> f64 {
    10.0 * (n_t / es).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::StandardConstellation;
    use crate::random::stream_rng;
    use proptest::prelude::*;

    fn qpsk() -> Constellation {
        Constellation::standard(StandardConstellation::Qpsk, true)
    }

    #[test]
    fn snr_conversions() {
        assert!((snr_to_n0(10.0, 8.0 / 128.0, 1.0) - 0.00625).abs() < 1e-15);
        assert!((snr_to_n0(0.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((snr_to_n0(20.0, 1.0, 1.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn evm_conversions() {
        assert!((evm_to_nt(-10.0, 1.0) - 0.1).abs() < 1e-15);
        assert_eq!(evm_to_nt(f64::NEG_INFINITY, 1.0), 0.0);
        assert!((evm_to_nt(0.0, 2.0) - 2.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn conversions_roundtrip(db in -40.0f64..40.0, beta in 0.01f64..4.0, es in 0.1f64..10.0) {
            let n0 = snr_to_n0(db, beta, es);
            prop_assert!((n0_to_snr_db(n0, beta, es) - db).abs() < 1e-12);
            let nt = evm_to_nt(db, es);
            prop_assert!((nt_to_evm_db(nt, es) - db).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(SystemConfig::new(0, 4, 0.1, qpsk(), GaussianTransmitNoise::none(), 0).is_err());
        assert!(SystemConfig::new(4, 4, 0.0, qpsk(), GaussianTransmitNoise::none(), 0).is_err());
    }

    #[test]
    fn composition_holds_exactly() {
        let cfg = SystemConfig::new(
            16,
            4,
            0.1,
            qpsk(),
            GaussianTransmitNoise::new(0.1).unwrap(),
            1,
        )
        .unwrap();
        let r = sample_realization(&cfg, &mut stream_rng(1, 0, 0));
        assert_eq!(r.x, &r.s + &r.e);
        assert_eq!(r.y, &r.h * &r.x + &r.n);
        for (i, s) in r.s_index.iter().zip(r.s.iter()) {
            assert_eq!(cfg.constellation.point(*i), *s);
        }
    }

    #[test]
    fn unimpaired_signal_is_the_data() {
        let cfg = SystemConfig::new(8, 8, 0.1, qpsk(), GaussianTransmitNoise::none(), 1).unwrap();
        let r = sample_realization(&cfg, &mut stream_rng(2, 0, 0));
        assert_eq!(r.x, r.s);
    }

    #[test]
    fn same_stream_same_realization() {
        let cfg = SystemConfig::new(
            32,
            8,
            0.05,
            qpsk(),
            GaussianTransmitNoise::new(0.1).unwrap(),
            9,
        )
        .unwrap();
        let a = sample_realization(&cfg, &mut stream_rng(9, 3, 17));
        let b = sample_realization(&cfg, &mut stream_rng(9, 3, 17));
        assert_eq!(a.h, b.h);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn channel_entry_power() {
        let cfg =
            SystemConfig::new(128, 128, 0.1, qpsk(), GaussianTransmitNoise::none(), 0).unwrap();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0.0;
        let mut col_sum = 0.0;
        let mut col_sq = 0.0;
        let mut cols = 0.0;
        for trial in 0..100 {
            let r = sample_realization(&cfg, &mut stream_rng(0, 0, trial));
            for v in r.h.iter() {
                let p = v.norm_sqr();
                sum += p;
                sum_sq += p * p;
                count += 1.0;
            }
            for col in r.h.column_iter() {
                let p: f64 = col.iter().map(|v| v.norm_sqr()).sum();
                col_sum += p;
                col_sq += p * p;
                cols += 1.0;
            }
        }
        let mean = sum / count;
        let se = ((sum_sq / count - mean * mean) / count).sqrt();
        assert!((mean - 1.0 / 128.0).abs() < 3.0 * se, "{mean} +- {se}");
        let col_mean = col_sum / cols;
        let col_se = ((col_sq / cols - col_mean * col_mean) / cols).sqrt();
        assert!(
            (col_mean - 1.0).abs() < 5.0 * col_se,
            "{col_mean} +- {col_se}"
        );
    }

    #[test]
    fn receive_power_per_antenna() {
        let cfg =
            SystemConfig::new(64, 16, 0.05, qpsk(), GaussianTransmitNoise::none(), 0).unwrap();
        let target = cfg.beta() * cfg.constellation.energy() + cfg.n0;
        let vals: Vec<f64> = (0..2000)
            .map(|t| {
                let r = sample_realization(&cfg, &mut stream_rng(4, 0, t));
                r.y.norm_squared() / cfg.mr as f64
            })
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        let se = (v / vals.len() as f64).sqrt();
        assert!((m - target).abs() < 3.0 * se, "{m} vs {target} +- {se}");
    }
}
