//! Recovery thresholds and the fixed-point uniqueness regimes.
//!
//! With `Psi'` the derivative of the MSE curve:
//!
//! * `beta_max = min sigma^2 / Psi(sigma^2)`
//! * `beta_min = min 1 / Psi'(sigma^2)`
//! * `N0_min`, `N0_max`: min and max of `sigma^2 - beta Psi(sigma^2)` over
//!   the points where `beta Psi'(sigma^2) = 1`.
//!
//! All optimizations run over a finite `sigma^2` grid; its endpoints stand in
//! for `sigma^2 -> 0` and `sigma^2 -> inf`.

use serde::{Deserialize, Serialize};

use super::{bisect_log, sign_changes, MseFunction, PsiCurve};
use crate::error::{Error, Result};

/// Uniqueness regime of the fixed point for a given `(beta, N0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `beta <= beta_min`: unique for every `N0`.
    LowLoad,
    /// `beta_min < beta < beta_max` with `N0` outside `[N0_min, N0_max]`.
    IntermediateLoad,
    /// `beta >= beta_max` with `N0 > N0_max`.
    HighLoad,
    /// None of the sufficient conditions holds.
    NotGuaranteed,
}

impl Regime {
    pub fn is_unique(self) -> bool {
        !matches!(self, Regime::NotGuaranteed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub beta_max: f64,
    pub beta_min: f64,
    /// `sigma^2` at which `Psi'` peaks.
    pub beta_min_at: f64,
    pub beta: Option<f64>,
    pub n0: Option<f64>,
    /// Solutions of `beta Psi'(sigma^2) = 1`.
    pub critical_sigma2: Vec<f64>,
    pub n0_min: Option<f64>,
    pub n0_max: Option<f64>,
    pub regime: Option<Regime>,
}

/// Thresholds from a tabulated curve. With `beta` given, the critical noise
/// levels are located and refined against `psi`; with `n0` as well, the
/// regime is classified.
pub fn thresholds(
    psi: &dyn MseFunction,
    curve: &PsiCurve,
    beta: Option<f64>,
    n0: Option<f64>,
) -> Result<ThresholdReport> {
    let beta_max = curve
        .sigma2
        .iter()
        .zip(&curve.psi)
        .filter(|(_, p)| **p > 0.0)
        .map(|(s, p)| s / p)
        .fold(f64::INFINITY, f64::min);
    let (beta_min, beta_min_at) = beta_min_of(curve);

    let mut report = ThresholdReport {
        beta_max,
        beta_min,
        beta_min_at,
        beta,
        n0,
        critical_sigma2: Vec::new(),
        n0_min: None,
        n0_max: None,
        regime: None,
    };
    let Some(beta) = beta else {
        return Ok(report);
    };
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be > 0, got {beta}")));
    }

    let slope: Vec<f64> = curve.dpsi.iter().map(|d| beta * d - 1.0).collect();
    let brackets = sign_changes(&curve.sigma2, &slope);
    if brackets.is_empty() && beta > beta_min && beta < beta_max {
        return Err(Error::Inconsistent(format!(
            "no critical point for beta = {beta} in ({beta_min}, {beta_max}); Psi estimate too noisy"
        )));
    }
    let crit: Vec<f64> = brackets
        .into_iter()
        .map(|(lo, hi)| bisect_log(|s| beta * psi.mse_derivative(s) - 1.0, lo, hi, 50))
        .collect();
    let levels: Vec<f64> = crit.iter().map(|&s| s - beta * psi.mse(s)).collect();
    report.n0_min = levels.iter().cloned().reduce(f64::min);
    report.n0_max = levels.iter().cloned().reduce(f64::max);
    report.critical_sigma2 = crit;

    report.regime = n0.and_then(|n0| report.classify(n0));
    Ok(report)
}

impl ThresholdReport {
    /// Regime at noise level `n0` for the report's `beta`; `None` when the
    /// report was computed without one.
    pub fn classify(&self, n0: f64) -> Option<Regime> {
        let beta = self.beta?;
        if beta <= self.beta_min {
            return Some(Regime::LowLoad);
        }
        let (Some(lo), Some(hi)) = (self.n0_min, self.n0_max) else {
            return Some(Regime::NotGuaranteed);
        };
        Some(if beta < self.beta_max {
            if n0 < lo || n0 > hi {
                Regime::IntermediateLoad
            } else {
                Regime::NotGuaranteed
            }
        } else if n0 > hi {
            Regime::HighLoad
        } else {
            Regime::NotGuaranteed
        })
    }
}

/// `min 1 / Psi'` and where it is attained.
///
/// Secants from `Psi(0) = 0` and between neighbouring grid points are
/// averages of `Psi'`, so they bound its supremum too; including them keeps
/// `beta_min <= beta_max` on a finite grid.
fn beta_min_of(curve: &PsiCurve) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::NAN);
    let mut consider = |slope: f64, at: f64| {
        if slope > 0.0 && 1.0 / slope < best.0 {
            best = (1.0 / slope, at);
        }
    };
    let (mut prev_s, mut prev_p) = (0.0, 0.0);
    for ((&s, &p), &d) in curve.sigma2.iter().zip(&curve.psi).zip(&curve.dpsi) {
        consider(d, s);
        consider((p - prev_p) / (s - prev_s), s);
        (prev_s, prev_p) = (s, p);
    }
    best
}

/// One cell of a `(beta, N0)` regime map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub beta: f64,
    pub n0: f64,
    pub regime: Regime,
    /// Sign changes of `N0 + beta Psi(s) - s` on the curve grid.
    pub fixed_points: usize,
}

/// Regime and fixed-point count over a `beta x N0` grid, row-major in `beta`.
pub fn phase_map(
    psi: &dyn MseFunction,
    curve: &PsiCurve,
    betas: &[f64],
    n0s: &[f64],
) -> Result<Vec<PhaseCell>> {
    let mut cells = Vec::with_capacity(betas.len() * n0s.len());
    for &beta in betas {
        let report = thresholds(psi, curve, Some(beta), None)?;
        for &n0 in n0s {
            cells.push(PhaseCell {
                beta,
                n0,
                regime: report.classify(n0).expect("beta is set"),
                fixed_points: curve.fixed_point_brackets(beta, n0).len(),
            });
        }
    }
    Ok(cells)
}

/// `beta_min` as a function of `N_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaMinScan {
    pub n_t: Vec<f64>,
    pub beta_min: Vec<f64>,
    /// Minimum over the grid.
    pub value: f64,
    pub argmin_n_t: f64,
}

/// Minimum of `beta_min(N_T)` over a grid. `make_curve` tabulates `Psi` for
/// one `N_T`.
pub fn beta_min_over_nt(
    nt_grid: &[f64],
    mut make_curve: impl FnMut(f64) -> Result<PsiCurve>,
) -> Result<BetaMinScan> {
    if nt_grid.is_empty() {
        return Err(Error::Config("empty N_T grid".into()));
    }
    let mut beta_min = Vec::with_capacity(nt_grid.len());
    for &nt in nt_grid {
        let (b, _) = beta_min_of(&make_curve(nt)?);
        beta_min.push(b);
    }
    let (idx, value) =
        beta_min
            .iter()
            .cloned()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, b)| if b < acc.1 { (i, b) } else { acc },
            );
    Ok(BetaMinScan {
        n_t: nt_grid.to_vec(),
        beta_min,
        value,
        argmin_n_t: nt_grid[idx],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{Constellation, StandardConstellation};
    use crate::state_evolution::{log_grid, Psi, PsiSpec};
    use num_complex::Complex64;

    fn single() -> Constellation {
        Constellation::new(vec![Complex64::new(1.0, 0.0)], vec![1.0]).unwrap()
    }

    #[test]
    fn degenerate_prior_thresholds_are_one() {
        let psi = Psi::new(&PsiSpec::closed_form(single(), 0.1)).unwrap();
        let curve = PsiCurve::evaluate(&psi, &PsiCurve::default_grid());
        let r = thresholds(&psi, &curve, None, None).unwrap();
        assert!((r.beta_max - 1.0).abs() < 1e-4, "{}", r.beta_max);
        assert!((r.beta_min - 1.0).abs() < 1e-4, "{}", r.beta_min);
        assert!(r.beta_min <= r.beta_max + 1e-9);
    }

    #[test]
    fn degenerate_prior_is_low_load_below_one() {
        let psi = Psi::new(&PsiSpec::closed_form(single(), 0.1)).unwrap();
        let curve = PsiCurve::evaluate(&psi, &PsiCurve::default_grid());
        let r = thresholds(&psi, &curve, Some(0.5), Some(0.1)).unwrap();
        assert_eq!(r.regime, Some(Regime::LowLoad));
        assert!(r.critical_sigma2.is_empty());
    }

    #[test]
    fn qpsk_unimpaired_thresholds_against_fine_scan() {
        let psi = Psi::new(&PsiSpec::monte_carlo(
            Constellation::standard(StandardConstellation::Qpsk, true),
            0.0,
            100_000,
            11,
        ))
        .unwrap();
        let curve = PsiCurve::evaluate(&psi, &log_grid(1e-3, 1e2, 120));
        let r = thresholds(&psi, &curve, None, None).unwrap();
        // brute-force scan on a finer grid around the optimizers
        let fine = log_grid(1e-2, 10.0, 600);
        let bmax = fine
            .iter()
            .map(|&s| s / psi.mse(s))
            .fold(f64::INFINITY, f64::min);
        let bmin = fine
            .iter()
            .map(|&s| 1.0 / psi.mse_derivative(s))
            .filter(|b| *b > 0.0)
            .fold(f64::INFINITY, f64::min);
        assert!(
            (r.beta_max - bmax).abs() < 5e-3 * bmax,
            "{} vs {bmax}",
            r.beta_max
        );
        assert!(
            (r.beta_min - bmin).abs() < 5e-3 * bmin,
            "{} vs {bmin}",
            r.beta_min
        );
        assert!(r.beta_min <= r.beta_max);
        assert!(
            r.beta_max > 1.0,
            "discrete prior recovers exactly above one user per antenna"
        );
    }

    #[test]
    fn intermediate_load_has_critical_levels() {
        let psi = Psi::new(&PsiSpec::monte_carlo(
            Constellation::standard(StandardConstellation::Qpsk, true),
            0.0,
            100_000,
            12,
        ))
        .unwrap();
        let curve = PsiCurve::evaluate(&psi, &log_grid(1e-3, 1e2, 150));
        let r0 = thresholds(&psi, &curve, None, None).unwrap();
        let beta = 0.5 * (r0.beta_min + r0.beta_max);
        let r = thresholds(&psi, &curve, Some(beta), Some(1e-4)).unwrap();
        let (lo, hi) = (r.n0_min.unwrap(), r.n0_max.unwrap());
        assert!(lo <= hi);
        assert_eq!(r.critical_sigma2.len(), 2);
        for &s in &r.critical_sigma2 {
            assert!((beta * psi.mse_derivative(s) - 1.0).abs() < 1e-6);
        }
        assert!(r.regime.unwrap().is_unique() == (1e-4 < lo));
    }

    #[test]
    fn beta_min_over_degenerate_family_is_one() {
        let grid = log_grid(1e-3, 1.0, 20);
        let scan = beta_min_over_nt(&grid, |nt| {
            let psi = Psi::new(&PsiSpec::closed_form(single(), nt))?;
            Ok(PsiCurve::evaluate(&psi, &PsiCurve::default_grid()))
        })
        .unwrap();
        assert!((scan.value - 1.0).abs() < 1e-4);
        assert!(scan.beta_min.iter().all(|b| scan.value <= *b));
    }

    #[test]
    fn phase_map_is_unique_below_beta_min() {
        let psi = Psi::new(&PsiSpec::closed_form(single(), 0.1)).unwrap();
        let curve = PsiCurve::evaluate(&psi, &PsiCurve::default_grid());
        let n0s = log_grid(1e-3, 1.0, 4);
        let cells = phase_map(&psi, &curve, &[0.3, 0.9], &n0s).unwrap();
        assert_eq!(cells.len(), 8);
        assert!(cells
            .iter()
            .all(|c| c.regime == Regime::LowLoad && c.fixed_points == 1));
        assert_eq!((cells[4].beta, cells[4].n0), (0.9, n0s[0]));
    }
}
