//! Whitening of the impaired model.
//!
//! The effective noise `n + H e` has covariance `Q = N_T H H^H + N0 I`.
//! Applying `W = sqrt(N0 + N_T) Q^{-1/2}` yields `W y = (W H) s + w` with
//! white noise of variance `N0 + N_T`. The extra scalar keeps the columns of
//! `W H` near unit energy, which the message-passing recursion relies on,
//! and makes `W = I` when `N_T = 0`.
//!
//! `Q^{-1/2}` comes from a Hermitian eigendecomposition. When `M_T < M_R`
//! the decomposition of the `M_T x M_T` Gram matrix `H^H H` gives the same
//! operator at a fraction of the cost; the full `M_R x M_R` route is kept
//! as the reference.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigenvalues of `Q` are floored at `N0` times this factor.
const EIGEN_FLOOR: f64 = 1e-12;

/// Whitened observation, channel and the resulting noise variance.
#[derive(Debug, Clone)]
pub struct WhitenedSystem {
    pub h: DMatrix<Complex64>,
    pub y: DVector<Complex64>,
    pub noise_variance: f64,
}

fn check_inputs(h: &DMatrix<Complex64>, y: &DVector<Complex64>, n0: f64, n_t: f64) -> Result<()> {
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(Error::Whitening(format!("N0 must be > 0, got {n0}")));
    }
    if !(n_t >= 0.0 && n_t.is_finite()) {
        return Err(Error::Whitening(format!("N_T must be >= 0, got {n_t}")));
    }
    if y.len() != h.nrows() {
        return Err(Error::Whitening(format!(
            "y has {} entries, H has {} rows",
            y.len(),
            h.nrows()
        )));
    }
    Ok(())
}

/// `Q = N_T H H^H + N0 I`.
pub fn noise_covariance(h: &DMatrix<Complex64>, n0: f64, n_t: f64) -> DMatrix<Complex64> {
    let mr = h.nrows();
    let mut q = (h * h.adjoint()) * Complex64::new(n_t, 0.0);
    for i in 0..mr {
        q[(i, i)] += n0;
    }
    q
}

/// `Q^{-1/2}` through the eigendecomposition of the full `M_R x M_R` matrix.
pub fn inverse_sqrt_covariance(
    h: &DMatrix<Complex64>,
    n0: f64,
    n_t: f64,
) -> Result<DMatrix<Complex64>> {
    let q = noise_covariance(h, n0, n_t);
    let eig = q.symmetric_eigen();
    let smallest = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(smallest >= n0 * (1.0 - 1e-9)) {
        return Err(Error::Whitening(format!(
            "smallest eigenvalue {smallest:e} of Q is below N0 = {n0:e}"
        )));
    }
    let u = &eig.eigenvectors;
    let scale = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues
            .iter()
            .map(|&l| Complex64::new(l.max(n0 * EIGEN_FLOOR).sqrt().recip(), 0.0)),
    );
    let mut us = u.clone();
    for (j, mut col) in us.column_iter_mut().enumerate() {
        col *= scale[j];
    }
    Ok(us * u.adjoint())
}

/// Whitening via the full `M_R x M_R` eigendecomposition.
pub fn whiten_full(
    h: &DMatrix<Complex64>,
    y: &DVector<Complex64>,
    n0: f64,
    n_t: f64,
) -> Result<WhitenedSystem> {
    check_inputs(h, y, n0, n_t)?;
    let c = n0 + n_t;
    let w = inverse_sqrt_covariance(h, n0, n_t)? * Complex64::new(c.sqrt(), 0.0);
    Ok(WhitenedSystem {
        h: &w * h,
        y: &w * y,
        noise_variance: c,
    })
}

/// Whitening via the eigendecomposition of `H^H H = V diag(mu) V^H`:
///
/// * `W H = sqrt(c) H V diag((N_T mu + N0)^{-1/2}) V^H`
/// * `W y = sqrt(c) (y / sqrt(N0) + B diag(g(mu)) B^H y)`, `B = H V`,
///
/// with `g(mu) = ((N_T mu + N0)^{-1/2} - N0^{-1/2}) / mu` evaluated in a
/// cancellation-free form.
pub fn whiten_gram(
    h: &DMatrix<Complex64>,
    y: &DVector<Complex64>,
    n0: f64,
    n_t: f64,
) -> Result<WhitenedSystem> {
    check_inputs(h, y, n0, n_t)?;
    let c = n0 + n_t;
    let eig = h.ad_mul(h).symmetric_eigen();
    let v = &eig.eigenvectors;
    let b = h * v;
    let sqrt_n0 = n0.sqrt();
    let mut b_scaled = b.clone();
    let mut b_g = b.clone();
    for (k, &mu) in eig.eigenvalues.iter().enumerate() {
        let mu = mu.max(0.0);
        let sa = (n_t * mu + n0).sqrt();
        let g = -n_t / (sa * sqrt_n0 * (sa + sqrt_n0));
        b_scaled.column_mut(k).scale_mut(1.0 / sa);
        b_g.column_mut(k).scale_mut(g);
    }
    let root_c = Complex64::new(c.sqrt(), 0.0);
    let h_w = (b_scaled * v.adjoint()) * root_c;
    let proj = b.ad_mul(y);
    let y_w = (y * Complex64::new(1.0 / sqrt_n0, 0.0) + b_g * proj) * root_c;
    Ok(WhitenedSystem {
        h: h_w,
        y: y_w,
        noise_variance: c,
    })
}

/// Picks the cheaper route; `N_T = 0` returns the system unchanged.
pub fn whiten(
    h: &DMatrix<Complex64>,
    y: &DVector<Complex64>,
    n0: f64,
    n_t: f64,
) -> Result<WhitenedSystem> {
    check_inputs(h, y, n0, n_t)?;
    if n_t == 0.0 {
        return Ok(WhitenedSystem {
            h: h.clone(),
            y: y.clone(),
            noise_variance: n0,
        });
    }
    if h.ncols() < h.nrows() {
        whiten_gram(h, y, n0, n_t)
    } else {
        whiten_full(h, y, n0, n_t)
    }
}
