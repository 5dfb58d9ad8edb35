//! Random streams and circularly-symmetric Gaussian draws.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Draws one `CN(0, var)` sample as two independent real normals of
/// variance `var / 2`.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Draws an index from a probability vector by inversion.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final partial sum; take the last non-zero entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Counter-derived generator: ChaCha8 keyed by `seed`, stream `stream`,
/// positioned at block offset `index << 36`. Distinct `(stream, index)`
/// pairs never overlap as long as one index consumes fewer than 2^36 words.
pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((index as u128) << 36);
    rng
}
