//! Per-path random streams.
//!
//! Every path owns the ChaCha8 stream selected by its index under a common
//! seed. A path's draws therefore depend only on `(seed, path)`, never on
//! which thread simulated it or in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::normal::inverse_normal_cdf;

#[derive(Clone)]
pub struct PathRng {
    inner: ChaCha8Rng,
}

impl PathRng {
    pub fn new(seed: u64, path: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(path);
        PathRng { inner }
    }

    /// Reuses the keyed state of `self` for another path.
    pub fn for_path(&self, path: u64) -> Self {
        let mut inner = self.inner.clone();
        inner.set_stream(path);
        inner.set_word_pos(0);
        PathRng { inner }
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inversion.
    #[inline]
    pub fn normal(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform_open())
    }
}
