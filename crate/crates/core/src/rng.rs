//! Portable seeded randomness.
//!
//! All sampling in the crate goes through [`PortableRng`]: a ChaCha20 stream
//! cipher generator (`rand_chacha::ChaCha20Rng`, seeded with
//! `SeedableRng::seed_from_u64`), 53-bit uniform doubles, and the Box-Muller
//! transform evaluated with `libm` so the normal draws do not depend on the
//! platform math library.
//!
//! Child seeds are derived with [`split_seed`], a SplitMix64 finalizer chain
//! over `(master, stream tag, index)`. There is no shared mutable generator:
//! every consumer constructs its own generator from a derived seed.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream tags for [`split_seed`].
pub mod stream {
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const DROPOUT_1: u64 = 0x4452_4f31;
    pub const DROPOUT_2: u64 = 0x4452_4f32;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const PROBE: u64 = 0x5052_4f42;
    pub const INIT: u64 = 0x494e_4954;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `hash64(master, tag, index) = sm(sm(sm(master) ^ tag) ^ index)` where `sm`
/// is the SplitMix64 step.
pub fn split_seed(master: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ tag) ^ index)
}

#[derive(Clone, Debug)]
pub struct PortableRng {
    inner: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl PortableRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Same key as `new(seed)` but on an independent ChaCha stream.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            inner,
            spare_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `0..n` (multiply-shift; `n` must be nonzero).
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal draw via Box-Muller; both outputs of a pair are used.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
