//! Portable deterministic random numbers.
//!
//! Everything random in this crate flows through [`Rng`], a xoshiro256**
//! generator seeded through splitmix64. Both algorithms are fixed by
//! published reference implementations (Blackman & Vigna), so any language
//! can regenerate the exact same datasets, masks, noise and weight
//! initialisations from a seed.
//!
//! Substreams: a stream is identified by `(seed, purpose, index)`. The three
//! words are mixed through splitmix64 into the four state words, so distinct
//! purposes and indices give independent streams and generation order never
//! depends on how work is scheduled.

/// Stream purpose tags. Keeping them in one place avoids accidental overlap.
pub mod purpose {
    pub const PHANTOM_TRAIN: u64 = 1;
    pub const PHANTOM_TEST: u64 = 2;
    pub const COIL_MAPS: u64 = 3;
    pub const IMAGE_NOISE: u64 = 4;
    pub const MASK: u64 = 5;
    pub const KSPACE_NOISE: u64 = 6;
    pub const WEIGHT_INIT: u64 = 7;
    pub const TRAIN_NOISE: u64 = 8;
    pub const TRAIN_PROBE: u64 = 9;
    pub const TRAIN_SHUFFLE: u64 = 10;
    pub const POWER_ITER: u64 = 11;
    pub const PENALTY_PROBE: u64 = 12;
    pub const PHANTOM: u64 = 13;
}

/// Collapses `(seed, purpose, index)` into a single derived seed, for APIs
/// that take a bare seed but are fed from a parent stream.
pub fn derive_seed(seed: u64, purpose: u64, index: u64) -> u64 {
    let mut sm = seed ^ purpose.wrapping_mul(0xa076_1d64_78bd_642f) ^ index.wrapping_mul(0xe703_7ed1_a0b4_28db);
    splitmix64(&mut sm)
}

/// splitmix64 step; used only to expand seeds into state words.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// xoshiro256** generator with derived substreams.
#[derive(Clone, Debug)]
pub struct Rng {
    state: [u64; 4],
    /// Second Box-Muller normal, held for the next call.
    spare_normal: Option<f64>,
}

impl Rng {
    /// Stream identified by `(seed, purpose, index)`.
    pub fn from_stream(seed: u64, purpose: u64, index: u64) -> Self {
        let mut sm = seed ^ purpose.wrapping_mul(0xa076_1d64_78bd_642f) ^ index.wrapping_mul(0xe703_7ed1_a0b4_28db);
        let mut state = [0u64; 4];
        for word in state.iter_mut() {
            *word = splitmix64(&mut sm);
        }
        // xoshiro state must not be all zero; splitmix64 output makes this
        // astronomically unlikely, but the guard costs nothing.
        if state == [0, 0, 0, 0] {
            state[0] = 1;
        }
        Rng { state, spare_normal: None }
    }

    /// Plain stream for a bare seed.
    pub fn from_seed(seed: u64) -> Self {
        Self::from_stream(seed, 0, 0)
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n). n must be nonzero.
    ///
    /// Simple multiply-shift reduction; the modulo bias at 64 bits is far
    /// below anything observable here.
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Standard normal via Box-Muller. Pairs are generated together and the
    /// second value is returned on the following call.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher-Yates shuffle of `items`, deterministic in generation order.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below((i + 1) as u64) as usize;
            items.swap(i, j);
        }
    }
}
