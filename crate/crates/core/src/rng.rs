//! Deterministic counter-based random streams.
//!
//! The generator is SplitMix64 written in counter form: output `i` of a
//! stream is a pure function of `(seed, i)`. Child streams are derived from
//! `(seed, label)` without consuming parent state, so weight init, data
//! shuffling, and dataset synthesis each own an independent stream whose
//! draws do not depend on call order or on how many workers run.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SPLIT_SALT: u64 = 0xA24B_AED4_963E_E407;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seeded deterministic stream. State is `(seed, counter)`, both of which
/// round-trip through checkpoints exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamRng {
    seed: u64,
    counter: u64,
}

impl StreamRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    /// Restore a stream at an exact position.
    pub fn from_state(seed: u64, counter: u64) -> Self {
        Self { seed, counter }
    }

    pub fn state(&self) -> (u64, u64) {
        (self.seed, self.counter)
    }

    /// Derive an independent child stream from a label. Does not consume
    /// draws from `self`, so the derivation is position-independent.
    pub fn child(&self, label: u64) -> StreamRng {
        StreamRng::new(mix(self.seed ^ label.wrapping_mul(SPLIT_SALT)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in (0, 1].
    pub fn next_uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw via Box-Muller. Each draw consumes exactly two
    /// uniforms; no pair state is carried between calls.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `[0, bound)` by rejection-free scaling. `bound`
    /// must be nonzero. Used for Fisher-Yates shuffles; the tiny modulo bias
    /// at 2^64 scale is irrelevant for shuffling and keeps draws exactly one
    /// `u64` each.
    pub fn next_below(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (self.next_u64() % bound as u64) as usize
    }

    /// Seeded Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.next_below(i + 1);
            idx.swap(i, j);
        }
        idx
    }
}

/// Labels for the well-known child streams.
pub mod stream {
    /// Per-layer weight init: `INIT_BASE + layer_index`.
    pub const INIT_BASE: u64 = 0x1000;
    /// Per-epoch shuffle: `SHUFFLE_BASE + epoch`.
    pub const SHUFFLE_BASE: u64 = 0x2000_0000;
}
