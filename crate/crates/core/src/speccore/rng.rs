//! Counter-based, splittable uniform stream.
//!
//! Draw `k` of a stream with seed `s` is a pure function of `(s, k)`, so any
//! stream can be replayed from its seed and counter alone, and derived
//! streams never share state with their parent.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer: a bijective 64-bit avalanche mix.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine two words into one well-mixed word (order sensitive).
#[inline]
pub fn mix2(a: u64, b: u64) -> u64 {
    mix64(mix64(a).wrapping_add(b.wrapping_mul(GOLDEN_GAMMA)) ^ 0x6a09_e667_f3bc_c909)
}

/// Map a 64-bit word to a uniform variate in `(0, 1]`.
#[inline]
pub fn unit_open_closed(word: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    ((word >> 11) + 1) as f64 * SCALE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, counter: 0 }
    }

    /// Resume a stream at a given draw index.
    pub fn at(seed: u64, counter: u64) -> Self {
        RngStream { seed, counter }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of draws consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// An independent child stream labelled by `stream_id`.
    pub fn derive(&self, stream_id: u64) -> RngStream {
        RngStream::new(mix2(self.seed, stream_id ^ 0x5851_f42d_4c95_7f2d))
    }

    pub fn next_u64(&mut self) -> u64 {
        let word = mix64(
            self.seed
                .wrapping_add(self.counter.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)),
        );
        self.counter += 1;
        word
    }

    /// Uniform draw in `(0, 1]`. Zero is excluded so `r ≤ 0` never holds.
    pub fn next_uniform(&mut self) -> f64 {
        unit_open_closed(self.next_u64())
    }

    /// Uniform integer in `[0, bound)`.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }
}
