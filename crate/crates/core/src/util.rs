//! Small shared helpers: deterministic RNG and integer math.

/// Deterministic 64-bit RNG (SplitMix64). Used for every randomized draw in
/// the toolkit so that a single seed reproduces a run bit-for-bit on any
/// platform, independent of external crate version drift.
#[derive(Debug, Clone)]
pub struct DetRng {
    state: u64,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        DetRng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, bound)`. `bound` must be nonzero.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        // Modulo bias is irrelevant at the scales drawn here (bounds are tiny
        // relative to 2^64), and determinism matters more than perfection.
        self.next_u64() % bound
    }
}

/// Ceiling of log2 for `n >= 1`. `ceil_log2(1) == 0`.
pub fn ceil_log2(n: usize) -> u32 {
    assert!(n >= 1, "ceil_log2 undefined for 0");
    (usize::BITS - (n - 1).leading_zeros()).min(usize::BITS)
}
