/// xorshift64* (Vigna, 2016). The generator state `x` advances by
///
/// ```text
/// x ^= x >> 12;
/// x ^= x << 25;
/// x ^= x >> 27;
/// output = x * 0x2545_F491_4F6C_DD1D   (wrapping, mod 2^64)
/// ```
///
/// A zero seed is replaced by `0x9E37_79B9_7F4A_7C15` since zero is a fixed point.
/// Integer-only so scenario ledgers are identical on every platform.
#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub const ZERO_SEED_REPLACEMENT: u64 = 0x9E37_79B9_7F4A_7C15;

    pub fn new(seed: u64) -> Self {
        Self {
            state: if seed == 0 {
                Self::ZERO_SEED_REPLACEMENT
            } else {
                seed
            },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// `next_u64() % bound`; the modulo bias is accepted.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        self.next_u64() % bound
    }

    /// Uniform on `[center - spread, center + spread]`, saturating at zero.
    pub fn jitter(&mut self, center: u64, spread: u64) -> u64 {
        let draw = self.below(2 * spread + 1);
        (center + draw).saturating_sub(spread)
    }
}
