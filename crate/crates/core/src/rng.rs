//! Deterministic xorshift128+ generator.
//!
//! Both endpoints must derive bit-identical input matrices from a 128-bit
//! seed, so the recurrence, the seed layout and the bit consumption order
//! are all fixed here and covered by golden vectors.

use crate::tpm::Inputs;

/// State substituted for an all-zero seed.
pub const ZERO_SEED_FALLBACK: (u64, u64) = (0x9E37_79B9_7F4A_7C15, 0xBF58_476D_1CE4_E5B9);

/// Generator state. Never `(0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngState {
    s0: u64,
    s1: u64,
}

impl RngState {
    /// Build a state from two words; `(0, 0)` is remapped to [`ZERO_SEED_FALLBACK`].
    pub fn from_words(s0: u64, s1: u64) -> Self {
        if s0 == 0 && s1 == 0 {
            let (s0, s1) = ZERO_SEED_FALLBACK;
            Self { s0, s1 }
        } else {
            Self { s0, s1 }
        }
    }

    /// `s0` is the first 8 bytes big-endian, `s1` the last 8.
    pub fn seed_from_bytes(seed: &[u8; 16]) -> Self {
        let s0 = u64::from_be_bytes(seed[..8].try_into().unwrap());
        let s1 = u64::from_be_bytes(seed[8..].try_into().unwrap());
        Self::from_words(s0, s1)
    }

    /// Expand a 64-bit seed through splitmix64. Used for per-trial streams
    /// and for channel impairment streams.
    pub fn from_u64(seed: u64) -> Self {
        let mut x = seed;
        let a = splitmix64(&mut x);
        let b = splitmix64(&mut x);
        Self::from_words(a, b)
    }

    /// Independent stream number `index` under a master seed.
    pub fn stream(master: u64, index: u64) -> Self {
        let mut x = index;
        Self::from_u64(master ^ splitmix64(&mut x))
    }

    pub fn words(&self) -> (u64, u64) {
        (self.s0, self.s1)
    }

    /// One xorshift128+ step. Pure: returns the output word and the successor state.
    #[must_use]
    pub fn next_word(self) -> (u64, RngState) {
        let mut t = self.s0;
        let s1 = self.s1;
        t ^= t << 23;
        t ^= t >> 17;
        t ^= s1;
        t ^= s1 >> 26;
        (s1.wrapping_add(t), RngState { s0: s1, s1: t })
    }

    /// In-place convenience over [`RngState::next_word`].
    pub fn step(&mut self) -> u64 {
        let (w, next) = self.next_word();
        *self = next;
        w
    }

    /// Uniform integer in `[0, bound)` by rejection, so no modulo bias.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        let reject_under = bound.wrapping_neg() % bound;
        loop {
            let w = self.step();
            if w >= reject_under {
                return w % bound;
            }
        }
    }

    /// Uniform `f64` in `[0, 1)` from the top 53 bits.
    pub fn unit_f64(&mut self) -> f64 {
        (self.step() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Bernoulli trial with success probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        p > 0.0 && self.unit_f64() < p
    }

    pub fn bytes16(&mut self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(&self.step().to_be_bytes());
        out[8..].copy_from_slice(&self.step().to_be_bytes());
        out
    }

    /// Draw a `k × n` matrix of ±1 inputs.
    ///
    /// Consumes `ceil(k·n / 64)` words. Bits are read LSB-first within each
    /// word and fill the matrix row-major; bit 1 maps to +1, bit 0 to −1.
    #[must_use]
    pub fn draw_inputs(self, k: usize, n: usize) -> (Inputs, RngState) {
        let mut state = self;
        let total = k * n;
        let mut values = Vec::with_capacity(total);
        let mut word = 0u64;
        for idx in 0..total {
            if idx % 64 == 0 {
                word = state.step();
            }
            let bit = (word >> (idx % 64)) & 1;
            values.push(if bit == 1 { 1 } else { -1 });
        }
        (Inputs::from_flat(k, n, values).expect("shape is k*n by construction"), state)
    }
}

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Golden output of the first eight words from the seed `00 01 .. 0f`.
///
/// Produced by an independent reference implementation of the xorshift128+
/// recurrence; also written by `tpmkex vectors`.
pub const GOLDEN_ASCENDING: [u64; 8] = [
    0x1193_1453_9597_9718,
    0x0d8f_0a49_f04d_99eb,
    0x2dd0_d9ec_73d2_b019,
    0x5749_941e_660e_1e2e,
    0x1eae_446d_970b_a548,
    0xb711_df9c_f1e4_ede7,
    0xefb0_054f_cf32_f9c3,
    0x8744_db27_6ac2_e4c3,
];

/// Render the generator golden vectors as a small text file, one hex word per line.
pub fn golden_vector_text() -> String {
    let mut out = String::from("# xorshift128+ golden vectors\n");
    let ascending: [u8; 16] = core::array::from_fn(|i| i as u8);
    for (label, seed) in [("ascending", ascending), ("zero", [0u8; 16])] {
        let mut st = RngState::seed_from_bytes(&seed);
        let (s0, s1) = st.words();
        out.push_str(&format!("seed {label} s0={s0:016x} s1={s1:016x}\n"));
        for _ in 0..8 {
            out.push_str(&format!("{:016x}\n", st.step()));
        }
    }
    out
}
