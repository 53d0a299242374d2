//! Counter-based random streams.
//!
//! A draw is a pure function of `(seed, stream_id, counter)`, so any
//! consumer can reproduce a sequence from those three integers alone and
//! independent consumers never couple through draw order. Child streams are
//! derived by hashing a label into the stream id.

use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a string label into a 64-bit stream id (FNV-1a).
pub fn label(name: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in name.as_bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
    pub counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            seed,
            stream_id,
            counter: 0,
        }
    }

    /// Draw at an explicit position without touching any stream state.
    pub fn draw_at(seed: u64, stream_id: u64, counter: u64) -> u64 {
        let key = mix64(seed ^ GOLDEN);
        let lane = mix64(key ^ stream_id.wrapping_mul(0xD134_2543_DE82_EF95));
        mix64(lane ^ mix64(counter.wrapping_add(GOLDEN).wrapping_mul(0xA076_1D64_78BD_642F)))
    }

    /// Child stream identified by `tag`; the parent is not advanced.
    pub fn derive(&self, tag: u64) -> Self {
        let id = mix64(self.stream_id ^ mix64(tag ^ 0x94D0_49BB_1331_11EB));
        Self::new(self.seed, id)
    }

    pub fn derive_label(&self, name: &str) -> Self {
        self.derive(label(name))
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = Self::draw_at(self.seed, self.stream_id, self.counter);
        self.counter = self.counter.wrapping_add(1);
        out
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`; `n` must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // Lemire's multiply-shift with rejection keeps the result unbiased.
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        debug_assert!(lo <= hi);
        let span = (hi - lo) as u64 + 1;
        lo + self.below(span) as i64
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box-Muller; consumes exactly two draws.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
