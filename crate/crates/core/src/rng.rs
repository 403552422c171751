//! Deterministic, splittable pseudo-random streams.
//!
//! The generator is xoshiro256++ with its 256-bit state expanded from a
//! 64-bit seed by SplitMix64. Both algorithms are implemented here rather
//! than taken from a platform library so that identical seeds produce
//! identical draw sequences on every platform and toolchain. No OS entropy
//! is consumed anywhere in this crate.
//!
//! `split` derives a child stream seeded from the parent's next output, so
//! an entire tree of streams is a pure function of the root seed.

/// A seedable pseudo-random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    state: [u64; 4],
}

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    /// Generator identifier, fixed for the lifetime of the file formats.
    pub const ALGORITHM: &'static str = "xoshiro256++ (seeded via SplitMix64)";

    pub fn from_seed(seed: u64) -> Self {
        let mut x = seed;
        let mut state = [0u64; 4];
        for s in &mut state {
            *s = splitmix64(&mut x);
        }
        // A zero state would be absorbing; SplitMix64 cannot emit four zeros
        // from one seed, but guard anyway.
        if state == [0, 0, 0, 0] {
            state = [0x9E37_79B9_7F4A_7C15, 1, 2, 3];
        }
        RngStream { seed, state }
    }

    /// Seed this stream was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Child stream seeded from this stream's next output.
    pub fn split(&mut self) -> RngStream {
        RngStream::from_seed(self.next_u64())
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal draw (Box-Muller, cosine branch).
    ///
    /// Consumes exactly two uniform draws per call; the sine companion is
    /// discarded to keep the draw count per call fixed.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]: keeps ln(u1) finite
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform integer in `[0, n)` via rejection sampling (no modulo bias).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) is undefined");
        // Largest v with (v + 1) a multiple of n; draws above it are rejected.
        let zone = u64::MAX - ((u64::MAX % n) + 1) % n;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % n;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }

    /// `k` distinct indices drawn uniformly from `0..n` (partial Fisher-Yates).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} of {n}");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}
