//! Counter-based deterministic RNG owned by the repo.
//!
//! The generator is a SplitMix64-style bijective finalizer applied to
//! `seed + counter * golden`, so a draw sequence is a pure function of
//! (seed, counter). Child streams are derived from (seed, label), which
//! keeps parallel sweep cells reproducible regardless of scheduling.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    seed: u64,
    counter: u64,
}

impl RngState {
    pub fn from_seed(seed: u64) -> Self {
        RngState { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent child stream from (seed, label).
    pub fn derive(&self, label: u64) -> RngState {
        let child = mix64(self.seed ^ mix64(label.wrapping_mul(GOLDEN) ^ 0xD6E8_FEB8_6659_FD93));
        RngState { seed: child, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.seed.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform in the open interval (lo, hi); rejects the lo endpoint.
    pub fn uniform_open(&mut self, lo: f64, hi: f64) -> f64 {
        loop {
            let u = self.next_f64();
            if u != 0.0 {
                return lo + (hi - lo) * u;
            }
        }
    }

    /// Standard normal via Box-Muller on two fresh uniforms.
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        mean + std * z
    }

    pub fn usize_below(&mut self, n: usize) -> usize {
        // Multiply-shift range reduction; bias is negligible for the
        // small n used here and keeps the draw count fixed at one.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.usize_below(i + 1);
            xs.swap(i, j);
        }
    }
}
