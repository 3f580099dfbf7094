//! Counter-based random streams.
//!
//! Every simulated trial draws from its own ChaCha8 stream: the 256-bit key
//! is derived from (seed, scenario index, design index) and the 64-bit
//! stream id is the trial index. A trial's draws therefore never depend on
//! how trials are scheduled across threads.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::special::norm_quantile;

pub use rand_chacha::ChaCha8Rng as StreamRng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one stream of the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub seed: u64,
    pub scenario: u64,
    pub design: u64,
    pub trial: u64,
}

impl StreamId {
    pub fn new(seed: u64, scenario: u64, design: u64, trial: u64) -> Self {
        StreamId { seed, scenario, design, trial }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = self.seed;
        let mut key = [0u8; 32];
        let words = [
            splitmix64(&mut state),
            splitmix64(&mut state) ^ self.scenario.wrapping_mul(0xD6E8_FEB8_6659_FD93),
            splitmix64(&mut state) ^ self.design.wrapping_mul(0xA076_1D64_78BD_642F),
            splitmix64(&mut state),
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            let mut s = w;
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.trial);
        rng
    }
}

/// Stream for auxiliary draws (scenario generation and the like).
pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    StreamId::new(seed, u64::MAX, u64::MAX, stream).rng()
}

/// Uniform on [0, 1) with 53 random bits.
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on (0, 1).
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Normal(mean, sd²) by inversion.
pub fn normal<R: RngCore + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    mean + sd * norm_quantile(open_uniform(rng))
}

/// Uniform integer in 0..n (Lemire's nearly-divisionless method).
pub fn below<R: RngCore + ?Sized>(rng: &mut R, n: u64) -> u64 {
    assert!(n > 0, "below(0)");
    let threshold = n.wrapping_neg() % n;
    loop {
        let m = (rng.next_u64() as u128) * (n as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

/// Number of successes in `n` Bernoulli(p) trials.
pub fn binomial<R: RngCore + ?Sized>(rng: &mut R, n: u32, p: f64) -> u32 {
    (0..n).filter(|_| uniform(rng) < p).count() as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = StreamId::new(7, 1, 2, 3).rng().next_u64();
        assert_eq!(a, StreamId::new(7, 1, 2, 3).rng().next_u64());
        assert_ne!(a, StreamId::new(7, 1, 2, 4).rng().next_u64());
        assert_ne!(a, StreamId::new(7, 2, 1, 3).rng().next_u64());
        assert_ne!(a, StreamId::new(8, 1, 2, 3).rng().next_u64());
    }

    #[test]
    fn uniform_ranges() {
        let mut rng = seeded(1, 0);
        for _ in 0..10_000 {
            let u = uniform(&mut rng);
            assert!((0.0..1.0).contains(&u));
            let v = open_uniform(&mut rng);
            assert!(v > 0.0 && v < 1.0);
            assert!(below(&mut rng, 6) < 6);
        }
        assert_eq!(binomial(&mut rng, 5, 0.0), 0);
        assert_eq!(binomial(&mut rng, 5, 1.0), 5);
    }
}
