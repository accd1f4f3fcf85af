//! Deterministic randomness: one documented 64-bit mixing function plus the
//! handful of sampling primitives the pipeline needs. Everything draws from a
//! ChaCha8 stream, and the primitives are implemented here rather than taken
//! from a distributions crate so that byte-level reproducibility depends only
//! on the cipher, not on library version details.

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

/// SplitMix64 finalizer over `master + index * golden_gamma`.
///
/// Derives independent stream seeds from one master seed: `mix(s, i)` and
/// `mix(s, j)` collide only if `i = j`.
pub fn mix(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha8 stream for the substream `index` of `master`.
pub fn stream(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(master, index))
}

/// Uniform f64 in [0, 1) with 53 random bits.
pub fn uniform_f64(rng: &mut impl Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform f64 in [lo, hi).
pub fn uniform_range(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform_f64(rng)
}

/// Uniform integer in [0, n) without modulo bias (rejection sampling).
pub fn uniform_usize(rng: &mut impl Rng, n: usize) -> usize {
    assert!(n > 0, "uniform_usize over an empty range");
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX - n + 1) % n;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return (v % n) as usize;
        }
    }
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut impl Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_usize(rng, i + 1);
        items.swap(i, j);
    }
}

/// Categorical sampler over fixed weights (not necessarily normalized).
pub struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    /// Weights must be non-negative with a positive sum.
    pub fn new(weights: &[f64]) -> Option<Categorical> {
        if weights.is_empty() || weights.iter().any(|&w| !(w >= 0.0)) {
            return None;
        }
        let mut acc = 0.0;
        let cumulative: Vec<f64> = weights
            .iter()
            .map(|&w| {
                acc += w;
                acc
            })
            .collect();
        if acc > 0.0 {
            Some(Categorical { cumulative })
        } else {
            None
        }
    }

    /// Index drawn with probability weight[i] / total.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u = uniform_f64(rng) * total;
        // partition_point: first index with cumulative > u
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.cumulative.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_is_deterministic_and_spreads() {
        assert_eq!(mix(42, 0), mix(42, 0));
        let a: Vec<u64> = (0..100).map(|i| mix(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
    }

    #[test]
    fn stream_reproduces() {
        let mut r1 = stream(1, 2);
        let mut r2 = stream(1, 2);
        for _ in 0..10 {
            assert_eq!(r1.next_u64(), r2.next_u64());
        }
    }

    #[test]
    fn uniform_usize_in_range() {
        let mut rng = stream(3, 0);
        for n in 1..20 {
            for _ in 0..100 {
                assert!(uniform_usize(&mut rng, n) < n);
            }
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = stream(4, 0);
        let mut v: Vec<u32> = (0..50).collect();
        shuffle(&mut rng, &mut v);
        let mut s = v.clone();
        s.sort_unstable();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn categorical_respects_zero_weights() {
        let mut rng = stream(5, 0);
        let c = Categorical::new(&[0.0, 1.0, 0.0]).unwrap();
        for _ in 0..200 {
            assert_eq!(c.sample(&mut rng), 1);
        }
        assert!(Categorical::new(&[0.0, 0.0]).is_none());
        assert!(Categorical::new(&[1.0, -0.5]).is_none());
    }

    #[test]
    fn categorical_frequencies_converge() {
        let mut rng = stream(6, 0);
        let c = Categorical::new(&[1.0, 3.0]).unwrap();
        let n = 40_000;
        let ones: usize = (0..n).map(|_| c.sample(&mut rng)).sum();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.01, "freq {freq}");
    }
}
