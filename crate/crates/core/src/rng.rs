//! Counter-based pseudo-random generator used everywhere randomness is needed.
//!
//! The generator is the SplitMix64 output function applied to a keyed counter:
//!
//! ```text
//! value(key, i) = mix(key + (i + 1) * 0x9E3779B97F4A7C15)        (wrapping)
//! mix(z): z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!         z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!         z ^ (z >> 31)
//! ```
//!
//! Because each output depends only on `(key, i)`, any draw can be reproduced
//! in isolation: dropout masks, augmentation tuples and synthetic videos are
//! all keyed by a derived stream key plus a position, never by call order of
//! unrelated code. Stream keys are derived with [`derive`] from a root seed
//! and a domain tag, so adding a consumer never shifts another stream.

/// Golden-ratio increment from SplitMix64.
pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The i-th raw output of the stream identified by `key`.
#[inline]
pub fn value(key: u64, i: u64) -> u64 {
    mix(key.wrapping_add((i.wrapping_add(1)).wrapping_mul(GOLDEN)))
}

/// Derive a child stream key from a parent key and a path of integers.
///
/// `derive(k, &[a, b])` and `derive(derive(k, &[a]), &[b])` intentionally
/// differ; a stream is identified by the full path it was derived with.
pub fn derive(key: u64, parts: &[u64]) -> u64 {
    let mut h = mix(key);
    for &p in parts {
        h = mix(h.wrapping_mul(GOLDEN) ^ p);
    }
    h
}

/// FNV-1a on UTF-8 bytes, for mixing string identifiers into stream keys.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in s.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Stream domains, kept distinct so consumers never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Init = 1,
    Dropout = 2,
    Augment = 3,
    Extract = 4,
    SynthBase = 5,
    SynthMethod = 6,
    Shuffle = 7,
    Manifest = 8,
    Experiment = 9,
}

impl Domain {
    #[inline]
    pub fn tag(self) -> u64 {
        self as u64
    }
}

/// Sequential view over one counter stream.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        CounterRng { key, counter: 0 }
    }

    /// Convenience: seed a stream for `domain` below `root`.
    pub fn for_domain(root: u64, domain: Domain, parts: &[u64]) -> Self {
        let mut path = vec![domain.tag()];
        path.extend_from_slice(parts);
        CounterRng::new(derive(root, &path))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let v = value(self.key, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.uniform() * (hi - lo)
    }

    /// Uniform in [-d, d).
    #[inline]
    pub fn symmetric(&mut self, d: f64) -> f64 {
        self.range(-d, d)
    }

    /// Uniform integer in [0, n). Fixed-point multiply, no rejection loop.
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n` when k <= n, else `k` draws with
    /// replacement.
    pub fn indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        if k <= n {
            let mut all: Vec<usize> = (0..n).collect();
            self.shuffle(&mut all);
            all.truncate(k);
            all
        } else {
            (0..k).map(|_| self.below(n as u64) as usize).collect()
        }
    }
}

/// Position-addressable uniform in [0, 1), for order-free mask generation.
#[inline]
pub fn uniform_at(key: u64, i: u64) -> f64 {
    (value(key, i) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let mut a = CounterRng::new(42);
        let mut b = CounterRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn uniform_is_in_unit_interval() {
        let mut r = CounterRng::new(7);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn uniform_mean_is_centered() {
        let mut r = CounterRng::new(3);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| r.uniform()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn derive_separates_domains() {
        let k = 99;
        assert_ne!(derive(k, &[1]), derive(k, &[2]));
        assert_ne!(derive(k, &[1, 2]), derive(k, &[2, 1]));
    }

    #[test]
    fn indices_without_replacement_are_distinct() {
        let mut r = CounterRng::new(11);
        let idx = r.indices(20, 16);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 16);
        assert!(idx.iter().all(|&i| i < 20));
    }

    #[test]
    fn indices_with_replacement_when_short() {
        let mut r = CounterRng::new(11);
        let idx = r.indices(1, 16);
        assert_eq!(idx, vec![0; 16]);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut r = CounterRng::new(5);
        let mut v: Vec<u32> = (0..50).collect();
        r.shuffle(&mut v);
        let mut s = v.clone();
        s.sort_unstable();
        assert_eq!(s, (0..50).collect::<Vec<u32>>());
    }
}
