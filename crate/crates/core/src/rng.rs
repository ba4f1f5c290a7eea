//! Splittable, replayable random streams.
//!
//! A stream is addressed by a master seed plus a path of integers, e.g.
//! `(seed, [replicate, iteration, test_point, purpose])`. The generator for a
//! stream is ChaCha8 keyed with SHA-256 of the address, so deriving a child is
//! a pure function and the draws of a task do not depend on which thread runs
//! it or in what order sibling tasks execute.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use sha2::{Digest, Sha256};

/// Generator type handed out by [`RngStream::rng`].
pub type StreamRng = ChaCha8Rng;

/// Purpose tags used as path elements. They live in the upper half of the
/// `u64` range so they never collide with plain indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    TieBreak = 1 << 63,
    Multinomial,
    WithinClass,
    Resample,
    Bootstrap,
    Fit,
    Predict,
    Split,
    Generate,
    Rotation,
    Evaluation,
    Experiment,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    path: Vec<u64>,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, path: Vec::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Child stream with `index` appended to the path.
    pub fn child(&self, index: u64) -> Self {
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(index);
        Self { seed: self.seed, path }
    }

    /// Child stream for a purpose tag.
    pub fn tagged(&self, purpose: Purpose) -> Self {
        self.child(purpose as u64)
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for e in &self.path {
            h.update(e.to_le_bytes());
        }
        let key: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(key)
    }
}

/// One Multinomial(`trials`, `probs`) draw by sequential conditional binomials.
///
/// `probs` must be non-negative; it is renormalized internally. Categories
/// with zero probability always receive zero counts.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, probs: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining_mass: f64 = probs.iter().sum();
    let mut remaining = trials;
    let last_positive = probs.iter().rposition(|&p| p > 0.0);
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if p <= 0.0 {
            continue;
        }
        if Some(i) == last_positive {
            counts[i] = remaining;
            break;
        }
        let cond = (p / remaining_mass).clamp(0.0, 1.0);
        let c = Binomial::new(remaining, cond).expect("conditional probability lies in [0, 1]").sample(rng);
        counts[i] = c;
        remaining -= c;
        remaining_mass -= p;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_address_same_draws() {
        let a = RngStream::new(7).child(3).tagged(Purpose::Fit);
        let b = RngStream::new(7).child(3).tagged(Purpose::Fit);
        let (mut ra, mut rb) = (a.rng(), b.rng());
        let xa: Vec<u64> = (0..8).map(|_| ra.random()).collect();
        let xb: Vec<u64> = (0..8).map(|_| rb.random()).collect();
        assert_eq!(xa, xb);
    }

    #[test]
    fn different_paths_differ() {
        let root = RngStream::new(7);
        let mut a = root.child(1).rng();
        let mut b = root.child(2).rng();
        let mut c = RngStream::new(8).child(1).rng();
        let x: u64 = a.random();
        assert_ne!(x, b.random::<u64>());
        assert_ne!(x, c.random::<u64>());
        // prefix vs extension
        let mut d = root.child(1).child(0).rng();
        assert_ne!(x, d.random::<u64>());
    }

    #[test]
    fn multinomial_sums_and_respects_zeros() {
        let mut r = RngStream::new(1).rng();
        for trials in [0u64, 1, 5, 100] {
            let c = multinomial(&mut r, trials, &[0.2, 0.0, 0.5, 0.3, 0.0]);
            assert_eq!(c.iter().sum::<u64>(), trials);
            assert_eq!(c[1], 0);
            assert_eq!(c[4], 0);
        }
        assert_eq!(multinomial(&mut r, 9, &[0.0, 1.0]), vec![0, 9]);
    }

    #[test]
    fn multinomial_mean() {
        let mut r = RngStream::new(2).rng();
        let probs = [0.1, 0.6, 0.3];
        let mut acc = [0u64; 3];
        let reps = 20_000;
        for _ in 0..reps {
            let c = multinomial(&mut r, 3, &probs);
            for i in 0..3 {
                acc[i] += c[i];
            }
        }
        for i in 0..3 {
            let mean = acc[i] as f64 / (3.0 * reps as f64);
            assert!((mean - probs[i]).abs() < 0.01, "{i}: {mean}");
        }
    }
}
