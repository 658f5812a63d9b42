//! Counter-based keyed random streams.
//!
//! Every random draw in a run is addressed by `(seed, purpose, a, b, c)`, so
//! two samplers that ask for the Langevin noise of agent `i` at iteration `k`
//! get bitwise-identical values regardless of call order or thread.

use std::cell::RefCell;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Langevin = 2,
    Minibatch = 3,
    Schedule = 4,
    Data = 5,
    Partition = 6,
    Split = 7,
    Balance = 8,
    Direct = 9,
    Estimate = 10,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A fresh generator for one key.
pub fn keyed_rng(seed: u64, purpose: Purpose, a: u64, b: u64, c: u64) -> ChaCha8Rng {
    let mut state = seed;
    for word in [purpose as u64, a, b, c] {
        state ^= word;
        state = splitmix64(&mut state);
    }
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Order-independent digest over the draws a sampler actually consumed.
///
/// Each draw whose iteration lies in `window` contributes a hash of its key
/// and payload; contributions are combined by wrapping addition.
#[derive(Clone, Debug)]
pub struct StreamDigest {
    window: (usize, usize),
    acc: u64,
    count: u64,
}

impl StreamDigest {
    pub fn new(first_iteration: usize, last_iteration: usize) -> Self {
        Self { window: (first_iteration, last_iteration), acc: 0, count: 0 }
    }

    fn record(&mut self, purpose: Purpose, agent: usize, iteration: usize, payload: &[u8]) {
        if iteration < self.window.0 || iteration > self.window.1 {
            return;
        }
        let mut hasher = Sha256::new();
        hasher.update((purpose as u64).to_le_bytes());
        hasher.update((agent as u64).to_le_bytes());
        hasher.update((iteration as u64).to_le_bytes());
        hasher.update(payload);
        let out = hasher.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&out[..8]);
        self.acc = self.acc.wrapping_add(u64::from_le_bytes(word));
        self.count += 1;
    }

    pub fn merge(&mut self, other: &StreamDigest) {
        self.acc = self.acc.wrapping_add(other.acc);
        self.count += other.count;
    }

    pub fn value(&self) -> u64 {
        self.acc
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn hex(&self) -> String {
        format!("{:016x}", self.acc)
    }
}

/// The random streams of one trial.
#[derive(Debug)]
pub struct TrialStreams {
    pub seed: u64,
    pub trial: u64,
    tap: Option<RefCell<StreamDigest>>,
}

impl TrialStreams {
    pub fn new(seed: u64, trial: u64) -> Self {
        Self { seed, trial, tap: None }
    }

    /// Records every draw inside the digest's iteration window.
    pub fn with_digest(mut self, digest: StreamDigest) -> Self {
        self.tap = Some(RefCell::new(digest));
        self
    }

    pub fn take_digest(&mut self) -> Option<StreamDigest> {
        self.tap.take().map(RefCell::into_inner)
    }

    /// Langevin noise `w_i^{(iteration)}`.
    pub fn langevin(&self, agent: usize, iteration: usize, dim: usize) -> DVector<f64> {
        let mut rng = keyed_rng(self.seed, Purpose::Langevin, self.trial, agent as u64, iteration as u64);
        let w = standard_normal_vector(&mut rng, dim);
        if let Some(tap) = &self.tap {
            let bytes: Vec<u8> = w.iter().flat_map(|v| v.to_le_bytes()).collect();
            tap.borrow_mut().record(Purpose::Langevin, agent, iteration, &bytes);
        }
        w
    }

    /// Minibatch indices, drawn with replacement, for the gradient evaluated at
    /// the iterate with index `iteration`.
    pub fn minibatch(&self, agent: usize, iteration: usize, batch: usize, local_n: usize) -> Vec<usize> {
        let mut rng = keyed_rng(self.seed, Purpose::Minibatch, self.trial, agent as u64, iteration as u64);
        let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..local_n)).collect();
        if let Some(tap) = &self.tap {
            let bytes: Vec<u8> = idx.iter().flat_map(|&v| (v as u64).to_le_bytes()).collect();
            tap.borrow_mut().record(Purpose::Minibatch, agent, iteration, &bytes);
        }
        idx
    }

    /// Initial iterate of one agent.
    pub fn init(&self, agent: usize, dim: usize) -> DVector<f64> {
        let mut rng = keyed_rng(self.seed, Purpose::Init, self.trial, agent as u64, 0);
        standard_normal_vector(&mut rng, dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_reproducible_and_distinct() {
        let a: u64 = keyed_rng(7, Purpose::Langevin, 1, 2, 3).random();
        let b: u64 = keyed_rng(7, Purpose::Langevin, 1, 2, 3).random();
        let c: u64 = keyed_rng(7, Purpose::Langevin, 1, 2, 4).random();
        let d: u64 = keyed_rng(7, Purpose::Minibatch, 1, 2, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn digest_is_order_independent() {
        let s1 = TrialStreams::new(3, 0).with_digest(StreamDigest::new(0, 10));
        s1.langevin(0, 1, 2);
        s1.minibatch(1, 2, 3, 5);
        let s2 = TrialStreams::new(3, 0).with_digest(StreamDigest::new(0, 10));
        s2.minibatch(1, 2, 3, 5);
        s2.langevin(0, 1, 2);
        let (mut s1, mut s2) = (s1, s2);
        assert_eq!(s1.take_digest().unwrap().value(), s2.take_digest().unwrap().value());
    }

    #[test]
    fn digest_window_filters() {
        let mut s = TrialStreams::new(3, 0).with_digest(StreamDigest::new(1, 1));
        s.langevin(0, 0, 2);
        s.langevin(0, 2, 2);
        assert_eq!(s.take_digest().unwrap().count(), 0);
    }
}
