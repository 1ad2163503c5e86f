//! Counter-based random streams.
//!
//! Every random draw in the pipeline comes from a ChaCha8 generator keyed by
//! a master seed and a [`Stream`] id. Work items (one projection image, one
//! solver restart) own their stream, so results never depend on how rayon
//! schedules them.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Named stream ids. The tag occupies the top byte, the index the rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Model,
    Rotation(u64),
    Noise(u64),
    Calibration(u64),
    Solver(u64),
    Replicate(u64),
    Test(u64),
}

impl Stream {
    pub fn id(self) -> u64 {
        const MASK: u64 = (1 << 56) - 1;
        let (tag, index) = match self {
            Stream::Model => (1, 0),
            Stream::Rotation(i) => (2, i),
            Stream::Noise(i) => (3, i),
            Stream::Calibration(i) => (4, i),
            Stream::Solver(i) => (5, i),
            Stream::Replicate(i) => (6, i),
            Stream::Test(i) => (7, i),
        };
        (tag << 56) | (index & MASK)
    }
}

/// A seeded generator positioned on one stream.
#[derive(Debug, Clone)]
pub struct StreamRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn new(seed: u64, stream: Stream) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        let stream = stream.id();
        inner.set_stream(stream);
        StreamRng {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

/// Derive a child seed (e.g. one per replicate) from a master seed.
pub fn derive_seed(master: u64, stream: Stream) -> u64 {
    StreamRng::new(master, stream).next_u64()
}
