//! Seedable, splittable random streams.
//!
//! Every stochastic operation in the crate takes an explicit [`RngStream`].
//! A stream is identified by `(seed, stream)`; the underlying generator is
//! ChaCha8 with the stream id mapped onto ChaCha's native stream counter, so
//! `(seed, stream)` pairs give independent, replayable sequences regardless of
//! which thread consumes them.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    forks: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            forks: 0,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Derive an independent child stream. The child depends only on this
    /// stream's identity and how many children were forked before it, never
    /// on how many values the parent has drawn.
    pub fn fork(&mut self) -> RngStream {
        self.forks += 1;
        let child_seed = splitmix64(self.seed ^ splitmix64(self.stream) ^ splitmix64(self.forks.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        RngStream::new(child_seed, self.stream)
    }

    /// Uniform on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        let bits = self.inner.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [0, 1).
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
