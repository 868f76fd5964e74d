//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed and a 64-bit
//! stream id. Two handles with the same `(seed, stream)` emit bitwise
//! identical sequences on every platform. Parallel work never shares a
//! handle: each unit of work takes a [`RngHandle::fork`] keyed by its index.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct RngHandle {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngHandle {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
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

    /// Independent child stream for work item `index`.
    ///
    /// Depends only on `(seed, stream, index)`, never on how much of the
    /// parent has been consumed.
    pub fn fork(&self, index: u64) -> RngHandle {
        let key = splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x5851_f42d_4c95_7f2d)));
        RngHandle::new(key, index)
    }
}

impl RngCore for RngHandle {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
