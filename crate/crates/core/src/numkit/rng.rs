//! Counter-based random streams.
//!
//! Every draw is a keyed bijective hash of `(seed, stream_id, counter)`, so a
//! stream can be created for any node without touching any other stream, and
//! the `k`-th draw of a stream is the same no matter which thread produced the
//! previous ones.

use rand_core::RngCore;

use crate::numkit::NumError;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One reproducible stream of 64-bit draws.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    counter: u64,
    k0: u64,
    k1: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self::at(seed, stream_id, 0)
    }

    /// Stream positioned at an arbitrary counter.
    pub fn at(seed: u64, stream_id: u64, counter: u64) -> Self {
        let k0 = mix64(seed.wrapping_add(GOLDEN));
        let k1 = mix64(k0 ^ mix64(stream_id.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019)));
        Self { seed, stream_id, counter, k0, k1 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    #[inline]
    fn block(&self, counter: u64) -> u64 {
        mix64(mix64(counter ^ self.k0).wrapping_add(self.k1))
    }

    #[inline]
    pub fn next_raw(&mut self) -> u64 {
        let out = self.block(self.counter);
        self.counter = self.counter.wrapping_add(1);
        out
    }

    /// Uniform in [0, 1) with 53 bits of precision. Advances the counter by one.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        const DEN: f64 = (1u64 << 53) as f64;
        (self.next_raw() >> 11) as f64 / DEN
    }

    /// Uniform index in `[0, n)`. Always advances the counter by exactly one.
    ///
    /// Uses the widening-multiply map, whose bias is below `n / 2^64`.
    #[inline]
    pub fn draw_index(&mut self, n: usize) -> Result<usize, NumError> {
        if n == 0 {
            return Err(NumError::EmptyRange);
        }
        let r = self.next_raw() as u128;
        Ok(((r * n as u128) >> 64) as usize)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_raw() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_raw()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_raw().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// Free-function form of [`RngStream::draw_index`].
pub fn draw_index(rng: &mut RngStream, n: usize) -> Result<usize, NumError> {
    rng.draw_index(n)
}
