//! Seed fan-out.
//!
//! A run is driven by one master seed. Every consumer of randomness gets its
//! own ChaCha8 stream: the generator is keyed by the master seed and the
//! stream number is `(purpose << 32) | index`, where `index` is usually the
//! node position in graph order. Streams never overlap, so nodes can be
//! processed on any number of threads without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    ModelInit = 1,
    Noise = 2,
    BatchOrder = 3,
    Synthetic = 4,
}

pub fn stream(master: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((purpose as u64) << 32) | (index & 0xffff_ffff));
    rng
}
