//! Seed splitting.
//!
//! A run has one top-level seed. Each consumer gets its own ChaCha8 stream:
//! the generator is seeded with the run seed and the stream id is
//! `(component << 32) | index`. Streams never overlap, so drawing more
//! evaluation samples cannot shift the training noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Component {
    Data = 1,
    Init = 2,
    Train = 3,
    Sampler = 4,
    Eval = 5,
}

pub fn stream(seed: u64, component: Component) -> RunRng {
    substream(seed, component, 0)
}

pub fn substream(seed: u64, component: Component, index: u32) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((component as u64) << 32) | index as u64);
    rng
}
