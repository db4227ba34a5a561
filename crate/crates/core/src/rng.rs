//! Seeded random streams. Every component draws from its own ChaCha stream
//! derived from the root seed, so scheduler-side draws never shift the
//! workload sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Workload,
    Scheduler,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Workload => 0,
            Stream::Scheduler => 1,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
