//! Seeded random streams. A run owns one [`SeedTree`]; each consumer (sampler,
//! linear oracle, stopping index, ...) draws from its own independent stream so
//! that adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    seed: u64,
}

/// Stream identifiers used inside the crate.
pub mod stream {
    pub const SAMPLER: u64 = 1;
    pub const LINEAR_ORACLE: u64 = 2;
    pub const STOP_INDEX: u64 = 3;
    pub const OUTPUT_INDEX: u64 = 4;
    pub const MINIBATCH: u64 = 5;
    pub const PROBLEM: u64 = 6;
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, id: u64) -> Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }

    /// Child tree, e.g. one per repetition in a Monte-Carlo battery.
    pub fn child(&self, index: u64) -> SeedTree {
        let mut rng = self.stream(0x5eed_0000 + index);
        SeedTree {
            seed: rand::Rng::random(&mut rng),
        }
    }
}
