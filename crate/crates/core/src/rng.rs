//! Keyed random streams.
//!
//! All randomness is drawn from ChaCha8 seeded with the experiment seed. Each
//! consumer gets its own ChaCha stream (the 64-bit stream id of the cipher),
//! computed from a purpose tag, a round index and a client id:
//!
//! ```text
//! stream = tag << 56 | (round & 0xFFFF_FFFF) << 24 | (client & 0xFF_FFFF)
//! ```
//!
//! Two draws with different keys never share keystream, and a given key always
//! yields the same sequence regardless of what other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. The discriminant is the top byte of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    ModelInit = 1,
    PartitionPools = 2,
    PartitionClient = 3,
    ClientSelection = 4,
    LocalTraining = 5,
    SyntheticData = 6,
    TestSplit = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(purpose: Purpose, round: u64, client: u64) -> u64 {
        ((purpose as u64) << 56) | ((round & 0xFFFF_FFFF) << 24) | (client & 0xFF_FFFF)
    }

    pub fn get(&self, purpose: Purpose, round: u64, client: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(Self::stream_id(purpose, round, client));
        rng
    }
}
