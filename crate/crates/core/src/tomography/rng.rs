//! Seeded, splittable random streams.
//!
//! Every stochastic task draws from a ChaCha8 stream selected by
//! `(seed, stream_id)`. Child streams are derived by mixing an index into the
//! stream id, so the draws of a task depend only on its position in the work
//! decomposition, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RngAlgorithm {
    ChaCha8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub algorithm: RngAlgorithm,
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        RngSpec { algorithm: RngAlgorithm::ChaCha8, seed, stream_id: 0 }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        RngSpec { stream_id, ..self }
    }

    /// Independent sub-stream number `index` of this stream.
    pub fn child(&self, index: u64) -> RngSpec {
        let mixed = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0xA5A5_A5A5)));
        RngSpec { stream_id: mixed, ..*self }
    }

    pub fn generator(&self) -> ChaCha8Rng {
        match self.algorithm {
            RngAlgorithm::ChaCha8 => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(self.stream_id);
                rng
            }
        }
    }
}
