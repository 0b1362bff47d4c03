//! Counter-based random substreams.
//!
//! A [`RandomStream`] is an immutable `(seed, stream_id)` descriptor. The
//! generator behind it is ChaCha8 keyed by the seed with the 64-bit ChaCha
//! stream selector set to `stream_id`, so every descriptor addresses its own
//! keystream and any replicate can be regenerated without touching the others.
//! Monte Carlo loops hand replicate `i` the substream `stream.substream(i)`,
//! which makes results independent of thread count and execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RandomStream { seed, stream_id }
    }

    /// Child stream for replicate or task `index`.
    pub fn substream(&self, index: u64) -> RandomStream {
        let id = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)));
        RandomStream { seed: self.seed, stream_id: id }
    }

    /// Child stream addressed by a stage label, e.g. `"train-split"`.
    pub fn labeled(&self, label: &str) -> RandomStream {
        // FNV-1a over the label bytes
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        self.substream(h)
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}
