use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifies a reproducible random stream.
///
/// Two streams with the same `(seed, stream)` pair produce identical draws.
/// Work units (imputations, replications) get their own stream through
/// [`RngStream::substream`], so results do not depend on scheduling order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn root(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    /// A child stream keyed by `index`. Children of distinct parents, or
    /// distinct indices of one parent, do not overlap.
    pub fn substream(&self, index: u64) -> Self {
        let parent = splitmix64(splitmix64(self.seed) ^ self.stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        Self::new(parent, index)
    }

    /// A 64-bit seed derived from this stream, for handing to APIs that are
    /// keyed by a plain seed.
    pub fn derived_seed(&self) -> u64 {
        splitmix64(splitmix64(self.seed ^ 0xD1B5_4A32_D192_ED03) ^ self.stream)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
