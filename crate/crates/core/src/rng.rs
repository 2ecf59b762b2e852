//! Counter-based random streams.
//!
//! Every random draw in a simulation comes from a ChaCha stream whose key is
//! derived from `(seed, round, purpose, id)`. Work items can therefore be
//! executed in any order, on any number of threads, and still reproduce the
//! same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Random generator handed to every sampling routine.
pub type SimRng = ChaCha12Rng;

/// What a random stream is used for. The tag keeps streams for different
/// purposes disjoint even when seed, round and id coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Geometry = 1,
    Shadowing = 2,
    SmallScale = 3,
    PilotNoise = 4,
    DataNoise = 5,
    Symbols = 6,
    ModelInit = 7,
    DataSplit = 8,
    Dataset = 9,
    InjectedError = 10,
    Instance = 11,
}

/// Key identifying one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub round: u64,
    pub purpose: Purpose,
    pub id: u64,
}

impl StreamKey {
    pub fn new(seed: u64, round: u64, purpose: Purpose, id: u64) -> Self {
        Self {
            seed,
            round,
            purpose,
            id,
        }
    }

    /// 256-bit ChaCha key from the four fields. Each field passes through
    /// splitmix64 before being folded into the running state.
    pub fn key_bytes(&self) -> [u8; 32] {
        let mut state = splitmix64(self.seed ^ 0x6a09_e667_f3bc_c908);
        state = splitmix64(state ^ self.round.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        state = splitmix64(state ^ (self.purpose as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
        state = splitmix64(state ^ self.id.wrapping_mul(0x94d0_49bb_1331_11eb));
        let mut out = [0u8; 32];
        for chunk in out.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        out
    }

    pub fn rng(&self) -> SimRng {
        ChaCha12Rng::from_seed(self.key_bytes())
    }
}

/// Shorthand for `StreamKey::new(..).rng()`.
pub fn stream(seed: u64, round: u64, purpose: Purpose, id: u64) -> SimRng {
    StreamKey::new(seed, round, purpose, id).rng()
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
