//! Counter-based random streams.
//!
//! Every particle owns a ChaCha8 stream selected by a 64-bit genealogical id
//! under a key derived from the master seed, plus a word offset into that
//! stream. Draws therefore depend only on `(seed, id, offset)` and not on the
//! order in which particles are processed or how they are partitioned.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Id of the `ordinal`-th child of `parent`.
pub fn child_id(parent: u64, ordinal: u64) -> u64 {
    mix64(parent ^ mix64(ordinal.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Independent seed for replicate `index` of a run seeded with `master`.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Key material for all streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn from_seed(seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed;
        for chunk in key.chunks_exact_mut(8) {
            state = mix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Self(key)
    }

    /// Opens stream `id` at word offset `offset`.
    pub fn open(&self, id: u64, offset: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(id);
        if offset != 0 {
            rng.set_word_pos(offset as u128);
        }
        rng
    }
}

/// Current word offset of a stream opened with [`StreamKey::open`].
pub fn offset_of(rng: &ChaCha8Rng) -> u64 {
    rng.get_word_pos() as u64
}
