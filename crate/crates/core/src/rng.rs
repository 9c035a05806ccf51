//! Counter-based random streams.
//!
//! Every random quantity in a run is drawn from a ChaCha stream whose key
//! is derived from the master seed and whose 64-bit stream id is a hash of
//! `(domain, tag, index)`. A sample therefore depends only on its own
//! coordinates, never on how many samples were drawn before it, and samples
//! can be generated in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream-id namespaces. Values are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Train = 1,
    Calibration = 2,
    Verification = 3,
    Test = 4,
    NetworkInit = 5,
    BatchShuffle = 6,
    Oracle = 7,
}

#[derive(Debug, Clone)]
pub struct StreamFactory {
    master_seed: u64,
    key: [u8; 32],
}

impl StreamFactory {
    pub fn new(master_seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = master_seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self { master_seed, key }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Independent stream for `(domain, tag, index)`. `tag` separates
    /// families and other sub-namespaces inside a domain.
    pub fn stream(&self, domain: Domain, tag: u64, index: u64) -> Stream {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(stream_id(domain as u64, tag, index));
        rng
    }
}

fn stream_id(domain: u64, tag: u64, index: u64) -> u64 {
    let mut s = domain.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let a = splitmix64(&mut s);
    let mut s = a ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let b = splitmix64(&mut s);
    let mut s = b ^ index;
    splitmix64(&mut s)
}

pub(crate) fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
