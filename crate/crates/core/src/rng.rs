//! Seeded random streams.
//!
//! Every consumer of randomness (a node drawing its scenarios, a node picking
//! constraints, the topology sampler) owns its own ChaCha stream derived from
//! the master seed, a purpose tag and an index. Runs are therefore
//! reproducible regardless of the order in which nodes are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Scenarios = 1,
    ConstraintSelection = 2,
    Topology = 3,
    Validation = 4,
    Fixture = 5,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent stream for `(master_seed, purpose, index)`.
pub fn stream(master_seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    let mut state = master_seed ^ ((purpose as u64) << 56);
    for chunk in seed.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(index);
    rng
}
