//! Named, seed-derived random streams.
//!
//! Every consumer of randomness asks for its own stream by name. A stream is
//! a ChaCha8 generator keyed by the run seed with the stream id set from a
//! hash of the name, so the draws one component sees do not depend on how
//! many draws any other component made.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// FNV-1a, fixed so stream ids are stable across platforms and releases.
fn stream_id(name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Returns the generator for stream `name` under `seed`.
pub fn stream(seed: u64, name: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(name));
    rng
}

/// Stream for the `index`-th member of a family (replicates, candidates, ...).
pub fn indexed_stream(seed: u64, name: &str, index: u64) -> StreamRng {
    stream(seed, &format!("{name}/{index}"))
}
