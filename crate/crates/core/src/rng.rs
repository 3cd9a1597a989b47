//! Seeded, splittable random streams.
//!
//! Every replication gets its own ChaCha stream selected by index, so results
//! do not depend on how work is distributed across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Stream = ChaCha20Rng;

/// The stream for work item `index` under `master_seed`.
pub fn substream(master_seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}
