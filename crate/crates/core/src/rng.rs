//! Deterministic random streams.
//!
//! Every random draw in the crate flows from a single `u64` master seed. The
//! seed is split into independent ChaCha streams by purpose, so that e.g.
//! changing the corruption probability of a synthetic model does not perturb
//! the graph draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named stream ids.
pub mod streams {
    pub const GRAPH: u64 = 1;
    pub const GROUND_TRUTH: u64 = 2;
    pub const LABELS: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const CORRUPTION: u64 = 5;
    /// Per-edge cycle sampling uses `CYCLES_BASE + edge_id`.
    pub const CYCLES_BASE: u64 = 1 << 32;
}

/// Independent generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
