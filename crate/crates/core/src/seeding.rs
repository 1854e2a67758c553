//! Deterministic random streams: every replicate gets its own generator
//! derived from a `(master, cell, replicate)` triple, so results do not depend
//! on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replicate `replicate` of cell `cell` under `master`.
pub fn seed_for(master: u64, cell: u64, replicate: u64) -> u64 {
    let a = splitmix(master.wrapping_add(GOLDEN));
    let b = splitmix(a ^ cell.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019));
    splitmix(b ^ replicate.wrapping_add(1).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_for(master: u64, cell: u64, replicate: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed_for(master, cell, replicate))
}
