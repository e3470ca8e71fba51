//! Keyed random substreams.
//!
//! Every stochastic routine draws from a ChaCha20 stream whose 256-bit key is
//! derived from a master seed and a path of integer keys (replication,
//! component, slice, ...). Two call sites with the same `(seed, keys)` see the
//! same numbers regardless of thread count or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `seed` with `keys` into a single 64-bit value.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    for &k in keys {
        state ^= k.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(17);
        acc ^= splitmix64(&mut state);
        state = state.wrapping_add(acc);
    }
    acc
}

/// A generator keyed by `(seed, keys)`.
pub fn substream(seed: u64, keys: &[u64]) -> Rng {
    let mut state = derive_seed(seed, keys);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha20Rng::from_seed(key)
}
