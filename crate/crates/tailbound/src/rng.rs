use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

// splitmix64: full-period mixer, used to derive independent substream seeds.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a deterministic RNG substream from a base seed and a tag path.
///
/// Streams for distinct tag paths are independent, so concurrent work
/// items (bootstrap replicates, pricing restarts, Monte Carlo batches)
/// can each take `substream(seed, &[kind, index])` and produce results
/// that do not depend on scheduling order.
/// A single derived seed value, for callers that key other systems off a
/// base seed and index.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    use rand_chacha::rand_core::RngCore;
    substream(seed, tags).next_u64()
}

pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = seed ^ 0x6a09_e667_f3bc_c908;
    let mut acc = splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        acc ^= splitmix64(&mut state).rotate_left(17);
    }
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        let mut s = acc ^ (i as u64).wrapping_mul(0xd6e8_feb8_6659_fd93);
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
