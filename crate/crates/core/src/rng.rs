use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded generator for one independent stream (e.g. one trajectory or trial).
///
/// Streams with different indices never overlap, so work items can be
/// generated in any order or concurrently and still reproduce bit-for-bit.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives an unrelated seed for a named purpose from a master seed.
pub fn derive_seed(master: u64, purpose: &str) -> u64 {
    // FNV-1a over the purpose tag, mixed with splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in purpose.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
