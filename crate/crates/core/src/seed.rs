/// Derive an independent 64-bit seed for sub-stream `stream` of `master`.
///
/// SplitMix64 finalizer over the combined input; distinct `(master, stream)`
/// pairs give well-separated seeds for `ChaCha8Rng::seed_from_u64`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
