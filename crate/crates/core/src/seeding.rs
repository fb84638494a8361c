//! Counter-based seeding helpers.
//!
//! All randomness in the crate flows through ChaCha streams keyed by a master
//! seed: a generator for purpose `p` under seed `s` is the ChaCha8 stream `p`
//! of the cipher keyed by `s`. Distinct purposes never share a stream, so the
//! noise tensor, the spike frame, and every power-iteration restart are
//! independently reproducible, in any order and from any thread.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream id for the orthonormal frame behind correlated spike components.
pub const STREAM_FRAME: u64 = 1;
/// Stream id for the raw Gaussian array behind the noise tensor.
pub const STREAM_NOISE: u64 = 2;
/// Base stream id for power-iteration restart initializations.
pub const STREAM_RESTART_BASE: u64 = 0x100;

/// Deterministic generator for stream `stream` of master seed `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; decorrelates structured integer inputs.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Order-sensitive hash of an index pair, for per-task seed derivation.
pub fn mix2(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a).wrapping_add(b))
}
