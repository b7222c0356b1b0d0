//! Deterministic random streams keyed by (seed, receiver, frame, purpose),
//! so that frame synthesis order never changes the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub(crate) enum Stream {
    Noise = 1,
    TimingOffset = 2,
    FrequencyOffset = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn keyed(seed: u64, rx_id: usize, k: usize, stream: Stream) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ rx_id as u64);
    h = splitmix64(h ^ k as u64);
    h = splitmix64(h ^ stream as u64);
    ChaCha8Rng::seed_from_u64(h)
}
