//! Seeded random streams.
//!
//! Every stochastic quantity in the crate is drawn from a [`StreamRng`] that is
//! reachable from a single master seed through a named path, e.g.
//! `substream(seed, "trial", &[7, 2])`. Streams derived from different paths are
//! statistically independent, so runs fanned out across threads stay
//! reproducible regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(seed: u64, label: &str, path: &[u64]) -> StreamRng {
    stream(derive_seed(seed, label, path))
}

pub fn derive_seed(seed: u64, label: &str, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ fnv1a(label.as_bytes()));
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
