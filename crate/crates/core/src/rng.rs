//! Labelled, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator behind every random draw in the crate.
pub type Rng = ChaCha8Rng;

/// Stream for `(seed, label)`.
///
/// The seed picks the key and the label picks one of ChaCha's 2⁶⁴ streams,
/// so different labels never overlap for the same seed.
pub fn seeded_rng(seed: u64, label: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(label.as_bytes()));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
