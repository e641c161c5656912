//! Deterministic random-number streams.
//!
//! Every stochastic component draws from a [`ChaCha8Rng`] seeded through
//! [`substream`], which mixes a master seed, a static label, and an index
//! with a stable FNV-1a hash. Distinct components therefore consume
//! independent streams whose contents do not depend on scheduling order,
//! which keeps multi-threaded experiment runs bit-reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut state: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

/// Derives a stable 64-bit seed from a master seed, a component label, and an
/// index (for example a run number or session number).
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &master.to_le_bytes());
    h = fnv1a(h, label.as_bytes());
    fnv1a(h, &index.to_le_bytes())
}

/// Builds the ChaCha substream identified by `(master, label, index)`.
pub fn substream(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, index))
}

/// Builds a generator directly from a raw 64-bit seed.
pub fn from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One standard-normal draw via the Box–Muller transform.
pub(crate) fn standard_normal(rng: &mut impl rand::Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        // Reject 0 so the logarithm stays finite.
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.gen();
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}
