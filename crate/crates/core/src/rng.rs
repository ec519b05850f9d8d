//! Counter-derived random substreams.
//!
//! Every random draw in the crate comes from a stream keyed by the run seed
//! plus a small tuple of indices (replica, particle, step, ...). Results are
//! therefore independent of how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::scalar::Real;

pub type SubstreamRng = ChaCha8Rng;

/// Distinguishes the purposes a stream can serve so that, e.g., particle 3's
/// move at step 5 never shares a stream with the rebirth draws of step 5.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamKind {
    Replica = 1,
    ParticleInit = 2,
    ParticleStep = 3,
    Rebirth = 4,
    Validator = 5,
    Coupling = 6,
    InitialLaw = 7,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic key derivation. Not cryptographic; only needs to spread
/// neighbouring index tuples apart.
pub fn derive_key(seed: u64, kind: StreamKind, indices: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ ((kind as u64) << 56));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i));
    }
    h
}

/// The run seed selects the ChaCha key; the derived index key selects the
/// stream within it.
pub fn substream(seed: u64, kind: StreamKind, indices: &[u64]) -> SubstreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(derive_key(seed, kind, indices));
    rng
}

#[inline]
pub fn standard_normal<T: Real, R: rand::Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}

#[inline]
pub fn uniform<T: Real, R: rand::Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.random::<f64>())
}

#[inline]
pub fn exp1<T: Real, R: rand::Rng + ?Sized>(rng: &mut R) -> T {
    let e: f64 = Exp1.sample(rng);
    T::lit(e)
}
