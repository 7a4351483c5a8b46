//! Seeded pseudo-random numbers for probes and pair subsampling.
//!
//! The generator is xoshiro256++ with its 256-bit state expanded from a `u64`
//! seed by SplitMix64. Uniform `f64` draws take the top 53 bits of a 64-bit
//! output scaled by `2^-53`, so every stream can be reproduced outside Rust.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Prng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> Prng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}
