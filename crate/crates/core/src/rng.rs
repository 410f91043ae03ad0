//! Seed derivation.
//!
//! A single root seed fans out into independent streams. A stream seed is
//! obtained by folding a tag and a path of indices into the root with the
//! SplitMix64 finalizer:
//!
//! ```text
//! h0 = mix(root ^ GOLDEN)
//! h1 = mix(h0 ^ tag)            (tag identifies the stream family)
//! hk = mix(h(k-1) + GOLDEN ^ path[k-2])
//! ```
//!
//! Each derived seed then seeds a `ChaCha8Rng`. Because the families are
//! disjoint, dataset draws, solver sample indices and sibling replacements
//! never share a generator, which is what lets a stability experiment couple
//! two runs through identical index streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every random stream in the crate.
pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Dataset generation (validation, training and test sets).
    Data = 1,
    /// Per-run sample-index sequences.
    Indices = 2,
    /// Sibling replacement samples.
    Sibling = 3,
    /// Random initial iterates.
    Init = 4,
    /// Problem instance construction (random matrices).
    Instance = 5,
    /// Index subsets chosen by the stability estimator.
    Subset = 6,
    /// Uncoupled sibling runs.
    Uncoupled = 7,
    /// Audit points.
    Audit = 8,
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed for `stream` along `path` from `root`.
pub fn derive(root: u64, stream: Stream, path: &[u64]) -> u64 {
    let mut h = mix(mix(root ^ GOLDEN) ^ stream as u64);
    for &p in path {
        h = mix(h.wrapping_add(GOLDEN) ^ p);
    }
    h
}

/// Generator seeded directly from a 64-bit seed.
pub fn stream_rng(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for a derived stream.
pub fn derived_rng(root: u64, stream: Stream, path: &[u64]) -> StreamRng {
    stream_rng(derive(root, stream, path))
}
