//! Deterministic random streams.
//!
//! Every stream is a xoshiro256++ generator. A stream is identified by a 64-bit
//! seed plus a byte label: the label is folded into the seed with the SplitMix64
//! finalizer, 8 bytes at a time, and the result seeds the generator through
//! `Xoshiro256PlusPlus::seed_from_u64` (itself SplitMix64-expanded). Integer
//! draws go through `u64` ranges so results do not depend on pointer width.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Stream = Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function applied to `x + gamma`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix `seed` and `label` into a single 64-bit stream key.
pub fn mix_label(seed: u64, label: &[u8]) -> u64 {
    let mut h = splitmix64(seed);
    for chunk in label.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        h = splitmix64(h ^ u64::from_le_bytes(word));
    }
    splitmix64(h ^ label.len() as u64)
}

pub fn derive_stream(seed: u64, label: impl AsRef<[u8]>) -> Stream {
    Stream::seed_from_u64(mix_label(seed, label.as_ref()))
}

/// Uniform index in `0..n`.
pub fn index_below<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    assert!(n > 0, "empty range");
    rng.random_range(0..n as u64) as usize
}

/// `k` distinct indices from `0..n`, uniformly without replacement, in draw order.
pub fn sample_without_replacement<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    assert!(k <= n, "cannot draw {k} distinct items from {n}");
    // Partial Fisher-Yates over a virtual identity permutation.
    let mut swapped = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let j = i + index_below(rng, n - i);
        let at_j = *swapped.get(&j).unwrap_or(&j);
        let at_i = *swapped.get(&i).unwrap_or(&i);
        swapped.insert(j, at_i);
        out.push(at_j);
    }
    out
}
