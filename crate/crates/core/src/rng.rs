//! Seeded, platform-independent random streams.
//!
//! Every trajectory is driven by a xoshiro256++ generator. The generator for
//! trial `j` of a stream with seed `s` is seeded with the `(j + 1)`-th output
//! of a SplitMix64 sequence started at `s`:
//!
//! ```text
//! child(s, j) = mix(s + (j + 1) · 0x9E3779B97F4A7C15)      (wrapping)
//! mix(z)      = SplitMix64 finalizer
//! ```
//!
//! and the 64-bit child seed is expanded to xoshiro state by
//! `Xoshiro256PlusPlus::seed_from_u64`. Results therefore depend only on the
//! master seed and the trial index, never on scheduling.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type TrialRng = Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for trial `index` of the stream seeded with `master`.
pub fn child_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

/// Seed of a named sub-stream, e.g. one (condition, arm) pair of a sweep.
pub fn stream_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(master), |acc, &p| child_seed(acc, p))
}

pub fn trial_rng(master: u64, index: u64) -> TrialRng {
    TrialRng::seed_from_u64(child_seed(master, index))
}

/// Uniform draw from `(0, 1]` with 53 bits of resolution; never returns 0.
#[inline]
pub fn unit_open_closed<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `lo..=hi` by rejection (no modulo bias).
pub fn uniform_inclusive<R: RngCore + ?Sized>(rng: &mut R, lo: u64, hi: u64) -> u64 {
    assert!(lo <= hi, "empty range {lo}..={hi}");
    let span = hi - lo;
    if span == u64::MAX {
        return rng.next_u64();
    }
    let n = span + 1;
    let zone = u64::MAX - (u64::MAX - n + 1) % n;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return lo + v % n;
        }
    }
}
