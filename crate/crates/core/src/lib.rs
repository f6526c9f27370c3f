//! Construction policies for capacitated routing with time windows.
//!
//! The crate pairs an attention encoder-decoder policy, trained with REINFORCE
//! and a multi-start (POMO) shared baseline, with two feasibility
//! environments: a single-pass check for C-VRP-TW and an insertion heuristic
//! with precomputed waiting times and slacks for C-PDP-TW. Exhaustive oracles
//! for small instances back every approximate check.

#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod cvrptw;
pub mod env;
pub mod exact;
pub mod exec;
pub mod instances;
pub mod numeric;
pub mod pdptw;
pub mod policy;
pub mod solution;
pub mod training;
pub mod verify;

/// Absolute tolerance used by every time-window comparison.
pub const TIME_EPS: f64 = 1e-9;

/// SplitMix64 finalizer, used to derive independent per-task seeds.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h = h.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}
