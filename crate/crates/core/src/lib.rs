//! Library for evaluating the strength of evidence that two mobile phones
//! were carried by the same person, based on their cell-tower registration
//! tracks.
//!
//! The pipeline, end to end:
//!
//! 1. [`ingest`] parses CDR files, tower databases and continuous network
//!    monitor logs into per-phone measurement streams.
//! 2. [`synthesis`] subsamples continuous logs into synthetic CDRs (Poisson
//!    event times), cuts measurements into filtered 15-hour daily tracks and
//!    pairs tracks into labeled same-user / different-user pairs.
//! 3. [`switching`] extracts *switches* (time-adjacent cross-phone
//!    measurement pairs) and computes per-switch features.
//! 4. [`scoring`] turns a track pair into a similarity score in [0, 1],
//!    by default with a two-stage logistic regression over switches.
//! 5. [`calibration`] converts scores into likelihood ratios and bounds
//!    them so the system stays conservative at the tails.
//! 6. [`evaluation`] measures systems with Cllr over repeated
//!    train/calibrate/test splits and runs the sensitivity sweeps.
//!
//! [`sim`] provides a fully synthetic commuting population so the whole
//! pipeline can be exercised without confidential data.

pub mod calibration;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod geo;
pub mod ingest;
pub mod logistic;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod scoring;
pub mod sim;
pub mod switching;
pub mod synthesis;
pub mod track;

pub use error::Error;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Stable 64-bit FNV-1a hash, used to derive per-phone RNG streams.
///
/// Not `DefaultHasher` so that derived seeds never change across toolchain
/// releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derive a child seed from a master seed and a stream tag (splitmix64 mix).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
