//! Silent-speech recognition from three-channel facial sEMG.
//!
//! The crate covers the whole offline pipeline:
//!
//! - [`signal`]: zero-mean, wavelet denoising, Butterworth band limiting,
//!   rectification and the sliding RMS envelope.
//! - [`words`]: prominence-based peak detection and extraction of fixed
//!   `1500 x 3` word windows from a ten-repetition trial.
//! - [`dataset`]: labeled word datasets, a synthetic generator, stratified
//!   splits, standardization and archive formats.
//! - [`nn`]: a small fixed-architecture backprop engine for the 1D ResNet
//!   backbone, losses, Adam and an early-stopping training loop.
//! - [`ensemble`]: soft-voting ensembles of independently trained backbones.
//! - [`distill`]: temperature-based knowledge distillation into a compact student.
//! - [`harness`]: metrics, latency measurement and experiment grids.

pub mod dataset;
pub mod distill;
pub mod ensemble;
mod error;
pub mod harness;
pub mod nn;
pub mod signal;
pub mod words;

pub use error::{Error, Result};

/// Number of word classes (NATO phonetic alphabet).
pub const CLASS_COUNT: usize = 26;

/// Channel order used everywhere: levator anguli oris, depressor anguli oris,
/// zygomaticus major.
pub const CHANNEL_NAMES: [&str; 3] = ["lao", "dao", "zm"];

/// Class names indexed by class id.
pub const CLASS_NAMES: [&str; CLASS_COUNT] = [
    "Alfa", "Bravo", "Charlie", "Delta", "Echo", "Foxtrot", "Golf", "Hotel", "India", "Juliett",
    "Kilo", "Lima", "Mike", "November", "Oscar", "Papa", "Quebec", "Romeo", "Sierra", "Tango",
    "Uniform", "Victor", "Whiskey", "X-ray", "Yankee", "Zulu",
];
