//! Building blocks for spoken-digit ablation benchmarks.
//!
//! The crate decomposes a recognition pipeline into independent stages so
//! that the contribution of each can be measured on its own:
//!
//! ```text
//! audio clip -> filterbank -> [binary mask -> single-node reservoir] -> linear readout
//! ```
//!
//! * [`dataset`] ingests manifests and WAV files, builds balanced subsets and
//!   synthesizes a license-free surrogate corpus.
//! * [`filterbank`] turns clips into time-frequency feature matrices.
//! * [`reservoir`] drives a simulated spin-torque oscillator through a
//!   time-multiplexed input and collects virtual-neuron states.
//! * [`readout`] trains a pseudo-inverse linear classifier and scores it.
//! * [`evalharness`] runs exhaustive subset cross-validation, gain
//!   decomposition, exponent sweeps and condition-stratified reports.
//! * [`container`] reads and writes the binary cache files.

pub mod container;
pub mod dataset;
pub mod error;
pub mod evalharness;
pub mod filterbank;
pub mod readout;
pub mod reservoir;

pub use error::{Error, Result};

/// Number of digit categories.
pub const N_DIGITS: usize = 10;
