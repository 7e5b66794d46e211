//! Numerical core of `mmfuse`: a multimodal variational encoder-decoder that
//! fuses per-modality Gaussian experts by product of experts, trains against
//! an information-bottleneck bound, and decodes popularity as a label, a
//! scalar or a sequence.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! experiment sweeps live in the `mmfuse` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod decoders;
pub mod error;
pub mod math;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod noise;
pub mod objective;
pub mod poe;
pub mod synth;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
