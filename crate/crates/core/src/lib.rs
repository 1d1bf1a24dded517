//! Wrist-worn ultrasonic hand-face interaction sensing.
//!
//! The crate covers the whole path from transmitted chirps to class
//! probabilities:
//!
//! - [`cfmcw`]: chirp synthesis, band filtering, cross-correlation echo frames
//!   and differential echo profiles.
//! - [`sim`]: a parametric scene simulator standing in for the hardware and
//!   for human participants, plus labelled dataset synthesis.
//! - [`dataset`]: sliding windows, crops, patches, augmentation,
//!   normalization and manifest loading.
//! - [`model`]: the patch transformer with hand-written backpropagation,
//!   focal loss, Adam with cosine annealing, metrics, leave-one-participant-out
//!   evaluation and fine-tuning.
//! - [`formats`]: `.wsep` echo-profile files and raw audio readers/writers.
//! - [`plot`]: grayscale PGM rendering of echo profiles.

pub mod cfmcw;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod model;
pub mod plot;
pub mod sim;

pub use error::{Error, Result};
