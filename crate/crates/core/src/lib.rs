//! Linguistic steganography over a keyed vocabulary partition.
//!
//! A shared 128-bit key selects a pseudo-random subset of the vocabulary
//! (the keyword set). The sender biases a language model's logits toward
//! that subset while regenerating a cover text; the receiver counts keyword
//! tokens and asks how surprising that count is under Binomial(n, delta).
//! Zero-bit detection thresholds the survival probability; multi-bit decoding
//! picks the key (symbol) with the smallest one.

pub mod channels;
pub mod detector;
mod error;
pub mod evalkit;
pub mod exec;
pub mod generator;
pub mod keying;
pub mod rng;
pub mod text_codec;

pub use error::{Error, Result};
pub use text_codec::TokenId;
