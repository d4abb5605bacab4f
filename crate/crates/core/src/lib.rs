//! Aspect-aware coarse-to-fine review generation.
//!
//! A review for a `(user, item, rating)` context is produced in three
//! stages: a sequence of aspect labels, one syntactic sketch per aspect, and
//! finally the words of each sentence filled into its sketch. Aspects come
//! from a sentence-level topic model with a background distribution
//! ([`lda`]); sketches are mined from the corpus ([`sketch`]); the three
//! decoders are GRU attention networks built on a small reverse-mode
//! differentiation kernel ([`nn`]).

pub mod aspect_decoder;
pub mod beam;
pub mod corpus;
mod error;
pub mod eval;
pub mod lda;
pub mod nn;
pub mod pipeline;
pub mod review_decoder;
pub mod sketch;
pub mod sketch_decoder;
pub mod synth;

pub use error::{Error, Result};
