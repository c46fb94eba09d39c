//! Concept-balanced sampling and offline sequence packing for multimodal
//! training corpora.
//!
//! The pipeline runs in five stages, each usable on its own:
//!
//! 1. [`manifest`]: ingest a corpus manifest (or synthesize one) and compute
//!    per-sample token lengths, including visual tokens from image geometry.
//! 2. [`concepts`]: assign each image its top-K nearest concepts by cosine
//!    similarity of precomputed embeddings.
//! 3. [`balance`]: weight samples by the inverse frequencies of their
//!    concepts, draw a balanced subset, and report entropy/Gini/coverage.
//! 4. [`packing`]: consolidate samples into fixed-capacity packed sequences.
//! 5. [`cli`]: the `conpack` command line, wiring the stages together.
//!
//! All randomness is seeded and every parallel stage produces output that is
//! independent of the worker count.

pub mod balance;
pub mod cli;
pub mod concepts;
pub mod error;
pub mod manifest;
pub mod packing;
pub mod rng;

pub use error::{Error, Result};
