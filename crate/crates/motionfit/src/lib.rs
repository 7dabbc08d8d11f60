//! Motion-augmented self-training on a synthetic video corpus.
//!
//! The pipeline has three stages: train a motion pseudo-label generator on
//! TV-L1 optical flow of a small labeled corpus, cluster its clip features to
//! pseudo-label a larger unlabeled corpus at a chosen temporal granularity,
//! then self-train an appearance network on those pseudo-labels and fine-tune
//! it on a downstream labeled corpus. Everything is seed-deterministic and
//! runs on the CPU.

pub mod codec;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod flow;
pub mod losses;
pub mod net;
pub mod pipeline;
pub mod pseudolabel;
pub mod rng;

pub use error::{Error, Result};
