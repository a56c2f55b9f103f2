//! Recursive speculative decoding over tabular toy language models.
//!
//! Draft trees are built by sampling without replacement (constant branching
//! via Gumbel-Top-k, or stochastic beam search) and verified with recursive
//! rejection sampling, which emits tokens distributed exactly as the target
//! model. Single-sequence speculative decoding and SpecTr-style K-SEQ are
//! included as baselines, together with exact enumeration oracles and the
//! block-efficiency / MBSU metrics.

pub mod analysis;
pub mod decode;
pub mod error;
pub mod lm;
pub mod prob;
pub mod rng;
pub mod tree;
pub mod verify;

pub use decode::{decode, DecodeTrace, DecoderConfig, DecoderKind};
pub use error::{Error, Result};
pub use lm::{LanguageModel, ModelPair, NGramModel, Transforms};
pub use prob::{Distribution, Token};
pub use rng::RngStream;
pub use tree::DraftTree;
