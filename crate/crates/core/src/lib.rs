//! Grounded persuasive real-estate descriptions.
//!
//! The pipeline maps listing attributes to marketable features, personalizes
//! them to a buyer, finds features that stand out against peer listings,
//! writes a description through a pluggable language model, and checks the
//! result for factual faithfulness. The [`arena`] module rates competing
//! description generators from pairwise buyer choices.

pub mod agent;
pub mod arena;
pub mod error;
pub mod factcheck;
pub mod generation;
pub mod grounding;
pub mod listing;
pub mod llm;
pub mod normalize;
pub mod personalization;
pub mod prompts;
pub mod schema;
pub mod surprisal;
pub mod synthetic;
mod util;

pub use error::{Error, Result};
pub use util::sha256_hex;
