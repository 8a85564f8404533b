//! Toolkit for building, cleaning, analyzing and evaluating fact-verification
//! datasets over paragraph-granular corpora.

pub mod analysis;
pub mod annotation;
pub mod config;
pub mod corpus;
pub mod dictionary;
pub mod error;
pub mod jsonl;
pub mod localization;
pub mod pipeline;
pub mod retrieval;
pub mod synth;
pub mod text;
pub mod types;

pub use error::{Error, Result};
pub use types::{Label, Split, Timestamp};
