//! Toolkit for building aligned tri-lingual medical knowledge bases from
//! pre-extracted Wikipedia pages, generating knowledge-grounded reasoning
//! traces for multiple-choice medical QA through a pluggable LLM backend,
//! verifying and filtering those traces, and measuring their downstream
//! effect with a few-shot evaluation harness and significance statistics.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod gateway;
pub mod jsonl;
pub mod kb;
pub mod lang;
pub mod metrics;
pub mod pipeline;
pub mod qa;
pub mod retrieval;
pub mod util;

pub use error::{Error, Result};
pub use lang::Lang;
pub use qa::{OptionId, QAItem, Source, Split};
