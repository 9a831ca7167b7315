//! Shared error type for every pipeline stage.

use thiserror::Error;

/// Errors surfaced by the library.
///
/// Variants map onto the failure classes the stage contracts distinguish:
/// bad configuration, bad stage input, transport faults that survived the
/// retry budget, malformed wire payloads, and degenerate statistical inputs.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration (unsupported language pair,
    /// missing base URL, dimension mismatch against an index, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid stage input (misaligned ids, unknown dataset tag, gold id
    /// not present among the options, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A backend call failed after exhausting its retry budget.
    #[error("backend error after {attempts} attempt(s): {message}")]
    Backend { attempts: u32, message: String },

    /// The backend answered, but the body did not match the wire protocol.
    /// The raw payload is attached for diagnosis.
    #[error("protocol error: {message}; payload: {payload}")]
    Protocol { message: String, payload: String },

    /// A mathematical operation received an input outside its domain
    /// (zero vector for cosine, mismatched dimensions, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A statistic is undefined for the given sample (zero variance,
    /// pooled proportion of 0 or 1, sample too small).
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
