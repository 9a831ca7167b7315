//! Translation-quality metrics, accuracy, and significance statistics.

pub mod chrf;
pub mod external;
pub mod stats;

pub use chrf::{chrf, chrf_pp, corpus_chrf, ChrfParams, CorpusScore};
pub use external::{ExternalScorer, ScorerConfig};
pub use stats::{
    erf, erfc, normal_cdf, normal_two_sided_p, one_sample_t_test, student_t_two_sided_p,
    two_proportion_z_test, StatResult,
};

use crate::error::{Error, Result};
use crate::qa::OptionId;

/// Fraction of predictions exactly matching the gold ids; an absent
/// prediction counts as wrong.
pub fn accuracy(predictions: &[Option<OptionId>], golds: &[OptionId]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::Input(format!(
            "accuracy: {} predictions vs {} golds",
            predictions.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Err(Error::Input("accuracy requires at least one pair".into()));
    }
    let correct = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| p.as_deref() == Some(g.as_str()))
        .count();
    Ok(correct as f64 / golds.len() as f64)
}
