//! Character n-gram F-score (chrF) and its word-ngram extension (chrF++).
//!
//! Scores are in [0, 1]. For each n-gram order, precision and recall over
//! n-gram multisets combine into F_beta; the final score is the uniform
//! average over all non-degenerate orders. Character n-grams are taken on
//! the text with Unicode whitespace removed; word n-grams (chrF++) on
//! whitespace-split tokens.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Parameters of the chrF family.
///
/// `word_n = 0` gives plain chrF; `word_n = 2` gives the usual chrF++.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChrfParams {
    pub char_n: usize,
    pub word_n: usize,
    pub beta: f64,
}

impl ChrfParams {
    pub fn chrf() -> Self {
        ChrfParams {
            char_n: 6,
            word_n: 0,
            beta: 2.0,
        }
    }

    pub fn chrf_pp() -> Self {
        ChrfParams {
            char_n: 6,
            word_n: 2,
            beta: 2.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.char_n < 1 {
            return Err(Error::Input("chrF requires char_n >= 1".into()));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(Error::Input("chrF requires beta > 0".into()));
        }
        Ok(())
    }
}

/// Match statistics for one n-gram order.
#[derive(Debug, Clone, Copy, Default)]
struct OrderStats {
    hyp_total: u64,
    ref_total: u64,
    matched: u64,
}

impl OrderStats {
    fn add(&mut self, other: OrderStats) {
        self.hyp_total += other.hyp_total;
        self.ref_total += other.ref_total;
        self.matched += other.matched;
    }

    /// An order is degenerate when neither side has any n-gram of it
    /// (e.g. word bigrams of single-word strings); degenerate orders are
    /// skipped from the average instead of scoring 0.
    fn degenerate(&self) -> bool {
        self.hyp_total == 0 && self.ref_total == 0
    }

    fn f_score(&self, beta: f64) -> f64 {
        let precision = if self.hyp_total > 0 {
            self.matched as f64 / self.hyp_total as f64
        } else {
            0.0
        };
        let recall = if self.ref_total > 0 {
            self.matched as f64 / self.ref_total as f64
        } else {
            0.0
        };
        let beta2 = beta * beta;
        let denom = beta2 * precision + recall;
        if denom == 0.0 {
            0.0
        } else {
            (1.0 + beta2) * precision * recall / denom
        }
    }
}

fn ngram_counts<T: Clone + Eq + std::hash::Hash>(units: &[T], n: usize) -> HashMap<Vec<T>, u64> {
    let mut counts = HashMap::new();
    if n == 0 || units.len() < n {
        return counts;
    }
    for window in units.windows(n) {
        *counts.entry(window.to_vec()).or_insert(0) += 1;
    }
    counts
}

fn order_stats<T: Clone + Eq + std::hash::Hash>(hyp: &[T], reference: &[T], n: usize) -> OrderStats {
    let hyp_counts = ngram_counts(hyp, n);
    let ref_counts = ngram_counts(reference, n);
    let mut stats = OrderStats {
        hyp_total: hyp_counts.values().sum(),
        ref_total: ref_counts.values().sum(),
        matched: 0,
    };
    for (ngram, &hc) in &hyp_counts {
        if let Some(&rc) = ref_counts.get(ngram) {
            stats.matched += hc.min(rc);
        }
    }
    stats
}

fn chars_no_whitespace(text: &str) -> Vec<char> {
    text.chars().filter(|c| !c.is_whitespace()).collect()
}

fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Per-order statistics for one (hypothesis, reference) pair: first the
/// `char_n` character orders, then the `word_n` word orders.
fn pair_stats(hypothesis: &str, reference: &str, params: &ChrfParams) -> Vec<OrderStats> {
    let hyp_chars = chars_no_whitespace(hypothesis);
    let ref_chars = chars_no_whitespace(reference);
    let hyp_words = words(hypothesis);
    let ref_words = words(reference);

    let mut stats = Vec::with_capacity(params.char_n + params.word_n);
    for n in 1..=params.char_n {
        stats.push(order_stats(&hyp_chars, &ref_chars, n));
    }
    for n in 1..=params.word_n {
        stats.push(order_stats(&hyp_words, &ref_words, n));
    }
    stats
}

/// Averages F over non-degenerate orders. When every order is degenerate
/// (both strings empty) the score is 1.0 by convention.
fn score_from_stats(stats: &[OrderStats], beta: f64) -> f64 {
    let mut sum = 0.0;
    let mut effective = 0usize;
    for s in stats {
        if s.degenerate() {
            continue;
        }
        sum += s.f_score(beta);
        effective += 1;
    }
    if effective == 0 {
        1.0
    } else {
        sum / effective as f64
    }
}

/// Sentence-level chrF (`params.word_n` must be 0).
pub fn chrf(hypothesis: &str, reference: &str, params: &ChrfParams) -> Result<f64> {
    params.validate()?;
    if params.word_n != 0 {
        return Err(Error::Input("chrf expects word_n == 0; use chrf_pp".into()));
    }
    Ok(score_from_stats(
        &pair_stats(hypothesis, reference, params),
        params.beta,
    ))
}

/// Sentence-level chrF++ (`params.word_n` must be >= 1).
pub fn chrf_pp(hypothesis: &str, reference: &str, params: &ChrfParams) -> Result<f64> {
    params.validate()?;
    if params.word_n < 1 {
        return Err(Error::Input("chrf_pp expects word_n >= 1".into()));
    }
    Ok(score_from_stats(
        &pair_stats(hypothesis, reference, params),
        params.beta,
    ))
}

/// Corpus- and sentence-level scores for a set of pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusScore {
    /// F over n-gram statistics summed across the corpus before combining.
    pub corpus: f64,
    /// Independent per-pair scores, input order.
    pub per_item: Vec<f64>,
}

/// Corpus-level chrF/chrF++ over `(hypothesis, reference)` pairs.
///
/// The corpus score sums the per-order match statistics over all pairs and
/// only then combines them into F; the per-item scores are the plain
/// sentence-level values.
pub fn corpus_chrf(pairs: &[(String, String)], params: &ChrfParams) -> Result<CorpusScore> {
    params.validate()?;
    if pairs.is_empty() {
        return Err(Error::Input("corpus_chrf requires at least one pair".into()));
    }
    let mut totals = vec![OrderStats::default(); params.char_n + params.word_n];
    let mut per_item = Vec::with_capacity(pairs.len());
    for (hyp, reference) in pairs {
        let stats = pair_stats(hyp, reference, params);
        for (total, s) in totals.iter_mut().zip(&stats) {
            total.add(*s);
        }
        per_item.push(score_from_stats(&stats, params.beta));
    }
    Ok(CorpusScore {
        corpus: score_from_stats(&totals, params.beta),
        per_item,
    })
}
