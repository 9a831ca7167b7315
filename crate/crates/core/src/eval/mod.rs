//! Few-shot evaluation harness: similarity-selected shots, baseline vs
//! traced runs, and outcome collection.
//!
//! The controlled-comparison requirement: shot selection depends only on
//! the test item and the pool, never on the mode, so baseline and traced
//! runs see identical shot qa_ids per item.

pub mod report;

pub use report::{
    aggregate, correction_analysis, delta_report, render_csv, render_text_table, AccuracyCell,
    AccuracyTable, CorrectionRate, CorrectionReport, DeltaCell, DeltaReport,
};

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::gateway::{render_eval_prompt, CallMeta, EvalMode, EvalShot, Gateway};
use crate::lang::Lang;
use crate::pipeline::extract::extract_answer;
use crate::qa::{OptionId, QAItem, Source};
use crate::retrieval::{cosine, format_query, Embedder, EmbeddingVector};
use crate::util::parallel_map_ordered;

/// A candidate pool of train items with precomputed query embeddings and,
/// when available, their verified traces.
pub struct ShotPool {
    items: Vec<QAItem>,
    vectors: Vec<EmbeddingVector>,
    traces: HashMap<String, String>,
}

impl ShotPool {
    /// Builds the pool. When `traces` is provided the pool keeps only
    /// items with a verified trace, so baseline and traced runs share the
    /// exact same candidate set.
    pub fn build(
        items: Vec<QAItem>,
        embedder: &Embedder,
        traces: Option<HashMap<String, String>>,
    ) -> Result<ShotPool> {
        let items: Vec<QAItem> = match &traces {
            Some(map) => items
                .into_iter()
                .filter(|i| map.contains_key(&i.qa_id))
                .collect(),
            None => items,
        };
        let queries: Vec<String> = items.iter().map(format_query).collect();
        let vectors = embedder.embed(&queries)?;
        Ok(ShotPool {
            items,
            vectors,
            traces: traces.unwrap_or_default(),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, qa_id: &str) -> Option<&QAItem> {
        self.items.iter().find(|i| i.qa_id == qa_id)
    }

    pub fn trace(&self, qa_id: &str) -> Option<&str> {
        self.traces.get(qa_id).map(String::as_str)
    }
}

/// Shot selection for one test item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotSelection {
    pub qa_ids: Vec<String>,
    pub similarities: Vec<f64>,
    /// Set when the pool had fewer than the requested number of shots.
    pub short: bool,
}

/// Picks the `n` most similar pool items by cosine over format_query
/// embeddings; ties break by ascending qa_id and the test item itself is
/// excluded by qa_id.
pub fn select_shots(
    test: &QAItem,
    test_vector: &EmbeddingVector,
    pool: &ShotPool,
    n: usize,
) -> Result<ShotSelection> {
    if pool.is_empty() {
        return Err(Error::Input("shot pool is empty".into()));
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(pool.items.len());
    for (idx, item) in pool.items.iter().enumerate() {
        if item.qa_id == test.qa_id {
            continue;
        }
        if item.lang != test.lang {
            return Err(Error::Input(format!(
                "pool item {} is {} but the test item is {}",
                item.qa_id, item.lang, test.lang
            )));
        }
        scored.push((idx, cosine(test_vector, &pool.vectors[idx])?));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| pool.items[a.0].qa_id.cmp(&pool.items[b.0].qa_id))
    });
    let short = scored.len() < n;
    if short {
        log::warn!(
            "shot pool for {} has only {} candidates of {n} requested",
            test.qa_id,
            scored.len()
        );
    }
    scored.truncate(n);
    Ok(ShotSelection {
        qa_ids: scored
            .iter()
            .map(|(idx, _)| pool.items[*idx].qa_id.clone())
            .collect(),
        similarities: scored.iter().map(|(_, s)| *s).collect(),
        short,
    })
}

/// Per-item evaluation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub qa_id: String,
    pub lang: Lang,
    pub source: Source,
    pub mode: EvalMode,
    pub model: String,
    pub predicted: Option<OptionId>,
    pub correct: bool,
    pub shot_ids: Vec<String>,
}

/// Outcomes plus the items whose backend calls failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub mode: EvalMode,
    pub model: String,
    pub outcomes: Vec<EvalOutcome>,
    pub failed: Vec<(String, String)>,
}

/// Parses a model reply into an option id: a lone digit in a short reply,
/// otherwise the trace-extraction rule.
pub fn parse_prediction(reply: &str, lang: Lang) -> Option<OptionId> {
    let trimmed = reply.trim();
    if trimmed.chars().count() <= 3 {
        let digits: Vec<char> = trimmed
            .chars()
            .filter(|c| ('1'..='5').contains(c))
            .collect();
        if let [single] = digits.as_slice() {
            return Some(single.to_string());
        }
    }
    extract_answer(reply, lang)
}

/// Runs one (mode, model) evaluation pass over `items`.
///
/// Backend failures mark the item failed and leave it out of the outcome
/// list; accuracy denominators therefore exclude transport faults, which
/// are reported separately.
pub fn run_eval(
    items: &[QAItem],
    mode: EvalMode,
    pool: &ShotPool,
    embedder: &Embedder,
    gateway: &Gateway,
    shot_count: usize,
    concurrency: usize,
) -> Result<EvalRun> {
    let queries: Vec<String> = items.iter().map(format_query).collect();
    let vectors = embedder.embed(&queries)?;
    let indexed: Vec<(usize, &QAItem)> = items.iter().enumerate().collect();

    let results = parallel_map_ordered(&indexed, concurrency, |_, (idx, qa)| {
        evaluate_one(qa, &vectors[*idx], mode, pool, gateway, shot_count, *idx)
    });

    let mut outcomes = Vec::with_capacity(items.len());
    let mut failed = Vec::new();
    for (item, result) in items.iter().zip(results) {
        match result {
            Ok(outcome) => outcomes.push(outcome),
            Err(Error::Backend { message, .. }) => {
                failed.push((item.qa_id.clone(), message));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(EvalRun {
        mode,
        model: gateway.model_name().to_string(),
        outcomes,
        failed,
    })
}

fn evaluate_one(
    qa: &QAItem,
    vector: &EmbeddingVector,
    mode: EvalMode,
    pool: &ShotPool,
    gateway: &Gateway,
    shot_count: usize,
    index: usize,
) -> Result<EvalOutcome> {
    let selection = select_shots(qa, vector, pool, shot_count)?;
    let shot_items: Vec<&QAItem> = selection
        .qa_ids
        .iter()
        .map(|id| {
            pool.item(id)
                .ok_or_else(|| Error::Input(format!("selected shot {id} vanished from pool")))
        })
        .collect::<Result<_>>()?;
    let shots: Vec<EvalShot<'_>> = shot_items
        .iter()
        .map(|item| EvalShot {
            qa: item,
            trace: pool.trace(&item.qa_id),
        })
        .collect();
    let messages = render_eval_prompt(mode, &shots, qa)?;
    let reply = gateway.chat_with(
        CallMeta {
            item_id: Some(&qa.qa_id),
            ordinal: Some(index as u64 + 1),
        },
        &messages,
    )?;
    let predicted = parse_prediction(&reply, qa.lang);
    let correct = predicted.as_deref() == Some(qa.gold.as_str());
    Ok(EvalOutcome {
        qa_id: qa.qa_id.clone(),
        lang: qa.lang,
        source: qa.source,
        mode,
        model: gateway.model_name().to_string(),
        predicted,
        correct,
        shot_ids: selection.qa_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::BackendConfig;
    use crate::qa::Split;
    use crate::retrieval::EmbedConfig;
    use std::collections::BTreeMap;

    pub(crate) fn qa(id: &str, question: &str, gold: &str) -> QAItem {
        let mut options = BTreeMap::new();
        for key in ["1", "2", "3", "4"] {
            options.insert(key.to_string(), Some(format!("option {key}")));
        }
        QAItem {
            qa_id: id.into(),
            source: Source::MedQA,
            split: Split::Train,
            lang: Lang::En,
            question: question.into(),
            options,
            gold: gold.into(),
        }
    }

    fn embedder() -> Embedder {
        Embedder::from_config(&EmbedConfig::mock("embed", 24)).unwrap()
    }

    #[test]
    fn parse_prediction_accepts_short_replies_and_traces() {
        assert_eq!(parse_prediction("2", Lang::En).as_deref(), Some("2"));
        assert_eq!(parse_prediction(" (4)", Lang::En).as_deref(), Some("4"));
        assert_eq!(
            parse_prediction("blah\nConclusion: 3", Lang::En).as_deref(),
            Some("3")
        );
        assert_eq!(parse_prediction("12", Lang::En), None);
        assert_eq!(parse_prediction("maybe", Lang::En), None);
    }

    #[test]
    fn shot_selection_excludes_self_and_matches_brute_force() {
        let embedder = embedder();
        let pool_items: Vec<QAItem> = (0..50)
            .map(|i| qa(&format!("p{i:02}"), &format!("question number {i}"), "1"))
            .collect();
        let pool = ShotPool::build(pool_items.clone(), &embedder, None).unwrap();
        let test = qa("p07", "question number 7", "1"); // same id as a pool item
        let test_vec = embedder.embed(&[format_query(&test)]).unwrap().remove(0);

        let selection = select_shots(&test, &test_vec, &pool, 2).unwrap();
        assert!(!selection.qa_ids.contains(&"p07".to_string()));
        assert!(!selection.short);

        // Brute force oracle over the same candidates.
        let mut oracle: Vec<(String, f64)> = pool_items
            .iter()
            .filter(|i| i.qa_id != "p07")
            .map(|i| {
                let v = embedder.embed(&[format_query(i)]).unwrap().remove(0);
                (i.qa_id.clone(), cosine(&test_vec, &v).unwrap())
            })
            .collect();
        oracle.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then_with(|| a.0.cmp(&b.0))
        });
        let expected: Vec<String> = oracle.into_iter().take(2).map(|(id, _)| id).collect();
        assert_eq!(selection.qa_ids, expected);
    }

    #[test]
    fn short_pool_is_flagged() {
        let embedder = embedder();
        let pool = ShotPool::build(vec![qa("p1", "only one", "1")], &embedder, None).unwrap();
        let test = qa("t1", "test", "1");
        let v = embedder.embed(&[format_query(&test)]).unwrap().remove(0);
        let selection = select_shots(&test, &v, &pool, 2).unwrap();
        assert_eq!(selection.qa_ids.len(), 1);
        assert!(selection.short);
    }

    #[test]
    fn traced_pool_keeps_only_items_with_traces() {
        let embedder = embedder();
        let items = vec![qa("p1", "alpha", "1"), qa("p2", "beta", "1")];
        let traces: HashMap<String, String> =
            [("p2".to_string(), "Conclusion: 1".to_string())].into();
        let pool = ShotPool::build(items, &embedder, Some(traces)).unwrap();
        assert_eq!(pool.len(), 1);
        assert!(pool.item("p2").is_some());
        assert_eq!(pool.trace("p2"), Some("Conclusion: 1"));
    }

    #[test]
    fn fixed_answer_accuracy_over_a_known_fixture() {
        let embedder = embedder();
        let pool = ShotPool::build(
            vec![qa("p1", "pool a", "1"), qa("p2", "pool b", "2"), qa("p3", "pool c", "3")],
            &embedder,
            None,
        )
        .unwrap();
        // 4 of 10 golds are "2".
        let golds = ["2", "1", "2", "3", "2", "4", "1", "2", "3", "4"];
        let items: Vec<QAItem> = golds
            .iter()
            .enumerate()
            .map(|(i, g)| qa(&format!("t{i}"), &format!("test {i}"), g))
            .collect();
        let gateway = Gateway::from_config(BackendConfig::mock("FIXED_ANSWER=2")).unwrap();
        let run = run_eval(&items, EvalMode::Baseline, &pool, &embedder, &gateway, 2, 4).unwrap();
        assert!(run.failed.is_empty());
        let correct = run.outcomes.iter().filter(|o| o.correct).count();
        assert_eq!(correct, 4);
        assert_eq!(run.outcomes.len(), 10);
    }

    #[test]
    fn eval_runs_are_bit_exact_across_repeats() {
        let embedder = embedder();
        let pool = ShotPool::build(
            (0..6)
                .map(|i| qa(&format!("p{i}"), &format!("pool {i}"), "1"))
                .collect(),
            &embedder,
            None,
        )
        .unwrap();
        let items: Vec<QAItem> = (0..8)
            .map(|i| qa(&format!("t{i}"), &format!("test {i}"), "2"))
            .collect();
        let run = || {
            let gateway = Gateway::from_config(BackendConfig::mock("FIXED_ANSWER=2")).unwrap();
            run_eval(&items, EvalMode::Baseline, &pool, &embedder, &gateway, 2, 4).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn baseline_and_traced_share_shot_ids() {
        let embedder = embedder();
        let pool_items: Vec<QAItem> = (0..8)
            .map(|i| qa(&format!("p{i}"), &format!("pool question {i}"), "1"))
            .collect();
        let traces: HashMap<String, String> = pool_items
            .iter()
            .map(|i| (i.qa_id.clone(), format!("trace...\nConclusion: {}", i.gold)))
            .collect();
        let pool = ShotPool::build(pool_items, &embedder, Some(traces)).unwrap();
        let items: Vec<QAItem> = (0..5)
            .map(|i| qa(&format!("t{i}"), &format!("test question {i}"), "2"))
            .collect();
        let gateway = Gateway::from_config(BackendConfig::mock("FIXED_ANSWER=1")).unwrap();
        let baseline =
            run_eval(&items, EvalMode::Baseline, &pool, &embedder, &gateway, 2, 2).unwrap();
        let traced =
            run_eval(&items, EvalMode::Traced, &pool, &embedder, &gateway, 2, 2).unwrap();
        for (b, t) in baseline.outcomes.iter().zip(&traced.outcomes) {
            assert_eq!(b.qa_id, t.qa_id);
            assert_eq!(b.shot_ids, t.shot_ids);
        }
    }
}
