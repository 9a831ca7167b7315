//! Dataset-specific split policy.
//!
//! MedExpQA is test-only: all of its original splits merge into one test
//! set. MedMCQA keeps its training split and tests on the validation split
//! (test labels are not released; the original test items are dropped).
//! MedQA keeps its training and test splits and drops validation.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lang::Lang;
use crate::qa::{OptionId, QAItem, Source, Split};

/// A dataset row carrying the source's original split label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawQAItem {
    pub qa_id: String,
    pub source: String,
    pub split: String,
    pub lang: Lang,
    pub question: String,
    pub options: BTreeMap<OptionId, Option<String>>,
    pub gold: OptionId,
}

/// Applies the split policy; items falling outside it (MedMCQA test,
/// MedQA validation) are dropped.
pub fn apply_splits(raw_items: Vec<RawQAItem>) -> Result<Vec<QAItem>> {
    let mut out = Vec::with_capacity(raw_items.len());
    for raw in raw_items {
        let source: Source = raw.source.parse()?;
        let original = match raw.split.as_str() {
            "train" => OriginalSplit::Train,
            "validation" | "val" => OriginalSplit::Validation,
            "test" => OriginalSplit::Test,
            other => {
                return Err(Error::Input(format!(
                    "item {}: unknown split label {other:?}",
                    raw.qa_id
                )))
            }
        };
        let split = match (source, original) {
            (Source::MedExpQA, _) => Some(Split::Test),
            (Source::MedMCQA, OriginalSplit::Train) => Some(Split::Train),
            (Source::MedMCQA, OriginalSplit::Validation) => Some(Split::Test),
            (Source::MedMCQA, OriginalSplit::Test) => None,
            (Source::MedQA, OriginalSplit::Train) => Some(Split::Train),
            (Source::MedQA, OriginalSplit::Test) => Some(Split::Test),
            (Source::MedQA, OriginalSplit::Validation) => None,
        };
        let Some(split) = split else { continue };
        let item = QAItem {
            qa_id: raw.qa_id,
            source,
            split,
            lang: raw.lang,
            question: raw.question,
            options: raw.options,
            gold: raw.gold,
        };
        item.validate()?;
        out.push(item);
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum OriginalSplit {
    Train,
    Validation,
    Test,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(id: &str, source: &str, split: &str) -> RawQAItem {
        let mut options = BTreeMap::new();
        options.insert("1".to_string(), Some("A".to_string()));
        options.insert("2".to_string(), Some("B".to_string()));
        RawQAItem {
            qa_id: id.into(),
            source: source.into(),
            split: split.into(),
            lang: Lang::En,
            question: "Q".into(),
            options,
            gold: "1".into(),
        }
    }

    #[test]
    fn medexpqa_merges_all_splits_into_test() {
        let items = apply_splits(vec![
            raw("a", "MedExpQA", "train"),
            raw("b", "MedExpQA", "train"),
            raw("c", "MedExpQA", "train"),
            raw("d", "MedExpQA", "val"),
            raw("e", "MedExpQA", "val"),
            raw("f", "MedExpQA", "test"),
        ])
        .unwrap();
        assert_eq!(items.len(), 6);
        assert!(items.iter().all(|i| i.split == Split::Test));
    }

    #[test]
    fn medmcqa_tests_on_validation_and_drops_test() {
        let items = apply_splits(vec![
            raw("a", "MedMCQA", "train"),
            raw("b", "MedMCQA", "validation"),
            raw("c", "MedMCQA", "test"),
        ])
        .unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].split, Split::Train);
        assert_eq!(items[1].split, Split::Test);
    }

    #[test]
    fn medqa_keeps_train_and_test_drops_validation() {
        let items = apply_splits(vec![
            raw("a", "MedQA", "train"),
            raw("b", "MedQA", "val"),
            raw("c", "MedQA", "test"),
        ])
        .unwrap();
        let ids: Vec<_> = items.iter().map(|i| i.qa_id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
    }

    #[test]
    fn unknown_dataset_tag_is_an_input_error() {
        assert!(matches!(
            apply_splits(vec![raw("a", "PubMedQA", "train")]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn unknown_split_label_is_an_input_error() {
        assert!(apply_splits(vec![raw("a", "MedQA", "dev")]).is_err());
    }
}
