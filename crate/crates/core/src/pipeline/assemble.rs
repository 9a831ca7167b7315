//! Dataset assembly from verified traces and the training export format.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::lang::Lang;
use crate::pipeline::extract::extract_answer;
use crate::pipeline::trace::TraceRow;
use crate::qa::{OptionId, QAItem, Source};

/// One published dataset row: a verified trace with its question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub qa_id: String,
    pub question: String,
    pub options: BTreeMap<OptionId, Option<String>>,
    pub gold: OptionId,
    pub trace_text: String,
    pub lang: Lang,
    pub source: Source,
}

impl TraceRecord {
    pub fn options_block(&self) -> String {
        let mut lines = Vec::with_capacity(self.options.len());
        for (id, text) in &self.options {
            if let Some(text) = text {
                lines.push(format!("{id}) {text}"));
            }
        }
        lines.join("\n")
    }
}

/// Per-(language, source) dataset counts.
pub type DatasetCounts = BTreeMap<Lang, BTreeMap<Source, u64>>;

/// Joins kept traces with their items into dataset records plus a counts
/// table. Every trace must be verified and resolve to an item.
pub fn assemble_dataset(
    kept: &[TraceRow],
    items: &[QAItem],
) -> Result<(Vec<TraceRecord>, DatasetCounts)> {
    let by_id: HashMap<&str, &QAItem> = items.iter().map(|i| (i.qa_id.as_str(), i)).collect();
    let mut records = Vec::with_capacity(kept.len());
    let mut counts: DatasetCounts = BTreeMap::new();
    for trace in kept {
        if !trace.verified {
            return Err(Error::Input(format!(
                "trace {} is unverified; assemble only runs on kept traces",
                trace.qa_id
            )));
        }
        let item = by_id.get(trace.qa_id.as_str()).ok_or_else(|| {
            Error::Input(format!("trace {} has no matching item", trace.qa_id))
        })?;
        records.push(TraceRecord {
            qa_id: item.qa_id.clone(),
            question: item.question.clone(),
            options: item.options.clone(),
            gold: item.gold.clone(),
            trace_text: trace.trace_text.clone(),
            lang: item.lang,
            source: item.source,
        });
        *counts
            .entry(item.lang)
            .or_default()
            .entry(item.source)
            .or_default() += 1;
    }
    Ok((records, counts))
}

/// Dataset-purity check: re-extracting every record's conclusion must give
/// its gold id. Returns the fraction of records that match.
pub fn purity(records: &[TraceRecord]) -> f64 {
    if records.is_empty() {
        return 1.0;
    }
    let matching = records
        .iter()
        .filter(|r| extract_answer(&r.trace_text, r.lang).as_deref() == Some(r.gold.as_str()))
        .count();
    matching as f64 / records.len() as f64
}

/// Renders one record in the training format:
/// `<q>{question}</q><o>{options}</o>{trace}` with the options as the
/// usual numbered-line block.
pub fn render_training_record(record: &TraceRecord) -> String {
    format!(
        "<q>{}</q><o>{}</o>{}",
        record.question,
        record.options_block(),
        record.trace_text
    )
}

/// Renders the training export, optionally restricted to an externally
/// supplied qa_id list (order and multiplicity follow the id list).
pub fn export_training(
    records: &[TraceRecord],
    id_filter: Option<&[String]>,
) -> Result<Vec<String>> {
    match id_filter {
        None => Ok(records.iter().map(render_training_record).collect()),
        Some(ids) => {
            let by_id: HashMap<&str, &TraceRecord> =
                records.iter().map(|r| (r.qa_id.as_str(), r)).collect();
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .map(|r| render_training_record(r))
                        .ok_or_else(|| {
                            Error::Input(format!("export id {id} is not in the dataset"))
                        })
                })
                .collect()
        }
    }
}

/// Parses a training record back into `(question, options_block, trace)`.
pub fn parse_training_record(text: &str) -> Result<(&str, &str, &str)> {
    let rest = text
        .strip_prefix("<q>")
        .ok_or_else(|| Error::Input("training record does not start with <q>".into()))?;
    let (question, rest) = rest
        .split_once("</q><o>")
        .ok_or_else(|| Error::Input("training record is missing </q><o>".into()))?;
    let (options, trace) = rest
        .split_once("</o>")
        .ok_or_else(|| Error::Input("training record is missing </o>".into()))?;
    Ok((question, options, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qa::Split;

    fn item(id: &str, lang: Lang, source: Source, gold: &str) -> QAItem {
        let mut options = BTreeMap::new();
        options.insert("1".to_string(), Some("A".to_string()));
        options.insert("2".to_string(), Some("B".to_string()));
        options.insert("5".to_string(), None);
        QAItem {
            qa_id: id.into(),
            source,
            split: Split::Train,
            lang,
            question: format!("Question {id}"),
            options,
            gold: gold.into(),
        }
    }

    fn kept_row(id: &str, gold: &str) -> TraceRow {
        TraceRow {
            qa_id: id.into(),
            trace_text: format!("Reasoning...\nConclusion: {gold}"),
            extracted: Some(gold.into()),
            verified: true,
        }
    }

    #[test]
    fn assemble_counts_per_lang_and_source() {
        let items = vec![
            item("a", Lang::En, Source::MedQA, "1"),
            item("b", Lang::En, Source::MedMCQA, "2"),
            item("c", Lang::It, Source::MedQA, "1"),
        ];
        let kept = vec![kept_row("a", "1"), kept_row("b", "2"), kept_row("c", "1")];
        let (records, counts) = assemble_dataset(&kept, &items).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(counts[&Lang::En][&Source::MedQA], 1);
        assert_eq!(counts[&Lang::En][&Source::MedMCQA], 1);
        assert_eq!(counts[&Lang::It][&Source::MedQA], 1);
        assert_eq!(purity(&records), 1.0);
    }

    #[test]
    fn empty_kept_set_is_an_empty_dataset() {
        let (records, counts) = assemble_dataset(&[], &[]).unwrap();
        assert!(records.is_empty());
        assert!(counts.is_empty());
    }

    #[test]
    fn dangling_qa_id_is_an_input_error() {
        let result = assemble_dataset(&[kept_row("ghost", "1")], &[]);
        assert!(matches!(result, Err(Error::Input(_))));
    }

    #[test]
    fn unverified_trace_is_rejected() {
        let items = vec![item("a", Lang::En, Source::MedQA, "1")];
        let mut row = kept_row("a", "1");
        row.verified = false;
        assert!(assemble_dataset(&[row], &items).is_err());
    }

    #[test]
    fn training_format_is_exact() {
        let record = TraceRecord {
            qa_id: "a".into(),
            question: "Q".into(),
            options: [
                ("1".to_string(), Some("A".to_string())),
                ("2".to_string(), None),
            ]
            .into(),
            gold: "1".into(),
            trace_text: "T".into(),
            lang: Lang::En,
            source: Source::MedQA,
        };
        assert_eq!(render_training_record(&record), "<q>Q</q><o>1) A</o>T");
    }

    #[test]
    fn training_record_roundtrips() {
        let items = vec![item("a", Lang::En, Source::MedQA, "1")];
        let kept = vec![kept_row("a", "1")];
        let (records, _) = assemble_dataset(&kept, &items).unwrap();
        let line = render_training_record(&records[0]);
        let (q, o, t) = parse_training_record(&line).unwrap();
        assert_eq!(q, records[0].question);
        assert_eq!(o, records[0].options_block());
        assert_eq!(t, records[0].trace_text);
    }

    #[test]
    fn export_honors_an_external_id_list() {
        let items = vec![
            item("a", Lang::En, Source::MedQA, "1"),
            item("b", Lang::En, Source::MedQA, "2"),
        ];
        let kept = vec![kept_row("a", "1"), kept_row("b", "2")];
        let (records, _) = assemble_dataset(&kept, &items).unwrap();
        let ids = vec!["b".to_string()];
        let exported = export_training(&records, Some(&ids)).unwrap();
        assert_eq!(exported.len(), 1);
        assert!(exported[0].starts_with("<q>Question b</q>"));
        let missing = vec!["nope".to_string()];
        assert!(export_training(&records, Some(&missing)).is_err());
    }
}
