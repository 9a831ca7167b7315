//! Multiple-choice QA items and their canonical renderings.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lang::Lang;

/// Source dataset of a QA item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    MedQA,
    MedMCQA,
    MedExpQA,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::MedQA, Source::MedMCQA, Source::MedExpQA];

    pub fn name(self) -> &'static str {
        match self {
            Source::MedQA => "MedQA",
            Source::MedMCQA => "MedMCQA",
            Source::MedExpQA => "MedExpQA",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "MedQA" => Ok(Source::MedQA),
            "MedMCQA" => Ok(Source::MedMCQA),
            "MedExpQA" => Ok(Source::MedExpQA),
            other => Err(Error::Input(format!("unknown dataset tag {other:?}"))),
        }
    }
}

/// Split a QA item belongs to after the dataset-specific split policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Option identifier, `"1"` through `"5"`.
pub type OptionId = String;

/// A question with numbered options and a gold answer id.
///
/// Options are keyed `"1".."5"`; a `null` value marks a slot the source
/// dataset left unused (four-option items keep `"5": null`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAItem {
    pub qa_id: String,
    pub source: Source,
    pub split: Split,
    pub lang: Lang,
    pub question: String,
    pub options: BTreeMap<OptionId, Option<String>>,
    pub gold: OptionId,
}

impl QAItem {
    /// Number of answerable (non-null) options.
    pub fn option_count(&self) -> usize {
        self.options.values().filter(|v| v.is_some()).count()
    }

    /// Checks the structural invariants: 2..=5 non-null options and a gold
    /// id that maps to a non-null option.
    pub fn validate(&self) -> Result<()> {
        let n = self.option_count();
        if !(2..=5).contains(&n) {
            return Err(Error::Input(format!(
                "item {}: expected 2..=5 non-null options, found {n}",
                self.qa_id
            )));
        }
        match self.options.get(&self.gold) {
            Some(Some(_)) => {}
            _ => {
                return Err(Error::Input(format!(
                    "item {}: gold answer {:?} is not a non-null option",
                    self.qa_id, self.gold
                )))
            }
        }
        if self.source == Source::MedExpQA && self.split != Split::Test {
            return Err(Error::Input(format!(
                "item {}: MedExpQA items are test-only",
                self.qa_id
            )));
        }
        Ok(())
    }

    /// Options as numbered lines, `"1) text"`, null slots omitted, key order.
    ///
    /// This is the single rendering used for retrieval queries, prompt
    /// option blocks, and the training export.
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
