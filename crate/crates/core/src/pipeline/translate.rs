//! Dataset translation and back-translation scoring.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::gateway::{render_translation_prompt, CallMeta, Gateway};
use crate::lang::Lang;
use crate::metrics::{corpus_chrf, ChrfParams, ExternalScorer};
use crate::qa::QAItem;
use crate::util::parallel_map_ordered;

fn translate_text(
    text: &str,
    src: Lang,
    tgt: Lang,
    gateway: &Gateway,
    item_id: &str,
    ordinal: Option<u64>,
) -> Result<String> {
    let messages = render_translation_prompt(text, src, tgt)?;
    gateway.chat_with(
        CallMeta {
            item_id: Some(item_id),
            ordinal,
        },
        &messages,
    )
}

/// Translates one English item's question and non-null options into `tgt`.
/// The gold id and the null option slots never change; the qa_id gets a
/// `-{tgt}` suffix.
pub fn translate_item(
    qa: &QAItem,
    tgt: Lang,
    gateway: &Gateway,
    ordinal: Option<u64>,
) -> Result<QAItem> {
    if qa.lang != Lang::En {
        return Err(Error::Input(format!(
            "item {}: translation source must be English, got {}",
            qa.qa_id, qa.lang
        )));
    }
    if tgt == Lang::En {
        return Err(Error::Config("translation target must be it or es".into()));
    }
    let mut translated = qa.clone();
    translated.qa_id = format!("{}-{}", qa.qa_id, tgt);
    translated.lang = tgt;
    translated.question =
        translate_text(&qa.question, Lang::En, tgt, gateway, &translated.qa_id, ordinal)?;
    for (id, slot) in translated.options.iter_mut() {
        if let Some(text) = slot {
            *text = translate_text(
                text,
                Lang::En,
                tgt,
                gateway,
                &format!("{}#opt{id}", translated.qa_id),
                ordinal,
            )?;
        }
    }
    Ok(translated)
}

/// Strips the `-{lang}` suffix a translated item carries.
pub fn original_qa_id(translated_id: &str, lang: Lang) -> Option<&str> {
    translated_id.strip_suffix(&format!("-{lang}"))
}

/// Per-field metric slots of a back-translation report. Native chrF and
/// chrF++ are always present (corpus-level, plus sentence-level means);
/// the neural slots fill only when an external scorer is configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldScores {
    pub chrf: f64,
    pub chrf_pp: f64,
    pub chrf_sentence_mean: f64,
    pub chrf_pp_sentence_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bert_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comet: Option<f64>,
}

/// Back-translation quality report for one translated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub lang: Lang,
    pub item_count: usize,
    pub questions: FieldScores,
    pub options: FieldScores,
}

fn field_scores(pairs: &[(String, String)], scorer: Option<&ExternalScorer>) -> Result<FieldScores> {
    let chrf = corpus_chrf(pairs, &ChrfParams::chrf())?;
    let chrf_pp = corpus_chrf(pairs, &ChrfParams::chrf_pp())?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (bert_score, comet) = match scorer {
        Some(scorer) => (
            Some(scorer.score_mean("bertscore", pairs)?),
            Some(scorer.score_mean("comet", pairs)?),
        ),
        None => (None, None),
    };
    Ok(FieldScores {
        chrf: chrf.corpus,
        chrf_pp: chrf_pp.corpus,
        chrf_sentence_mean: mean(&chrf.per_item),
        chrf_pp_sentence_mean: mean(&chrf_pp.per_item),
        bert_score,
        comet,
    })
}

/// Back-translates each translated item into English and scores questions
/// and options separately against the originals.
pub fn back_translate_and_score(
    translated: &[QAItem],
    originals: &[QAItem],
    gateway: &Gateway,
    scorer: Option<&ExternalScorer>,
    concurrency: usize,
) -> Result<ScoreReport> {
    if translated.is_empty() {
        return Err(Error::Input("back-translation needs at least one item".into()));
    }
    let lang = translated[0].lang;
    if lang == Lang::En {
        return Err(Error::Input("back-translation input is already English".into()));
    }
    let by_id: HashMap<&str, &QAItem> =
        originals.iter().map(|o| (o.qa_id.as_str(), o)).collect();

    // Pair every translated item with its original up front so alignment
    // errors surface before any backend call.
    let mut aligned = Vec::with_capacity(translated.len());
    for item in translated {
        if item.lang != lang {
            return Err(Error::Input(format!(
                "item {}: mixed languages in back-translation input",
                item.qa_id
            )));
        }
        let original_id = original_qa_id(&item.qa_id, lang).ok_or_else(|| {
            Error::Input(format!(
                "item {}: qa_id does not carry the -{lang} suffix",
                item.qa_id
            ))
        })?;
        let original = by_id.get(original_id).ok_or_else(|| {
            Error::Input(format!(
                "item {}: no original item {original_id}",
                item.qa_id
            ))
        })?;
        aligned.push((item, *original));
    }

    type PairSets = (Vec<(String, String)>, Vec<(String, String)>);
    let back: Vec<Result<PairSets>> =
        parallel_map_ordered(&aligned, concurrency, |idx, (item, original)| {
            let ordinal = Some(idx as u64 + 1);
            let back_question = translate_text(
                &item.question,
                lang,
                Lang::En,
                gateway,
                &format!("{}#back", item.qa_id),
                ordinal,
            )?;
            let mut question_pairs = vec![(back_question, original.question.clone())];
            let mut option_pairs = Vec::new();
            for (id, slot) in &item.options {
                let (Some(text), Some(Some(orig_text))) = (slot, original.options.get(id)) else {
                    continue;
                };
                let back_option = translate_text(
                    text,
                    lang,
                    Lang::En,
                    gateway,
                    &format!("{}#back-opt{id}", item.qa_id),
                    ordinal,
                )?;
                option_pairs.push((back_option, orig_text.clone()));
            }
            question_pairs.shrink_to_fit();
            Ok((question_pairs, option_pairs))
        });

    let mut question_pairs = Vec::new();
    let mut option_pairs = Vec::new();
    for result in back {
        let (q, o) = result?;
        question_pairs.extend(q);
        option_pairs.extend(o);
    }

    Ok(ScoreReport {
        lang,
        item_count: translated.len(),
        questions: field_scores(&question_pairs, scorer)?,
        options: field_scores(&option_pairs, scorer)?,
    })
}
