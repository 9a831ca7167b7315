//! Prompt construction for every stage: translation, context rewriting,
//! trace generation, and the two-shot evaluation prompts.
//!
//! Templates live as versioned text fixtures under `templates/`; rendering
//! is pure slot substitution, so identical inputs give byte-identical
//! messages.

use crate::error::{Error, Result};
use crate::gateway::ChatMessage;
use crate::lang::Lang;
use crate::qa::QAItem;

const TRANSLATE_SYSTEM: &str = include_str!("templates/translate_system.txt");
const TRANSLATE_USER: &str = include_str!("templates/translate_user.txt");
const REWRITE_SYSTEM: &str = include_str!("templates/rewrite_system.txt");
const TRACEGEN_SYSTEM: &str = include_str!("templates/tracegen_system.txt");
const TRACEGEN_USER: &str = include_str!("templates/tracegen_user.txt");
const EVAL_SYSTEM: &str = include_str!("templates/eval_system.txt");
const EVAL_BASELINE_USER: &str = include_str!("templates/eval_baseline_user.txt");
const EVAL_TRACED_USER_EN: &str = include_str!("templates/eval_traced_user_en.txt");
const EVAL_TRACED_USER_IT: &str = include_str!("templates/eval_traced_user_it.txt");
const EVAL_TRACED_USER_ES: &str = include_str!("templates/eval_traced_user_es.txt");

/// The five fixed few-shot pairs used by the translation prompt,
/// as `(english, italian, spanish)`.
pub const TRANSLATION_SHOTS: [(&str, &str, &str); 5] = [
    (
        "Growth hormone has its effect on growth through?",
        "L'ormone della crescita esercita il suo effetto sulla crescita attraverso?",
        "La hormona del crecimiento tiene su efecto sobre el crecimiento a través de?",
    ),
    (
        "What is the main function of the liver?",
        "Qual è la funzione principale del fegato?",
        "Cuál es la función principal del hígado?",
    ),
    ("Thyroxine", "Tiroxina", "Tiroxina"),
    ("IG1-1", "IG1-1", "IG1-1"),
    ("Duodenal Switch", "Duodenal Switch", "Switch Duodenal"),
];

fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in slots {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

fn shot_pair(shot: &'static (&str, &str, &str), non_english: Lang) -> (&'static str, &'static str) {
    match non_english {
        Lang::It => (shot.0, shot.1),
        Lang::Es => (shot.0, shot.2),
        Lang::En => unreachable!("shot pairs are english vs non-english"),
    }
}

/// Builds the 5-shot translation prompt for `text`: system message, five
/// user/assistant example pairs for the requested direction, then the text
/// itself. Supported directions pair English with Italian or Spanish.
pub fn render_translation_prompt(text: &str, src: Lang, tgt: Lang) -> Result<Vec<ChatMessage>> {
    if src == tgt {
        return Err(Error::Config(format!(
            "translation requires distinct languages, got {src}->{tgt}"
        )));
    }
    let non_english = match (src, tgt) {
        (Lang::En, other) | (other, Lang::En) => other,
        _ => {
            return Err(Error::Config(format!(
                "unsupported translation pair {src}->{tgt}: one side must be English"
            )))
        }
    };

    let user = |t: &str| {
        ChatMessage::user(fill(
            TRANSLATE_USER,
            &[("target_language", tgt.english_name()), ("text", t)],
        ))
    };

    let mut messages = Vec::with_capacity(2 + 2 * TRANSLATION_SHOTS.len());
    messages.push(ChatMessage::system(fill(
        TRANSLATE_SYSTEM,
        &[
            ("source_language", src.english_name()),
            ("target_language", tgt.english_name()),
        ],
    )));
    for shot in &TRANSLATION_SHOTS {
        let (english, translated) = shot_pair(shot, non_english);
        let (input, output) = if src == Lang::En {
            (english, translated)
        } else {
            (translated, english)
        };
        messages.push(user(input));
        messages.push(ChatMessage::assistant(output));
    }
    messages.push(user(text));
    Ok(messages)
}

/// Builds the context-rewriting prompt: fixed system message, user content
/// is the chunk texts joined by blank lines in retrieval rank order.
pub fn render_rewrite_prompt(chunk_texts: &[String]) -> Result<Vec<ChatMessage>> {
    if chunk_texts.is_empty() {
        return Err(Error::Input("rewrite prompt requires at least one chunk".into()));
    }
    Ok(vec![
        ChatMessage::system(REWRITE_SYSTEM),
        ChatMessage::user(chunk_texts.join("\n\n")),
    ])
}

/// Builds the trace-generation prompt from the rewritten context and the
/// item's question, options, and gold answer.
pub fn render_tracegen_prompt(context: &str, qa: &QAItem) -> Result<Vec<ChatMessage>> {
    if context.trim().is_empty() {
        return Err(Error::Input(format!(
            "item {}: trace generation requires a grounding context",
            qa.qa_id
        )));
    }
    match qa.options.get(&qa.gold) {
        Some(Some(_)) => {}
        _ => {
            return Err(Error::Input(format!(
                "item {}: gold answer {:?} is not a non-null option",
                qa.qa_id, qa.gold
            )))
        }
    }
    Ok(vec![
        ChatMessage::system(TRACEGEN_SYSTEM),
        ChatMessage::user(fill(
            TRACEGEN_USER,
            &[
                ("question", &qa.question),
                ("context", context),
                ("options", &qa.options_block()),
                ("answer", &qa.gold),
            ],
        )),
    ])
}

/// Evaluation prompt flavor: bare answers or full reasoning traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Baseline,
    Traced,
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EvalMode::Baseline => "baseline",
            EvalMode::Traced => "traced",
        })
    }
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(EvalMode::Baseline),
            "traced" => Ok(EvalMode::Traced),
            other => Err(Error::Input(format!("unknown eval mode {other:?}"))),
        }
    }
}

/// A worked example for the few-shot prompt. In baseline mode the
/// assistant turn is the gold id; in traced mode it is the verified
/// reasoning trace.
#[derive(Debug, Clone, Copy)]
pub struct EvalShot<'a> {
    pub qa: &'a QAItem,
    pub trace: Option<&'a str>,
}

fn traced_user_template(lang: Lang) -> &'static str {
    match lang {
        Lang::En => EVAL_TRACED_USER_EN,
        Lang::It => EVAL_TRACED_USER_IT,
        Lang::Es => EVAL_TRACED_USER_ES,
    }
}

/// Builds the 2-shot evaluation prompt: system message, one user/assistant
/// pair per shot, then the test question. Baseline and traced prompts
/// differ only in the user template and the assistant payloads.
pub fn render_eval_prompt(
    mode: EvalMode,
    shots: &[EvalShot<'_>],
    qa: &QAItem,
) -> Result<Vec<ChatMessage>> {
    let template = match mode {
        EvalMode::Baseline => EVAL_BASELINE_USER,
        EvalMode::Traced => traced_user_template(qa.lang),
    };
    let user = |item: &QAItem| {
        ChatMessage::user(fill(
            template,
            &[
                ("question", &item.question),
                ("options", &item.options_block()),
            ],
        ))
    };

    let mut messages = Vec::with_capacity(2 + 2 * shots.len());
    messages.push(ChatMessage::system(fill(
        EVAL_SYSTEM,
        &[("language", qa.lang.english_name())],
    )));
    for shot in shots {
        if shot.qa.lang != qa.lang {
            return Err(Error::Input(format!(
                "shot {} is {} but test item {} is {}",
                shot.qa.qa_id, shot.qa.lang, qa.qa_id, qa.lang
            )));
        }
        messages.push(user(shot.qa));
        let payload = match mode {
            EvalMode::Baseline => shot.qa.gold.clone(),
            EvalMode::Traced => shot
                .trace
                .ok_or_else(|| {
                    Error::Input(format!(
                        "shot {} has no trace for traced mode",
                        shot.qa.qa_id
                    ))
                })?
                .to_string(),
        };
        messages.push(ChatMessage::assistant(payload));
    }
    messages.push(user(qa));
    Ok(messages)
}
