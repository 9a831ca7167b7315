//! Deterministic mock chat backends for offline end-to-end runs.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::gateway::{BackendConfig, CallError, CallMeta, ChatBackend, ChatMessage, Role};

/// Mock reply policies.
///
/// - `Echo` returns the user text payload (for translation prompts, the
///   text under the instruction header, so round-trips are identity).
/// - `GoldTrace` emits a minimal three-part trace concluding with the
///   gold id found in the prompt's `<answer>` tag.
/// - `WrongTrace { every }` behaves like `GoldTrace` but mis-concludes
///   every `every`-th item of the batch.
/// - `FixedAnswer` always replies with the same identifier.
#[derive(Debug, Clone, PartialEq)]
pub enum MockPolicy {
    Echo,
    GoldTrace,
    WrongTrace { every: u64 },
    FixedAnswer(String),
}

impl MockPolicy {
    /// Parses a policy string: `ECHO`, `GOLD_TRACE`, `WRONG_TRACE=<p>`,
    /// `FIXED_ANSWER=<id>`.
    pub fn parse(s: &str) -> Result<MockPolicy> {
        let (name, arg) = match s.split_once('=') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        match (name, arg) {
            ("ECHO", None) => Ok(MockPolicy::Echo),
            ("GOLD_TRACE", None) => Ok(MockPolicy::GoldTrace),
            ("WRONG_TRACE", Some(p)) => {
                let p: f64 = p
                    .parse()
                    .map_err(|_| Error::Config(format!("bad WRONG_TRACE probability {p:?}")))?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::Config(
                        "WRONG_TRACE probability must be in (0, 1]".into(),
                    ));
                }
                Ok(MockPolicy::WrongTrace {
                    every: (1.0 / p).ceil() as u64,
                })
            }
            ("FIXED_ANSWER", Some(id)) => Ok(MockPolicy::FixedAnswer(id.to_string())),
            _ => Err(Error::Config(format!("unknown mock policy {s:?}"))),
        }
    }
}

/// Pure-function mock transport. `WRONG_TRACE` keys its schedule on the
/// caller-provided item ordinal when present (so resumed batches match
/// uninterrupted ones) and falls back to an internal call counter.
pub struct MockBackend {
    policy: MockPolicy,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn new(policy: MockPolicy) -> Self {
        MockBackend {
            policy,
            calls: AtomicU64::new(0),
        }
    }
}

fn last_user_content(messages: &[ChatMessage]) -> Option<&str> {
    messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
}

/// For translation prompts the meaningful payload is the text after the
/// instruction header; everything else echoes verbatim.
fn echo_payload(content: &str) -> &str {
    const MARKER: &str = "Return only the translated text.\n";
    if content.starts_with("Translate the following text to ") {
        if let Some(pos) = content.find(MARKER) {
            return content[pos + MARKER.len()..].trim_end_matches('\n');
        }
    }
    content
}

fn answer_tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<answer>\s*([1-5])\s*</answer>").unwrap())
}

fn gold_from_prompt(messages: &[ChatMessage]) -> Option<String> {
    let content = last_user_content(messages)?;
    answer_tag_regex()
        .captures(content)
        .map(|c| c[1].to_string())
}

fn minimal_trace(conclusion: &str) -> String {
    format!(
        "Search for potential reasoning traces:\n\
         - match the grounded facts against each option\n\
         Reasoning process:\n\
         1. Weigh the options in the light of the provided context.\n\
         2. Keep the option the facts support best.\n\
         Conclusion: {conclusion}"
    )
}

fn wrong_id(gold: &str) -> String {
    // Any id other than the gold one; ids are "1".."5".
    match gold.parse::<u64>() {
        Ok(g) if (1..=5).contains(&g) => ((g % 5) + 1).to_string(),
        _ => "1".to_string(),
    }
}

impl ChatBackend for MockBackend {
    fn chat_once(
        &self,
        _config: &BackendConfig,
        meta: CallMeta<'_>,
        messages: &[ChatMessage],
    ) -> std::result::Result<String, CallError> {
        let serial = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        let reply = match &self.policy {
            MockPolicy::Echo => last_user_content(messages)
                .map(echo_payload)
                .unwrap_or("")
                .to_string(),
            MockPolicy::FixedAnswer(id) => id.clone(),
            MockPolicy::GoldTrace => {
                let gold = gold_from_prompt(messages).unwrap_or_else(|| "1".to_string());
                minimal_trace(&gold)
            }
            MockPolicy::WrongTrace { every } => {
                let gold = gold_from_prompt(messages).unwrap_or_else(|| "1".to_string());
                let ordinal = meta.ordinal.unwrap_or(serial);
                if ordinal.is_multiple_of(*every) {
                    minimal_trace(&wrong_id(&gold))
                } else {
                    minimal_trace(&gold)
                }
            }
        };
        if reply.is_empty() {
            return Err(CallError::Fatal("mock request had no user message".into()));
        }
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Gateway;

    fn reply(policy: &str, meta: CallMeta<'_>, content: &str) -> String {
        let backend = MockBackend::new(MockPolicy::parse(policy).unwrap());
        backend
            .chat_once(
                &BackendConfig::mock(policy),
                meta,
                &[ChatMessage::user(content)],
            )
            .unwrap()
    }

    #[test]
    fn parse_accepts_the_four_policies() {
        assert_eq!(MockPolicy::parse("ECHO").unwrap(), MockPolicy::Echo);
        assert_eq!(
            MockPolicy::parse("GOLD_TRACE").unwrap(),
            MockPolicy::GoldTrace
        );
        assert_eq!(
            MockPolicy::parse("WRONG_TRACE=0.1").unwrap(),
            MockPolicy::WrongTrace { every: 10 }
        );
        assert_eq!(
            MockPolicy::parse("FIXED_ANSWER=2").unwrap(),
            MockPolicy::FixedAnswer("2".into())
        );
        assert!(MockPolicy::parse("NOPE").is_err());
        assert!(MockPolicy::parse("WRONG_TRACE=0").is_err());
    }

    #[test]
    fn echo_returns_user_content() {
        assert_eq!(reply("ECHO", CallMeta::default(), "x"), "x");
    }

    #[test]
    fn echo_unwraps_translation_prompts() {
        let prompt = "Translate the following text to Italian.\n\
                      Return only the translated text.\nThyroxine\n";
        assert_eq!(reply("ECHO", CallMeta::default(), prompt), "Thyroxine");
    }

    #[test]
    fn gold_trace_concludes_with_prompt_gold() {
        let out = reply(
            "GOLD_TRACE",
            CallMeta::default(),
            "The correct answer is <answer>2</answer>.",
        );
        assert!(out.ends_with("Conclusion: 2"));
        assert!(out.contains("Search for potential reasoning traces:"));
        assert!(out.contains("Reasoning process:"));
    }

    #[test]
    fn wrong_trace_misses_every_tenth_item() {
        let backend = MockBackend::new(MockPolicy::parse("WRONG_TRACE=0.1").unwrap());
        let config = BackendConfig::mock("WRONG_TRACE=0.1");
        let mut wrong = Vec::new();
        for ordinal in 1..=30u64 {
            let out = backend
                .chat_once(
                    &config,
                    CallMeta {
                        item_id: None,
                        ordinal: Some(ordinal),
                    },
                    &[ChatMessage::user("gold is <answer>3</answer>")],
                )
                .unwrap();
            if !out.ends_with("Conclusion: 3") {
                wrong.push(ordinal);
            }
        }
        assert_eq!(wrong, vec![10, 20, 30]);
    }

    #[test]
    fn wrong_trace_never_concludes_gold() {
        for gold in 1..=5u64 {
            let id = wrong_id(&gold.to_string());
            assert_ne!(id, gold.to_string());
            assert!(("1"..="5").contains(&id.as_str()));
        }
    }

    #[test]
    fn fixed_answer_is_constant() {
        assert_eq!(reply("FIXED_ANSWER=4", CallMeta::default(), "anything"), "4");
    }

    #[test]
    fn repeated_runs_produce_identical_output() {
        let config = BackendConfig::mock("GOLD_TRACE");
        let run = || {
            let gateway = Gateway::from_config(config.clone()).unwrap();
            (0..5)
                .map(|i| {
                    gateway
                        .chat(&[ChatMessage::user(format!(
                            "q{i} <answer>{}</answer>",
                            (i % 5) + 1
                        ))])
                        .unwrap()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
