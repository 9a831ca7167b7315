//! Answer extraction from generated reasoning traces.
//!
//! The rule: take the last occurrence of the language's conclusion header
//! (any emphasis markers or colons around it are irrelevant) and return
//! the first standalone digit 1-5 after it. Without a header, return the
//! last standalone digit 1-5 within the final 200 characters. A digit is
//! standalone when neither neighbor is alphanumeric.

use regex::Regex;
use std::sync::OnceLock;

use crate::lang::Lang;
use crate::qa::OptionId;

/// Localized conclusion header word.
pub fn conclusion_header(lang: Lang) -> &'static str {
    match lang {
        Lang::En => "Conclusion",
        Lang::It => "Conclusione",
        Lang::Es => "Conclusión",
    }
}

fn header_regex(lang: Lang) -> &'static Regex {
    static EN: OnceLock<Regex> = OnceLock::new();
    static IT: OnceLock<Regex> = OnceLock::new();
    static ES: OnceLock<Regex> = OnceLock::new();
    let (slot, pattern) = match lang {
        Lang::En => (&EN, r"(?i)\bconclusion\b"),
        Lang::It => (&IT, r"(?i)\bconclusione\b"),
        Lang::Es => (&ES, r"(?i)\bconclusión\b"),
    };
    slot.get_or_init(|| Regex::new(pattern).unwrap())
}

fn standalone_digits(text: &str) -> Vec<char> {
    let chars: Vec<char> = text.chars().collect();
    let mut found = Vec::new();
    for (i, &c) in chars.iter().enumerate() {
        if !('1'..='5').contains(&c) {
            continue;
        }
        let prev_ok = i == 0 || !chars[i - 1].is_alphanumeric();
        let next_ok = i + 1 == chars.len() || !chars[i + 1].is_alphanumeric();
        if prev_ok && next_ok {
            found.push(c);
        }
    }
    found
}

fn tail_chars(text: &str, n: usize) -> &str {
    let count = text.chars().count();
    if count <= n {
        return text;
    }
    let (idx, _) = text.char_indices().nth(count - n).unwrap();
    &text[idx..]
}

/// Extracts the concluded option id from a trace; absence is a value,
/// not an error.
pub fn extract_answer(trace_text: &str, lang: Lang) -> Option<OptionId> {
    if let Some(last) = header_regex(lang).find_iter(trace_text).last() {
        let after = &trace_text[last.end()..];
        return standalone_digits(after)
            .first()
            .map(|c| c.to_string());
    }
    standalone_digits(tail_chars(trace_text, 200))
        .last()
        .map(|c| c.to_string())
}
