#![allow(dead_code)] // shared by several test targets with different needs

//! Independent oracles and fixture helpers for the acceptance suite.
//!
//! Everything here re-derives expected values through a different route
//! than the library code: n-gram counting via sorted vectors instead of
//! hash maps, p-values via numeric integration instead of special
//! functions, and top-k via a full argsort.

use std::path::{Path, PathBuf};

pub fn fixture_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture_path(rel))
        .unwrap_or_else(|e| panic!("fixture {rel}: {e}"))
}

/// Prints the acceptance line for a criterion and propagates failures.
pub fn criterion<F: FnOnce() + std::panic::UnwindSafe>(name: &str, run: F) {
    let result = std::panic::catch_unwind(run);
    match &result {
        Ok(()) => println!("ACCEPTANCE {name}: PASS"),
        Err(_) => println!("ACCEPTANCE {name}: FAIL"),
    }
    if let Err(panic) = result {
        std::panic::resume_unwind(panic);
    }
}

// ---------------------------------------------------------------------------
// chrF enumeration oracle
// ---------------------------------------------------------------------------

/// Brute-force chrF/chrF++ on one pair: n-grams enumerated into sorted
/// vectors, matches counted by multiset intersection over the sort.
pub fn chrf_oracle(hyp: &str, reference: &str, char_n: usize, word_n: usize, beta: f64) -> f64 {
    let mut f_scores = Vec::new();
    let hyp_chars: Vec<String> = hyp
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| c.to_string())
        .collect();
    let ref_chars: Vec<String> = reference
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| c.to_string())
        .collect();
    for n in 1..=char_n {
        push_order(&mut f_scores, &hyp_chars, &ref_chars, n, beta);
    }
    let hyp_words: Vec<String> = hyp.split_whitespace().map(str::to_string).collect();
    let ref_words: Vec<String> = reference.split_whitespace().map(str::to_string).collect();
    for n in 1..=word_n {
        push_order(&mut f_scores, &hyp_words, &ref_words, n, beta);
    }
    if f_scores.is_empty() {
        1.0
    } else {
        f_scores.iter().sum::<f64>() / f_scores.len() as f64
    }
}

fn enumerate_ngrams(units: &[String], n: usize) -> Vec<String> {
    if n == 0 || units.len() < n {
        return Vec::new();
    }
    let mut grams: Vec<String> = units.windows(n).map(|w| w.join("\u{1}")).collect();
    grams.sort();
    grams
}

fn multiset_overlap(a: &[String], b: &[String]) -> usize {
    // Both inputs sorted; two-pointer walk counts min-multiplicities.
    let (mut i, mut j, mut shared) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    shared
}

fn push_order(f_scores: &mut Vec<f64>, hyp: &[String], reference: &[String], n: usize, beta: f64) {
    let hyp_grams = enumerate_ngrams(hyp, n);
    let ref_grams = enumerate_ngrams(reference, n);
    if hyp_grams.is_empty() && ref_grams.is_empty() {
        return; // degenerate order, skipped
    }
    let shared = multiset_overlap(&hyp_grams, &ref_grams) as f64;
    f_scores.push(f_beta(
        shared,
        hyp_grams.len() as f64,
        ref_grams.len() as f64,
        beta,
    ));
}

fn f_beta(shared: f64, hyp_total: f64, ref_total: f64, beta: f64) -> f64 {
    let precision = if hyp_total == 0.0 { 0.0 } else { shared / hyp_total };
    let recall = if ref_total == 0.0 { 0.0 } else { shared / ref_total };
    let b2 = beta * beta;
    let denom = b2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}

/// Corpus-level oracle: per-order counts summed over all pairs before the
/// F combination, matching the corpus definition of the metric.
pub fn corpus_chrf_oracle(
    pairs: &[(&str, &str)],
    char_n: usize,
    word_n: usize,
    beta: f64,
) -> f64 {
    // (shared, hyp_total, ref_total) per order, char orders first.
    let mut totals = vec![(0f64, 0f64, 0f64); char_n + word_n];
    for (hyp, reference) in pairs {
        let hyp_chars: Vec<String> = hyp
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| c.to_string())
            .collect();
        let ref_chars: Vec<String> = reference
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| c.to_string())
            .collect();
        let hyp_words: Vec<String> = hyp.split_whitespace().map(str::to_string).collect();
        let ref_words: Vec<String> = reference.split_whitespace().map(str::to_string).collect();
        for n in 1..=char_n {
            let h = enumerate_ngrams(&hyp_chars, n);
            let r = enumerate_ngrams(&ref_chars, n);
            totals[n - 1].0 += multiset_overlap(&h, &r) as f64;
            totals[n - 1].1 += h.len() as f64;
            totals[n - 1].2 += r.len() as f64;
        }
        for n in 1..=word_n {
            let h = enumerate_ngrams(&hyp_words, n);
            let r = enumerate_ngrams(&ref_words, n);
            totals[char_n + n - 1].0 += multiset_overlap(&h, &r) as f64;
            totals[char_n + n - 1].1 += h.len() as f64;
            totals[char_n + n - 1].2 += r.len() as f64;
        }
    }
    let mut sum = 0.0;
    let mut effective = 0usize;
    for (shared, hyp_total, ref_total) in totals {
        if hyp_total == 0.0 && ref_total == 0.0 {
            continue;
        }
        sum += f_beta(shared, hyp_total, ref_total, beta);
        effective += 1;
    }
    if effective == 0 {
        1.0
    } else {
        sum / effective as f64
    }
}

// ---------------------------------------------------------------------------
// Statistics oracles
// ---------------------------------------------------------------------------

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, eps / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, eps / 2.0, depth - 1)
        }
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, eps, 50)
}

/// Two-sided Student-t p-value by numeric integration of the unnormalized
/// density; the normalization constant is also integrated numerically, so
/// the oracle shares no special-function code with the implementation.
pub fn t_two_sided_p_oracle(t: f64, df: f64) -> f64 {
    let g = move |u: f64| (1.0 + u * u / df).powf(-(df + 1.0) / 2.0);
    // Map [t0, inf) onto (0, 1] via u = t0/s.
    let tail_from = |t0: f64| {
        let integrand = move |s: f64| {
            if s == 0.0 {
                0.0
            } else {
                g(t0 / s) * t0 / (s * s)
            }
        };
        adaptive_simpson(&integrand, 0.0, 1.0, 1e-13)
    };
    let t0 = t.abs().max(1e-12);
    let total = 2.0 * (adaptive_simpson(&g, 0.0, 1.0, 1e-13) + tail_from(1.0));
    (2.0 * tail_from(t0) / total).min(1.0)
}

/// Maclaurin-series erf, independent of the library's route.
pub fn erf_series_oracle(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let mut n = 0u32;
    loop {
        n += 1;
        let nf = n as f64;
        term *= -x * x / nf;
        let contribution = term / (2.0 * nf + 1.0);
        sum += contribution;
        if contribution.abs() < 1e-18 * sum.abs().max(1e-300) || n > 300 {
            break;
        }
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

/// Two-sided normal p via the series erf.
pub fn z_two_sided_p_oracle(z: f64) -> f64 {
    1.0 - erf_series_oracle(z.abs() / std::f64::consts::SQRT_2)
}

// ---------------------------------------------------------------------------
// Retrieval oracle
// ---------------------------------------------------------------------------

/// Full-sort top-k: naive cosine per entry, argsort by (score desc,
/// id asc), truncate.
pub fn top_k_oracle(
    entries: &[(String, Vec<f32>)],
    query: &[f32],
    k: usize,
) -> Vec<(String, f64)> {
    let naive_cosine = |a: &[f32], b: &[f32]| {
        let mut dot = 0.0f64;
        let mut na = 0.0f64;
        let mut nb = 0.0f64;
        for i in 0..a.len() {
            dot += a[i] as f64 * b[i] as f64;
            na += a[i] as f64 * a[i] as f64;
            nb += b[i] as f64 * b[i] as f64;
        }
        (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
    };
    let mut scored: Vec<(String, f64)> = entries
        .iter()
        .map(|(id, v)| (id.clone(), naive_cosine(query, v)))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(k);
    scored
}
