//! Medical-Wikipedia ingestion: parsing pre-extracted pages, aligning the
//! three languages through interlanguage links, de-duplication, and the
//! all-3-language filter.
//!
//! The ingestion format is JSONL, one object per page:
//! `{"lang","title","page_id","infobox","sections":[{"heading","body"}],
//! "interlang":{lang:title}}`, UTF-8, NFC. Raw-body documents without
//! pre-split sections carry a `"body"` field instead and land in a single
//! `"__body__"` section.

use log::warn;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use unicode_normalization::UnicodeNormalization;

use crate::kb::word_count;
use crate::lang::Lang;

/// Heading assigned when a document has no usable section structure.
pub const FALLBACK_HEADING: &str = "__body__";

/// One section of a page: heading plus body text, source order preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub body: String,
}

/// A single-language article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WikiPage {
    pub lang: Lang,
    pub title: String,
    pub page_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infobox: Option<String>,
    pub sections: Vec<Section>,
    /// Interlanguage links: target language -> title over there.
    #[serde(default)]
    pub interlang: BTreeMap<Lang, String>,
}

impl WikiPage {
    /// Words in the page body (section bodies plus infobox; headings are
    /// markers and do not count).
    pub fn word_count(&self) -> u64 {
        let body: u64 = self.sections.iter().map(|s| word_count(&s.body)).sum();
        body + self.infobox.as_deref().map_or(0, word_count)
    }
}

/// A cross-language aligned trio seeded from the English page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageBundle {
    /// English title after de-duplication.
    pub canonical_key: String,
    pub en: WikiPage,
    pub it: Option<WikiPage>,
    pub es: Option<WikiPage>,
}

impl PageBundle {
    pub fn is_complete(&self) -> bool {
        self.it.is_some() && self.es.is_some()
    }

    pub fn page(&self, lang: Lang) -> Option<&WikiPage> {
        match lang {
            Lang::En => Some(&self.en),
            Lang::It => self.it.as_ref(),
            Lang::Es => self.es.as_ref(),
        }
    }
}

/// Raw ingestion record. `sections` is the normal shape; `body` is the
/// fallback for documents whose section boundaries were not extracted.
#[derive(Debug, Clone, Deserialize)]
pub struct RawDocument {
    #[serde(default)]
    pub lang: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub page_id: Option<String>,
    #[serde(default)]
    pub infobox: Option<String>,
    #[serde(default)]
    pub sections: Vec<Section>,
    #[serde(default)]
    pub body: Option<String>,
    #[serde(default)]
    pub interlang: BTreeMap<String, String>,
}

/// Outcome of parsing one language's document stream.
#[derive(Debug, Default)]
pub struct ParseReport {
    pub pages: Vec<WikiPage>,
    /// Documents dropped for missing/empty titles or ids, with reasons.
    pub skipped: Vec<String>,
}

/// NFC-normalizes and trims a title for matching and de-duplication.
pub fn normalize_title(title: &str) -> String {
    title.trim().nfc().collect()
}

/// Parses a stream of raw documents into [`WikiPage`]s for one language.
///
/// Documents without a title (or without a page id) are item-level errors:
/// skipped, logged, and counted in the report. A document whose section
/// markers are unusable (no sections, or blank headings) keeps its entire
/// body as one `"__body__"` section.
pub fn parse_page_set(raw_documents: Vec<RawDocument>, lang: Lang) -> ParseReport {
    let mut report = ParseReport::default();
    for (idx, doc) in raw_documents.into_iter().enumerate() {
        let title = doc.title.as_deref().map(normalize_title).unwrap_or_default();
        if title.is_empty() {
            let reason = format!("document #{idx} ({lang}) has no title");
            warn!("ingestion skip: {reason}");
            report.skipped.push(reason);
            continue;
        }
        let page_id = doc.page_id.clone().unwrap_or_default();
        if page_id.is_empty() {
            let reason = format!("document #{idx} ({lang}, {title:?}) has no page_id");
            warn!("ingestion skip: {reason}");
            report.skipped.push(reason);
            continue;
        }
        if let Some(doc_lang) = doc.lang.as_deref() {
            if doc_lang != lang.code() {
                let reason =
                    format!("document #{idx} ({title:?}) declares lang {doc_lang:?}, expected {lang}");
                warn!("ingestion skip: {reason}");
                report.skipped.push(reason);
                continue;
            }
        }

        let sections = normalize_sections(doc.sections, doc.body.as_deref());
        let mut interlang = BTreeMap::new();
        for (code, target) in doc.interlang {
            let target = normalize_title(&target);
            if target.is_empty() {
                continue;
            }
            if let Ok(target_lang) = code.parse::<Lang>() {
                if target_lang != lang {
                    interlang.insert(target_lang, target);
                }
            }
        }

        report.pages.push(WikiPage {
            lang,
            title,
            page_id,
            infobox: doc.infobox.filter(|s| !s.trim().is_empty()),
            sections,
            interlang,
        });
    }
    report
}

fn normalize_sections(sections: Vec<Section>, body: Option<&str>) -> Vec<Section> {
    let usable = !sections.is_empty() && sections.iter().all(|s| !s.heading.trim().is_empty());
    if usable {
        return sections
            .into_iter()
            .map(|s| Section {
                heading: s.heading.trim().to_string(),
                body: s.body,
            })
            .collect();
    }
    // Malformed or missing markers: collapse everything into one section.
    let mut text = String::new();
    for s in &sections {
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&s.body);
    }
    if let Some(body) = body {
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(body);
    }
    if text.is_empty() {
        Vec::new()
    } else {
        vec![Section {
            heading: FALLBACK_HEADING.to_string(),
            body: text,
        }]
    }
}

/// Collapses pages with an identical `page_id` or identical normalized
/// title; the first occurrence wins and output order is stable.
pub fn deduplicate(pages: Vec<WikiPage>) -> Vec<WikiPage> {
    let mut seen_ids = HashSet::new();
    let mut seen_titles = HashSet::new();
    let mut out = Vec::with_capacity(pages.len());
    for page in pages {
        let title_key = normalize_title(&page.title);
        if seen_ids.contains(&page.page_id) || seen_titles.contains(&title_key) {
            warn!(
                "dedup: dropping duplicate page id={} title={:?}",
                page.page_id, page.title
            );
            continue;
        }
        seen_ids.insert(page.page_id.clone());
        seen_titles.insert(title_key);
        out.push(page);
    }
    out
}

/// Aligns English pages with their Italian and Spanish counterparts via
/// interlanguage links. Matching is exact on the NFC-normalized, trimmed
/// title. Duplicate titles within one language keep the first page in
/// `page_id` order; collisions are logged.
pub fn link_languages(
    en_pages: Vec<WikiPage>,
    it_pages: Vec<WikiPage>,
    es_pages: Vec<WikiPage>,
) -> Vec<PageBundle> {
    let it_by_title = title_index(it_pages);
    let es_by_title = title_index(es_pages);

    en_pages
        .into_iter()
        .map(|en| {
            let it = lookup(&it_by_title, &en, Lang::It);
            let es = lookup(&es_by_title, &en, Lang::Es);
            PageBundle {
                canonical_key: en.title.clone(),
                en,
                it,
                es,
            }
        })
        .collect()
}

fn title_index(pages: Vec<WikiPage>) -> HashMap<String, WikiPage> {
    let mut sorted = pages;
    sorted.sort_by(|a, b| a.page_id.cmp(&b.page_id));
    let mut index = HashMap::with_capacity(sorted.len());
    for page in sorted {
        let key = normalize_title(&page.title);
        if let Some(existing) = index.get(&key) {
            let existing: &WikiPage = existing;
            warn!(
                "link: title collision on {:?} ({} kept, {} dropped)",
                key, existing.page_id, page.page_id
            );
            continue;
        }
        index.insert(key, page);
    }
    index
}

fn lookup(index: &HashMap<String, WikiPage>, en: &WikiPage, lang: Lang) -> Option<WikiPage> {
    let target = en.interlang.get(&lang)?;
    let found = index.get(&normalize_title(target)).cloned();
    if found.is_none() {
        warn!(
            "link: {} interlanguage target {:?} of {:?} not found",
            lang, target, en.title
        );
    }
    found
}

/// Keeps only bundles with all three languages present; order stable.
pub fn filter_all_languages(bundles: Vec<PageBundle>) -> Vec<PageBundle> {
    filter_languages(bundles, &Lang::ALL)
}

/// Generalization of the all-3 filter to a configured language subset;
/// a bundle survives when it has a page for every requested language.
pub fn filter_languages(bundles: Vec<PageBundle>, langs: &[Lang]) -> Vec<PageBundle> {
    bundles
        .into_iter()
        .filter(|b| langs.iter().all(|l| b.page(*l).is_some()))
        .collect()
}

/// Page and word counts for one language at one stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCount {
    pub pages: u64,
    pub words: u64,
}

impl StageCount {
    pub fn word_count_millions(&self) -> f64 {
        self.words as f64 / 1e6
    }
}

/// Per-language page/word counts at the three corpus stages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub source: BTreeMap<Lang, StageCount>,
    pub deduplicated: BTreeMap<Lang, StageCount>,
    pub all_languages: BTreeMap<Lang, StageCount>,
}

impl CorpusStats {
    /// Counts must be monotonically non-increasing across stages.
    pub fn is_monotonic(&self) -> bool {
        Lang::ALL.iter().all(|lang| {
            let s = self.source.get(lang).copied().unwrap_or_default();
            let d = self.deduplicated.get(lang).copied().unwrap_or_default();
            let f = self.all_languages.get(lang).copied().unwrap_or_default();
            s.pages >= d.pages && d.pages >= f.pages && s.words >= d.words && d.words >= f.words
        })
    }
}

fn count_pages<'a>(pages: impl Iterator<Item = &'a WikiPage>) -> StageCount {
    let mut count = StageCount::default();
    for page in pages {
        count.pages += 1;
        count.words += page.word_count();
    }
    count
}

/// Computes per-language counts for the source, de-duplicated, and
/// all-3-filtered stages.
pub fn corpus_stats(
    source: &BTreeMap<Lang, Vec<WikiPage>>,
    deduplicated: &BTreeMap<Lang, Vec<WikiPage>>,
    filtered_bundles: &[PageBundle],
) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for lang in Lang::ALL {
        let src = source.get(&lang).map(Vec::as_slice).unwrap_or_default();
        let dedup = deduplicated
            .get(&lang)
            .map(Vec::as_slice)
            .unwrap_or_default();
        stats.source.insert(lang, count_pages(src.iter()));
        stats.deduplicated.insert(lang, count_pages(dedup.iter()));
        stats.all_languages.insert(
            lang,
            count_pages(filtered_bundles.iter().filter_map(|b| b.page(lang))),
        );
    }
    stats
}
