//! Per-language knowledge bases of section chunks.
//!
//! Section-to-chunk rules, applied in order: noisy sections are removed by
//! an exclusion list on the exact heading; raw sections over `max_words`
//! are discarded; each surviving section becomes a chunk; chunks under
//! `min_words` merge into the preceding chunk (the first merges forward);
//! a page whose entire surviving text is under `min_words` stays as one
//! chunk. Merged chunks are not re-checked against `max_words`.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

use crate::corpus::{PageBundle, Section, WikiPage};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::lang::Lang;

/// Number of maximal non-whitespace runs (Unicode whitespace).
pub fn word_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Headings removed from pages before chunking, per language.
///
/// Matching is exact and case-sensitive after trimming.
pub fn exclusion_list(lang: Lang) -> &'static [&'static str] {
    match lang {
        Lang::It => &[
            "Note",
            "Altri progetti",
            "Voci correlate",
            "Collegamenti esterni",
            "Bibliografia",
            "Nella cultura di massa",
            "Storia",
        ],
        Lang::Es => &[
            "Referencias",
            "Referencia",
            "Véase también",
            "Bibliografía complementaria",
            "Lectura adicional",
            "Referencias y notas de pie",
            "Enlaces externos",
            "Historia",
            "Bibliografía",
            "Notas",
            "En la cultura popular",
            "Otras lecturas",
            "Ver también",
            "Bibliografía adicional",
        ],
        Lang::En => &[
            "References",
            "Additional bibliography",
            "References and footnotes",
            "External links",
            "See also",
            "History",
            "Notes",
            "Bibliography",
            "Cultural references",
            "Related articles",
            "Related topics",
            "Literature",
            "Society and culture",
            "Further reading",
        ],
    }
}

/// Chunking parameters; `exclusion_id` names the exclusion-list revision
/// recorded in the KB manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbParams {
    pub max_words: u64,
    pub min_words: u64,
    pub exclusion_id: String,
}

impl Default for KbParams {
    fn default() -> Self {
        KbParams {
            max_words: 5000,
            min_words: 250,
            exclusion_id: "builtin-v1".into(),
        }
    }
}

/// A retrieval unit: one or more merged page sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    /// Stable id: `"{page_id}:{first}-{last}"` over the page's original
    /// section indices.
    pub chunk_id: String,
    pub lang: Lang,
    pub page_title: String,
    pub heading: String,
    pub body: String,
    pub word_count: u64,
}

impl Chunk {
    /// Text embedded and shown to the rewriter: title, heading, body.
    pub fn render(&self) -> String {
        format!("{} — {}\n{}", self.page_title, self.heading, self.body)
    }
}

/// A per-language chunk store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub lang: Lang,
    pub build_params: KbParams,
    pub chunks: Vec<Chunk>,
}

impl KnowledgeBase {
    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.chunks.iter().find(|c| c.chunk_id == chunk_id)
    }
}

/// Removes sections whose trimmed heading matches an exclusion entry
/// exactly; order preserved. Returns the survivors with their original
/// section indices.
pub fn section_filter<'a>(
    page: &'a WikiPage,
    exclusion: &[&str],
) -> Vec<(usize, &'a Section)> {
    let excluded: HashSet<&str> = exclusion.iter().copied().collect();
    page.sections
        .iter()
        .enumerate()
        .filter(|(_, s)| !excluded.contains(s.heading.trim()))
        .collect()
}

struct Piece {
    first: usize,
    last: usize,
    heading: String,
    body: String,
    words: u64,
}

impl Piece {
    fn absorb_after(&mut self, other: Piece) {
        self.last = other.last;
        self.heading = format!("{} / {}", self.heading, other.heading);
        self.body = format!("{}\n\n{}", self.body, other.body);
        self.words += other.words;
    }

    fn absorb_before(&mut self, other: Piece) {
        self.first = other.first;
        self.heading = format!("{} / {}", other.heading, self.heading);
        self.body = format!("{}\n\n{}", other.body, self.body);
        self.words += other.words;
    }

    fn into_chunk(self, page: &WikiPage) -> Chunk {
        Chunk {
            chunk_id: format!("{}:{}-{}", page.page_id, self.first, self.last),
            lang: page.lang,
            page_title: page.title.clone(),
            heading: self.heading,
            body: self.body,
            word_count: self.words,
        }
    }
}

/// Splits one already-filtered page into chunks under the size rules.
///
/// `sections` carries `(original_index, section)` pairs as produced by
/// [`section_filter`]. Pages with no surviving section yield an empty list.
pub fn chunk_page(
    page: &WikiPage,
    sections: &[(usize, &Section)],
    params: &KbParams,
) -> Vec<Chunk> {
    // Oversized raw sections are discarded before any merging.
    let mut pieces: Vec<Piece> = sections
        .iter()
        .map(|(idx, s)| Piece {
            first: *idx,
            last: *idx,
            heading: s.heading.clone(),
            body: s.body.clone(),
            words: word_count(&s.body),
        })
        .filter(|p| p.words <= params.max_words)
        .collect();
    if pieces.is_empty() {
        return Vec::new();
    }

    // Merge undersized chunks left to right: into the preceding chunk, or
    // forward when the first chunk is the short one. A single remaining
    // chunk is kept regardless of size.
    loop {
        if pieces.len() <= 1 {
            break;
        }
        let Some(i) = pieces.iter().position(|p| p.words < params.min_words) else {
            break;
        };
        if i == 0 {
            let short = pieces.remove(0);
            pieces[0].absorb_before(short);
        } else {
            let short = pieces.remove(i);
            pieces[i - 1].absorb_after(short);
        }
    }

    pieces.into_iter().map(|p| p.into_chunk(page)).collect()
}

/// Convenience wrapper: exclusion filter plus [`chunk_page`] with the
/// language's builtin exclusion list.
pub fn chunk_page_default(page: &WikiPage, params: &KbParams) -> Vec<Chunk> {
    let sections = section_filter(page, exclusion_list(page.lang));
    chunk_page(page, &sections, params)
}

/// Builds the knowledge base for one language side of all-3-filtered
/// bundles. Chunk order is deterministic: bundle order (seeded from the
/// English list), then section span.
pub fn build_kb(bundles: &[PageBundle], lang: Lang, params: &KbParams) -> KnowledgeBase {
    let mut chunks = Vec::new();
    for bundle in bundles {
        if let Some(page) = bundle.page(lang) {
            chunks.extend(chunk_page_default(page, params));
        }
    }
    KnowledgeBase {
        lang,
        build_params: params.clone(),
        chunks,
    }
}

/// Sidecar manifest persisted next to the chunk JSONL.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KbManifest {
    pub lang: Lang,
    pub build_params: KbParams,
    pub chunk_count: usize,
    pub total_words: u64,
}

/// Persists the KB as one chunk object per line plus a manifest JSON.
pub fn save_kb(kb: &KnowledgeBase, chunks_path: &Path, manifest_path: &Path) -> Result<()> {
    jsonl::write_jsonl(chunks_path, &kb.chunks)?;
    jsonl::write_json(
        manifest_path,
        &KbManifest {
            lang: kb.lang,
            build_params: kb.build_params.clone(),
            chunk_count: kb.chunks.len(),
            total_words: kb.chunks.iter().map(|c| c.word_count).sum(),
        },
    )
}

pub fn load_kb(chunks_path: &Path, manifest_path: &Path) -> Result<KnowledgeBase> {
    let manifest: KbManifest = jsonl::read_json(manifest_path)?;
    let chunks: Vec<Chunk> = jsonl::read_jsonl(chunks_path)?;
    if chunks.iter().any(|c| c.lang != manifest.lang) {
        return Err(Error::Input(format!(
            "KB at {} mixes languages",
            chunks_path.display()
        )));
    }
    Ok(KnowledgeBase {
        lang: manifest.lang,
        build_params: manifest.build_params,
        chunks,
    })
}
