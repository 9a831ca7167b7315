//! Embedding-based retrieval: query formatting, per-language vector
//! indexes, and exact top-k cosine search.

pub mod embedder;

pub use embedder::{EmbedBackend, EmbedConfig, EmbedKind, Embedder, HashEmbedder, HttpEmbedder};

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::jsonl;
use crate::lang::Lang;
use crate::qa::QAItem;

/// A fixed-length embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub normalized: bool,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| *v as f64 * *v as f64)
            .sum::<f64>()
            .sqrt()
    }

    /// L2-normalizes in place; zero vectors are a domain error.
    pub fn normalize(&mut self) -> Result<()> {
        let norm = self.l2_norm();
        if norm == 0.0 {
            return Err(Error::Domain("cannot normalize a zero vector".into()));
        }
        for v in &mut self.values {
            *v = (*v as f64 / norm) as f32;
        }
        self.normalized = true;
        Ok(())
    }
}

/// Cosine similarity, `dot(a, b) / (|a| |b|)`, in [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Domain(format!(
            "cosine of mismatched dims {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.values.iter().zip(&b.values) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("cosine of a zero vector".into()));
    }
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Immutable per-language vector index over chunk embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorIndex {
    pub lang: Lang,
    pub dim: usize,
    /// Configuration string naming the embedding model.
    pub embedder_id: String,
    pub entries: Vec<(String, EmbeddingVector)>,
}

impl VectorIndex {
    /// Builds an index from unique `(chunk_id, vector)` entries of one
    /// dimension.
    pub fn build(
        lang: Lang,
        embedder_id: &str,
        entries: Vec<(String, EmbeddingVector)>,
    ) -> Result<Self> {
        let dim = entries.first().map(|(_, v)| v.dim()).unwrap_or(0);
        let mut seen = std::collections::HashSet::new();
        for (id, vector) in &entries {
            if vector.dim() != dim {
                return Err(Error::Config(format!(
                    "index entry {id} has dim {}, expected {dim}",
                    vector.dim()
                )));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Input(format!("duplicate chunk_id {id} in index")));
            }
        }
        Ok(VectorIndex {
            lang,
            dim,
            embedder_id: embedder_id.to_string(),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Ranked retrieval output for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub qa_id: String,
    pub k: usize,
    /// `(chunk_id, cosine)` sorted score-descending, ties by ascending
    /// chunk_id.
    pub ranked: Vec<(String, f64)>,
}

/// Renders a question-options pair as the retrieval query string:
/// the question, a newline, then the numbered option lines.
pub fn format_query(qa: &QAItem) -> String {
    format!("{}\n{}", qa.question, qa.options_block())
}

/// Exact top-k by cosine over the whole index; no approximation.
///
/// Ties break by ascending chunk_id, which also makes the result
/// independent of index entry order.
pub fn top_k(
    index: &VectorIndex,
    query: &EmbeddingVector,
    qa_id: &str,
    k: usize,
) -> Result<RetrievalResult> {
    if k == 0 {
        return Err(Error::Input("top_k requires k >= 1".into()));
    }
    if index.is_empty() {
        return Ok(RetrievalResult {
            qa_id: qa_id.to_string(),
            k,
            ranked: Vec::new(),
        });
    }
    if query.dim() != index.dim {
        return Err(Error::Config(format!(
            "query dim {} does not match index dim {}",
            query.dim(),
            index.dim
        )));
    }
    let mut scored = Vec::with_capacity(index.len());
    for (chunk_id, vector) in &index.entries {
        scored.push((chunk_id.as_str(), cosine(query, vector)?));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(b.0))
    });
    scored.truncate(k);
    Ok(RetrievalResult {
        qa_id: qa_id.to_string(),
        k,
        ranked: scored
            .into_iter()
            .map(|(id, s)| (id.to_string(), s))
            .collect(),
    })
}

/// One persisted index row.
#[derive(Debug, Serialize, Deserialize)]
struct IndexRow {
    chunk_id: String,
    vector: Vec<f32>,
}

/// Index manifest sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexManifest {
    pub lang: Lang,
    pub dim: usize,
    pub embedder_id: String,
    pub entry_count: usize,
}

/// Persists the index as JSONL rows plus a manifest.
pub fn save_index(index: &VectorIndex, rows_path: &Path, manifest_path: &Path) -> Result<()> {
    let rows: Vec<IndexRow> = index
        .entries
        .iter()
        .map(|(chunk_id, v)| IndexRow {
            chunk_id: chunk_id.clone(),
            vector: v.values.clone(),
        })
        .collect();
    jsonl::write_jsonl(rows_path, &rows)?;
    jsonl::write_json(
        manifest_path,
        &IndexManifest {
            lang: index.lang,
            dim: index.dim,
            embedder_id: index.embedder_id.clone(),
            entry_count: index.entries.len(),
        },
    )
}

pub fn load_index(rows_path: &Path, manifest_path: &Path) -> Result<VectorIndex> {
    let manifest: IndexManifest = jsonl::read_json(manifest_path)?;
    let rows: Vec<IndexRow> = jsonl::read_jsonl(rows_path)?;
    let entries = rows
        .into_iter()
        .map(|r| {
            (
                r.chunk_id,
                EmbeddingVector {
                    values: r.vector,
                    normalized: true,
                },
            )
        })
        .collect();
    let index = VectorIndex::build(manifest.lang, &manifest.embedder_id, entries)?;
    if index.dim != manifest.dim && !index.is_empty() {
        return Err(Error::Config(format!(
            "index dim {} does not match manifest dim {}",
            index.dim, manifest.dim
        )));
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qa::{QAItem, Source, Split};
    use std::collections::BTreeMap;

    fn vector(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector {
            values: values.to_vec(),
            normalized: false,
        }
    }

    fn qa() -> QAItem {
        let mut options = BTreeMap::new();
        options.insert("1".to_string(), Some("A".to_string()));
        options.insert("2".to_string(), Some("B".to_string()));
        options.insert("5".to_string(), None);
        QAItem {
            qa_id: "q1".into(),
            source: Source::MedQA,
            split: Split::Test,
            lang: Lang::En,
            question: "Q".into(),
            options,
            gold: "1".into(),
        }
    }

    #[test]
    fn format_query_renders_numbered_lines() {
        assert_eq!(format_query(&qa()), "Q\n1) A\n2) B");
        assert_eq!(format_query(&qa()), format_query(&qa()));
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&vector(&[1.0, 0.0]), &vector(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(cosine(&vector(&[1.0, 2.0]), &vector(&[2.0, 4.0])).unwrap(), 1.0);
        assert!(cosine(&vector(&[0.0, 0.0]), &vector(&[1.0, 0.0])).is_err());
        assert!(cosine(&vector(&[1.0]), &vector(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn cosine_matches_a_scalar_loop_oracle() {
        // Deterministic "random" pairs via a simple LCG.
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) as f32 - 1.0
        };
        for _ in 0..20 {
            let a: Vec<f32> = (0..24).map(|_| next()).collect();
            let b: Vec<f32> = (0..24).map(|_| next()).collect();
            let got = cosine(&vector(&a), &vector(&b)).unwrap();
            let mut dot = 0.0f64;
            let mut na = 0.0f64;
            let mut nb = 0.0f64;
            for i in 0..a.len() {
                dot += a[i] as f64 * b[i] as f64;
                na += a[i] as f64 * a[i] as f64;
                nb += b[i] as f64 * b[i] as f64;
            }
            let expected = dot / (na.sqrt() * nb.sqrt());
            assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        }
    }

    #[test]
    fn normalize_rejects_zero_vector() {
        let mut v = vector(&[0.0, 0.0]);
        assert!(v.normalize().is_err());
        let mut v = vector(&[3.0, 4.0]);
        v.normalize().unwrap();
        assert!((v.l2_norm() - 1.0).abs() < 1e-6);
    }

    fn index_of(entries: &[(&str, &[f32])]) -> VectorIndex {
        VectorIndex::build(
            Lang::En,
            "test",
            entries
                .iter()
                .map(|(id, v)| {
                    let mut vec = vector(v);
                    vec.normalize().unwrap();
                    (id.to_string(), vec)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn top_k_on_tiny_index_returns_what_exists() {
        let index = index_of(&[("c1", &[1.0, 0.0])]);
        let mut q = vector(&[1.0, 0.2]);
        q.normalize().unwrap();
        let result = top_k(&index, &q, "q1", 5).unwrap();
        assert_eq!(result.ranked.len(), 1);
        assert_eq!(result.k, 5);
    }

    #[test]
    fn top_k_empty_index_is_empty_result() {
        let index = VectorIndex::build(Lang::En, "test", vec![]).unwrap();
        let q = vector(&[1.0, 0.0]);
        let result = top_k(&index, &q, "q1", 5).unwrap();
        assert!(result.ranked.is_empty());
        assert_eq!(result.k, 5);
    }

    #[test]
    fn ties_break_by_ascending_chunk_id() {
        let index = index_of(&[("b", &[1.0, 0.0]), ("a", &[1.0, 0.0]), ("c", &[0.0, 1.0])]);
        let mut q = vector(&[1.0, 0.0]);
        q.normalize().unwrap();
        let result = top_k(&index, &q, "q1", 2).unwrap();
        let ids: Vec<_> = result.ranked.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn result_is_permutation_invariant() {
        let entries: &[(&str, &[f32])] = &[
            ("a", &[0.9, 0.1]),
            ("b", &[0.5, 0.5]),
            ("c", &[0.1, 0.9]),
            ("d", &[0.7, 0.3]),
        ];
        let mut shuffled = entries.to_vec();
        shuffled.reverse();
        let mut q = vector(&[1.0, 0.0]);
        q.normalize().unwrap();
        let r1 = top_k(&index_of(entries), &q, "q", 3).unwrap();
        let r2 = top_k(&index_of(&shuffled), &q, "q", 3).unwrap();
        assert_eq!(r1.ranked, r2.ranked);
    }

    #[test]
    fn dim_mismatch_is_config_error() {
        let index = index_of(&[("c1", &[1.0, 0.0])]);
        let q = vector(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            top_k(&index, &q, "q", 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn index_rejects_duplicate_ids_and_mixed_dims() {
        let v = |vals: &[f32]| {
            let mut v = vector(vals);
            v.normalize().unwrap();
            v
        };
        assert!(VectorIndex::build(
            Lang::En,
            "t",
            vec![("a".into(), v(&[1.0, 0.0])), ("a".into(), v(&[0.0, 1.0]))]
        )
        .is_err());
        assert!(VectorIndex::build(
            Lang::En,
            "t",
            vec![("a".into(), v(&[1.0, 0.0])), ("b".into(), v(&[1.0]))]
        )
        .is_err());
    }

    #[test]
    fn index_roundtrips_through_jsonl() {
        let index = index_of(&[("a", &[0.6, 0.8]), ("b", &[1.0, 0.0])]);
        let dir = tempfile::tempdir().unwrap();
        let rows = dir.path().join("index.jsonl");
        let manifest = dir.path().join("index.manifest.json");
        save_index(&index, &rows, &manifest).unwrap();
        let back = load_index(&rows, &manifest).unwrap();
        assert_eq!(back, index);
    }
}
