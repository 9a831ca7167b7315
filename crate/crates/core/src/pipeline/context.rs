//! Context construction: retrieve the top-k chunks for a question and
//! consolidate them with one rewrite call.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::gateway::{render_rewrite_prompt, CallMeta, Gateway};
use crate::kb::{word_count, Chunk, KnowledgeBase};
use crate::qa::QAItem;
use crate::retrieval::{format_query, top_k, Embedder, VectorIndex};

/// Persisted context row: the retrieved chunk ids, the rewritten context,
/// and the word counts before and after rewriting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub qa_id: String,
    pub chunk_ids: Vec<String>,
    pub context: String,
    pub orig_len: u64,
    pub rewritten_len: u64,
    /// Set when the rewrite call failed and the raw concatenation was kept.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub rewrite_fallback: bool,
}

/// Retrieval-plus-rewrite over one language's KB and index.
pub struct ContextBuilder<'a> {
    index: &'a VectorIndex,
    chunks_by_id: HashMap<&'a str, &'a Chunk>,
    embedder: &'a Embedder,
    gateway: &'a Gateway,
    k: usize,
}

impl<'a> ContextBuilder<'a> {
    pub fn new(
        index: &'a VectorIndex,
        kb: &'a KnowledgeBase,
        embedder: &'a Embedder,
        gateway: &'a Gateway,
        k: usize,
    ) -> Result<Self> {
        if kb.lang != index.lang {
            return Err(Error::Config(format!(
                "KB language {} does not match index language {}",
                kb.lang, index.lang
            )));
        }
        if kb.chunks.is_empty() || index.is_empty() {
            return Err(Error::Input(format!(
                "empty knowledge base for {}: grounding unavailable",
                kb.lang
            )));
        }
        Ok(ContextBuilder {
            index,
            chunks_by_id: kb
                .chunks
                .iter()
                .map(|c| (c.chunk_id.as_str(), c))
                .collect(),
            embedder,
            gateway,
            k,
        })
    }

    /// Builds the context for one item: top-k retrieval over the item's
    /// question-options pair, then one rewrite call; on rewrite failure the
    /// unrewritten concatenation is kept and flagged.
    pub fn build(&self, qa: &QAItem, ordinal: Option<u64>) -> Result<ContextRecord> {
        if qa.lang != self.index.lang {
            return Err(Error::Input(format!(
                "item {} is {} but the index is {}",
                qa.qa_id, qa.lang, self.index.lang
            )));
        }
        let query = self.embedder.embed(&[format_query(qa)])?;
        let result = top_k(self.index, &query[0], &qa.qa_id, self.k)?;

        let mut chunk_ids = Vec::with_capacity(result.ranked.len());
        let mut texts = Vec::with_capacity(result.ranked.len());
        for (chunk_id, _) in &result.ranked {
            let chunk = self.chunks_by_id.get(chunk_id.as_str()).ok_or_else(|| {
                Error::Input(format!("index entry {chunk_id} is not in the KB"))
            })?;
            chunk_ids.push(chunk_id.clone());
            texts.push(chunk.render());
        }

        let joined = texts.join("\n\n");
        let orig_len = word_count(&joined);
        let messages = render_rewrite_prompt(&texts)?;
        let meta = CallMeta {
            item_id: Some(&qa.qa_id),
            ordinal,
        };
        let (context, rewrite_fallback) = match self.gateway.chat_with(meta, &messages) {
            Ok(rewritten) => (rewritten, false),
            Err(e) => {
                log::warn!("rewrite failed for {}; keeping raw chunks: {e}", qa.qa_id);
                (joined, true)
            }
        };
        Ok(ContextRecord {
            qa_id: qa.qa_id.clone(),
            rewritten_len: word_count(&context),
            context,
            orig_len,
            chunk_ids,
            rewrite_fallback,
        })
    }
}
