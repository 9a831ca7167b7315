//! Pipeline configuration: one JSON document, env vars for secrets only.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use medtrace_core::gateway::BackendConfig;
use medtrace_core::kb::KbParams;
use medtrace_core::metrics::ScorerConfig;
use medtrace_core::retrieval::EmbedConfig;
use medtrace_core::Lang;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_languages")]
    pub languages: Vec<Lang>,
    pub chat_backend: BackendConfig,
    pub embedding_backend: EmbedConfig,
    /// Optional external neural-metric scorer endpoint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer: Option<ScorerConfig>,
    #[serde(default)]
    pub kb_params: KbParams,
    #[serde(default = "default_k")]
    pub retrieval_k: usize,
    #[serde(default = "default_shot_count")]
    pub shot_count: usize,
    /// Worker threads for item-level stage parallelism.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Seed for randomized fixture generation; the core path has no
    /// randomness of its own.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: PathsConfig,
}

fn default_languages() -> Vec<Lang> {
    vec![Lang::En, Lang::It, Lang::Es]
}
fn default_k() -> usize {
    5
}
fn default_shot_count() -> usize {
    2
}
fn default_concurrency() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsConfig {
    /// Directory every stage artifact lands in.
    #[serde(default = "default_work_dir")]
    pub work_dir: PathBuf,
    /// Directory holding the raw page dumps, `{lang}.jsonl` per language.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_pages_dir: Option<PathBuf>,
    /// JSONL log of every successful chat call. Defaults to
    /// `{work_dir}/records.jsonl`; set to the empty string to disable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records_log: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            work_dir: default_work_dir(),
            raw_pages_dir: None,
            records_log: None,
        }
    }
}

fn default_work_dir() -> PathBuf {
    PathBuf::from("work")
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("config {} did not parse: {e}", path.display()))?;
        if config.retrieval_k < 1 {
            anyhow::bail!("retrieval_k must be >= 1");
        }
        Ok(config)
    }

    pub fn work(&self, name: &str) -> PathBuf {
        self.paths.work_dir.join(name)
    }

    pub fn raw_pages(&self, lang: Lang) -> PathBuf {
        self.paths
            .raw_pages_dir
            .clone()
            .unwrap_or_else(|| self.paths.work_dir.join("raw_pages"))
            .join(format!("{lang}.jsonl"))
    }

    pub fn bundles(&self) -> PathBuf {
        self.work("bundles.jsonl")
    }

    pub fn corpus_stats(&self) -> PathBuf {
        self.work("corpus_stats.json")
    }

    pub fn kb_chunks(&self, lang: Lang) -> PathBuf {
        self.work(&format!("kb.{lang}.jsonl"))
    }

    pub fn kb_manifest(&self, lang: Lang) -> PathBuf {
        self.work(&format!("kb.{lang}.manifest.json"))
    }

    pub fn index_rows(&self, lang: Lang) -> PathBuf {
        self.work(&format!("index.{lang}.jsonl"))
    }

    pub fn index_manifest(&self, lang: Lang) -> PathBuf {
        self.work(&format!("index.{lang}.manifest.json"))
    }

    pub fn items(&self, lang: Lang) -> PathBuf {
        self.work(&format!("items.{lang}.jsonl"))
    }

    pub fn stage_manifest(&self, stage: &str, lang: Lang) -> PathBuf {
        self.work(&format!("{stage}.{lang}.manifest.json"))
    }

    pub fn backtranslation_report(&self, lang: Lang) -> PathBuf {
        self.work(&format!("backtranslation.{lang}.json"))
    }

    pub fn contexts(&self, lang: Lang) -> PathBuf {
        self.work(&format!("contexts.{lang}.jsonl"))
    }

    pub fn traces(&self, lang: Lang) -> PathBuf {
        self.work(&format!("traces.{lang}.jsonl"))
    }

    pub fn kept_traces(&self, lang: Lang) -> PathBuf {
        self.work(&format!("kept.{lang}.jsonl"))
    }

    pub fn verify_report(&self, lang: Lang) -> PathBuf {
        self.work(&format!("verify.{lang}.json"))
    }

    pub fn dataset(&self, lang: Lang) -> PathBuf {
        self.work(&format!("dataset.{lang}.jsonl"))
    }

    pub fn dataset_counts(&self, lang: Lang) -> PathBuf {
        self.work(&format!("dataset_counts.{lang}.json"))
    }

    pub fn training_export(&self, lang: Lang) -> PathBuf {
        self.work(&format!("training.{lang}.jsonl"))
    }

    pub fn outcomes(&self, mode: &str, lang: Lang) -> PathBuf {
        self.work(&format!("outcomes.{mode}.{lang}.jsonl"))
    }

    pub fn report_base(&self) -> PathBuf {
        self.work("report")
    }

    /// Provenance log path; `Some("")` in the config disables logging.
    pub fn records_log(&self) -> Option<PathBuf> {
        match &self.paths.records_log {
            Some(p) if p.as_os_str().is_empty() => None,
            Some(p) => Some(p.clone()),
            None => Some(self.work("records.jsonl")),
        }
    }
}
