//! Subcommand implementations: each stage reads its inputs, writes JSONL
//! artifacts plus a manifest, and prints a single-line JSON summary.

use serde_json::json;
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use medtrace_core::corpus::{
    self, corpus_stats, deduplicate, filter_languages, link_languages, parse_page_set,
    CorpusStats, PageBundle, RawDocument, WikiPage,
};
use medtrace_core::eval::{
    aggregate, correction_analysis, delta_report, render_csv, render_text_table, run_eval,
    AccuracyTable, DeltaReport, EvalOutcome, ShotPool,
};
use medtrace_core::gateway::{BackendConfig, BackendKind, EvalMode, Gateway, MockPolicy};
use medtrace_core::jsonl;
use medtrace_core::kb::{build_kb, load_kb, save_kb, Chunk};
use medtrace_core::metrics::ExternalScorer;
use medtrace_core::pipeline::{
    apply_splits, assemble_dataset, back_translate_and_score, export_training, generate_trace,
    purity, run_stage, translate_item, verify_and_filter, ContextBuilder, ContextRecord,
    ItemOutcome, RawQAItem, StageOptions, TraceRow,
};
use medtrace_core::retrieval::{load_index, save_index, Embedder, VectorIndex};
use medtrace_core::{Error, Lang, QAItem, Source, Split};

use crate::config::PipelineConfig;

/// Failure classes that map onto distinct exit codes.
#[derive(Debug)]
pub enum CmdError {
    /// A stage input is missing (exit 3).
    MissingInput(String),
    /// The backend stayed unreachable through the retry budget (exit 4).
    Backend(String),
    /// Everything else (exit 1).
    Other(String),
}

impl CmdError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CmdError::MissingInput(_) => 3,
            CmdError::Backend(_) => 4,
            CmdError::Other(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CmdError::MissingInput(_) => "missing-input",
            CmdError::Backend(_) => "backend",
            CmdError::Other(_) => "error",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CmdError::MissingInput(m) | CmdError::Backend(m) | CmdError::Other(m) => m,
        }
    }
}

impl From<Error> for CmdError {
    fn from(e: Error) -> Self {
        match e {
            Error::Backend { .. } => CmdError::Backend(e.to_string()),
            other => CmdError::Other(other.to_string()),
        }
    }
}

impl From<anyhow::Error> for CmdError {
    fn from(e: anyhow::Error) -> Self {
        CmdError::Other(format!("{e:#}"))
    }
}

pub type CmdResult<T = ()> = Result<T, CmdError>;

fn failed_outcome(id: &str, e: &Error) -> ItemOutcome {
    ItemOutcome::Failed {
        id: id.to_string(),
        message: e.to_string(),
        backend_fault: matches!(e, Error::Backend { .. }),
    }
}

/// A batch where nothing succeeded and the failures were backend faults
/// means the backend is unreachable; that is a stage failure (exit 4),
/// not a partial-failure manifest.
fn check_wipeout(manifest: &medtrace_core::pipeline::BatchManifest) -> CmdResult {
    if manifest.done == 0 && manifest.failed > 0 && manifest.backend_faults == manifest.failed {
        return Err(CmdError::Backend(format!(
            "{}: all {} processed items failed on backend faults; backend unreachable",
            manifest.stage, manifest.failed
        )));
    }
    Ok(())
}

/// Shared per-invocation options coming from the global flags.
pub struct StageCtx {
    pub config: PipelineConfig,
    pub lang: Option<Lang>,
    pub stage_input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub backend: Option<String>,
    pub limit: Option<usize>,
    pub resume: bool,
}

impl StageCtx {
    fn lang_or(&self, default: Lang) -> Lang {
        self.lang.unwrap_or(default)
    }

    fn require_lang(&self) -> CmdResult<Lang> {
        self.lang
            .ok_or_else(|| CmdError::Other("this subcommand requires --lang".into()))
    }

    fn stage_options(&self) -> StageOptions {
        StageOptions {
            concurrency: self.config.concurrency.max(1),
            flush_every: (self.config.concurrency.max(1)) * 4,
            resume: self.resume,
        }
    }

    fn gateway(&self) -> CmdResult<Gateway> {
        let config = match self.backend.as_deref() {
            None => self.config.chat_backend.clone(),
            Some(spec) => backend_from_spec(spec, &self.config.chat_backend)?,
        };
        let gateway = Gateway::from_config(config)?;
        match self.config.records_log() {
            Some(path) => {
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| CmdError::Other(e.to_string()))?;
                }
                Ok(gateway.record_to_file(&path)?)
            }
            None => Ok(gateway),
        }
    }

    fn embedder(&self) -> CmdResult<Embedder> {
        Ok(Embedder::from_config(&self.config.embedding_backend)?)
    }

    fn scorer(&self) -> CmdResult<Option<ExternalScorer>> {
        match &self.config.scorer {
            Some(config) => Ok(Some(ExternalScorer::new(config.clone())?)),
            None => Ok(None),
        }
    }

    fn ensure_work_dir(&self) -> CmdResult<()> {
        std::fs::create_dir_all(&self.config.paths.work_dir)
            .map_err(|e| CmdError::Other(format!("cannot create work dir: {e}")))
    }
}

/// Parses a `--backend` override: `mock:<POLICY>` or `http`/`http:<url>`.
fn backend_from_spec(spec: &str, base: &BackendConfig) -> CmdResult<BackendConfig> {
    if let Some(policy) = spec.strip_prefix("mock:") {
        MockPolicy::parse(policy)?;
        return Ok(BackendConfig::mock(policy));
    }
    if spec == "http" {
        let mut config = base.clone();
        config.kind = BackendKind::Http;
        config.validate()?;
        return Ok(config);
    }
    if let Some(url) = spec.strip_prefix("http:") {
        let mut config = base.clone();
        config.kind = BackendKind::Http;
        config.base_url = Some(url.to_string());
        return Ok(config);
    }
    Err(CmdError::Other(format!(
        "unknown --backend spec {spec:?}; use mock:<POLICY> or http[:<base_url>]"
    )))
}

fn require(path: &Path) -> CmdResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CmdError::MissingInput(format!(
            "stage input {} does not exist",
            path.display()
        )))
    }
}

/// Reads a QA item file. Files carrying the source datasets' original
/// split labels (train/validation/test) go through the split policy;
/// files already in the final shape load as-is.
fn read_items(path: &Path, limit: Option<usize>) -> CmdResult<Vec<QAItem>> {
    require(path)?;
    let final_shape: Result<Vec<QAItem>, _> = jsonl::read_jsonl(path);
    let mut items = match final_shape {
        Ok(items) if items.iter().all(|i| i.validate().is_ok()) => items,
        _ => {
            let raw: Vec<RawQAItem> = jsonl::read_jsonl(path)?;
            apply_splits(raw)?
        }
    };
    items.sort_by(|a, b| a.qa_id.cmp(&b.qa_id));
    if let Some(limit) = limit {
        items.truncate(limit);
    }
    Ok(items)
}

fn print_summary(value: serde_json::Value) {
    println!("{value}");
}

/// Whether an item belongs to the trace-generation population: train-split
/// MedQA/MedMCQA. MedExpQA is test-only and never receives traces.
fn traceable(qa: &QAItem) -> bool {
    qa.split == Split::Train && qa.source != Source::MedExpQA
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

pub fn ingest(ctx: &StageCtx) -> CmdResult {
    ctx.ensure_work_dir()?;
    let mut source_pages: BTreeMap<Lang, Vec<WikiPage>> = BTreeMap::new();
    let mut dedup_pages: BTreeMap<Lang, Vec<WikiPage>> = BTreeMap::new();
    let mut skipped_total = 0usize;

    for &lang in &ctx.config.languages {
        let path = match &ctx.stage_input {
            Some(dir) => dir.join(format!("{lang}.jsonl")),
            None => ctx.config.raw_pages(lang),
        };
        require(&path)?;
        let raw: Vec<RawDocument> = jsonl::read_jsonl(&path)?;
        let report = parse_page_set(raw, lang);
        skipped_total += report.skipped.len();
        dedup_pages.insert(lang, deduplicate(report.pages.clone()));
        source_pages.insert(lang, report.pages);
    }

    let take = |map: &BTreeMap<Lang, Vec<WikiPage>>, lang: Lang| {
        map.get(&lang).cloned().unwrap_or_default()
    };
    let bundles_all = link_languages(
        take(&dedup_pages, Lang::En),
        take(&dedup_pages, Lang::It),
        take(&dedup_pages, Lang::Es),
    );
    let bundles = filter_languages(bundles_all, &ctx.config.languages);
    let stats = corpus_stats(&source_pages, &dedup_pages, &bundles);

    let bundles_path = ctx.out.clone().unwrap_or_else(|| ctx.config.bundles());
    jsonl::write_jsonl(&bundles_path, &bundles)?;
    jsonl::write_json(&ctx.config.corpus_stats(), &stats)?;

    print_summary(json!({
        "stage": "ingest",
        "languages": ctx.config.languages,
        "bundles": bundles.len(),
        "skipped_documents": skipped_total,
        "out": bundles_path,
        "stats": ctx.config.corpus_stats(),
    }));
    Ok(())
}

// ---------------------------------------------------------------------------
// build-kb / embed-kb
// ---------------------------------------------------------------------------

pub fn build_kb_cmd(ctx: &StageCtx) -> CmdResult {
    ctx.ensure_work_dir()?;
    let bundles_path = ctx.stage_input.clone().unwrap_or_else(|| ctx.config.bundles());
    require(&bundles_path)?;
    let bundles: Vec<PageBundle> = jsonl::read_jsonl(&bundles_path)?;
    let langs = match ctx.lang {
        Some(lang) => vec![lang],
        None => ctx.config.languages.clone(),
    };
    for lang in langs {
        let kb = build_kb(&bundles, lang, &ctx.config.kb_params);
        if kb.chunks.is_empty() {
            eprintln!("warning: knowledge base for {lang} is empty");
        }
        let chunks_path = match (&ctx.out, ctx.lang) {
            (Some(out), Some(_)) => out.clone(),
            _ => ctx.config.kb_chunks(lang),
        };
        save_kb(&kb, &chunks_path, &ctx.config.kb_manifest(lang))?;
        print_summary(json!({
            "stage": "build-kb",
            "lang": lang,
            "pages": bundles.len(),
            "chunks": kb.chunks.len(),
            "out": chunks_path,
        }));
    }
    Ok(())
}

pub fn embed_kb(ctx: &StageCtx) -> CmdResult {
    ctx.ensure_work_dir()?;
    let lang = ctx.lang_or(Lang::En);
    let chunks_path = ctx
        .stage_input
        .clone()
        .unwrap_or_else(|| ctx.config.kb_chunks(lang));
    require(&chunks_path)?;
    let kb = load_kb(&chunks_path, &ctx.config.kb_manifest(lang))?;
    let embedder = ctx.embedder()?;
    let texts: Vec<String> = kb.chunks.iter().map(Chunk::render).collect();
    let vectors = embedder.embed(&texts)?;
    let index = VectorIndex::build(
        lang,
        embedder.id(),
        kb.chunks
            .iter()
            .map(|c| c.chunk_id.clone())
            .zip(vectors)
            .collect(),
    )?;
    let rows_path = ctx.out.clone().unwrap_or_else(|| ctx.config.index_rows(lang));
    save_index(&index, &rows_path, &ctx.config.index_manifest(lang))?;
    print_summary(json!({
        "stage": "embed-kb",
        "lang": lang,
        "entries": index.len(),
        "dim": index.dim,
        "embedder": index.embedder_id,
        "out": rows_path,
    }));
    Ok(())
}

// ---------------------------------------------------------------------------
// translate / backtranslate-score
// ---------------------------------------------------------------------------

pub fn translate(ctx: &StageCtx) -> CmdResult {
    ctx.ensure_work_dir()?;
    let tgt = ctx.require_lang()?;
    if tgt == Lang::En {
        return Err(CmdError::Other("translate targets it or es".into()));
    }
    let input = ctx
        .stage_input
        .clone()
        .unwrap_or_else(|| ctx.config.items(Lang::En));
    let items = read_items(&input, ctx.limit)?;
    let gateway = ctx.gateway()?;
    let out = ctx.out.clone().unwrap_or_else(|| ctx.config.items(tgt));
    let manifest = run_stage(
        "translate",
        &items,
        &out,
        &ctx.config.stage_manifest("translate", tgt),
        ctx.stage_options(),
        |i, qa| {
            if qa.lang != Lang::En || qa.source == Source::MedExpQA {
                // MedExpQA is natively multilingual and stays untranslated.
                return ItemOutcome::Skipped;
            }
            match translate_item(qa, tgt, &gateway, Some(i as u64 + 1)) {
                Ok(translated) => match serde_json::to_string(&translated) {
                    Ok(line) => ItemOutcome::Line(line),
                    Err(e) => failed_outcome(&qa.qa_id, &Error::Json(e)),
                },
                Err(e) => failed_outcome(&qa.qa_id, &e),
            }
        },
    )?;
    check_wipeout(&manifest)?;
    print_summary(json!({
        "stage": "translate",
        "lang": tgt,
        "total": manifest.total,
        "done": manifest.done,
        "failed": manifest.failed,
        "skipped": manifest.skipped,
        "out": out,
    }));
    Ok(())
}

pub fn backtranslate_score(ctx: &StageCtx) -> CmdResult {
    ctx.ensure_work_dir()?;
    let lang = ctx.require_lang()?;
    let translated_path = ctx
        .stage_input
        .clone()
        .unwrap_or_else(|| ctx.config.items(lang));
    let originals_path = ctx.config.items(Lang::En);
    require(&originals_path)?;
    let suffix = format!("-{lang}");
    let translated: Vec<QAItem> = read_items(&translated_path, ctx.limit)?
        .into_iter()
        .filter(|i| i.qa_id.ends_with(&suffix))
        .collect();
    if translated.is_empty() {
        return Err(CmdError::Other(format!(
            "no machine-translated items (qa_id ending in {suffix}) in {}",
            translated_path.display()
        )));
    }
    let originals = read_items(&originals_path, None)?;
    let gateway = ctx.gateway()?;
    let scorer = ctx.scorer()?;
    let report = back_translate_and_score(
        &translated,
        &originals,
        &gateway,
        scorer.as_ref(),
        ctx.config.concurrency,
    )?;
    let out = ctx
        .out
        .clone()
        .unwrap_or_else(|| ctx.config.backtranslation_report(lang));
    jsonl::write_json(&out, &report)?;
    print_summary(json!({
        "stage": "backtranslate-score",
        "lang": lang,
        "items": report.item_count,
        "questions_chrf": report.questions.chrf,
        "questions_chrf_pp": report.questions.chrf_pp,
        "options_chrf": report.options.chrf,
        "options_chrf_pp": report.options.chrf_pp,
        "out": out,
    }));
    Ok(())
}

// ---------------------------------------------------------------------------
// retrieve / generate-traces / verify / assemble / export-training
// ---------------------------------------------------------------------------

pub fn retrieve(ctx: &StageCtx) -> CmdResult {
    ctx.ensure_work_dir()?;
    let lang = ctx.lang_or(Lang::En);
    let items_path = ctx.stage_input.clone().unwrap_or_else(|| ctx.config.items(lang));
    let items = read_items(&items_path, ctx.limit)?;
    require(&ctx.config.kb_chunks(lang))?;
    require(&ctx.config.index_rows(lang))?;
    let kb = load_kb(&ctx.config.kb_chunks(lang), &ctx.config.kb_manifest(lang))?;
    let index = load_index(&ctx.config.index_rows(lang), &ctx.config.index_manifest(lang))?;
    let embedder = ctx.embedder()?;
    let gateway = ctx.gateway()?;
    let builder = ContextBuilder::new(&index, &kb, &embedder, &gateway, ctx.config.retrieval_k)?;
    let out = ctx.out.clone().unwrap_or_else(|| ctx.config.contexts(lang));
    let manifest = run_stage(
        "retrieve",
        &items,
        &out,
        &ctx.config.stage_manifest("retrieve", lang),
        ctx.stage_options(),
        |i, qa| {
            if !traceable(qa) {
                return ItemOutcome::Skipped;
            }
            match builder
                .build(qa, Some(i as u64 + 1))
                .and_then(|record| Ok(serde_json::to_string(&record)?))
            {
                Ok(line) => ItemOutcome::Line(line),
                Err(e) => failed_outcome(&qa.qa_id, &e),
            }
        },
    )?;
    check_wipeout(&manifest)?;
    print_summary(json!({
        "stage": "retrieve",
        "lang": lang,
        "total": manifest.total,
        "done": manifest.done,
        "failed": manifest.failed,
        "skipped": manifest.skipped,
        "out": out,
    }));
    Ok(())
}

pub fn generate_traces(ctx: &StageCtx) -> CmdResult {
    ctx.ensure_work_dir()?;
    let lang = ctx.lang_or(Lang::En);
    let items_path = ctx.stage_input.clone().unwrap_or_else(|| ctx.config.items(lang));
    let items = read_items(&items_path, ctx.limit)?;
    let contexts_path = ctx.config.contexts(lang);
    require(&contexts_path)?;
    let contexts: HashMap<String, ContextRecord> = jsonl::read_jsonl::<ContextRecord>(&contexts_path)?
        .into_iter()
        .map(|c| (c.qa_id.clone(), c))
        .collect();
    let gateway = ctx.gateway()?;
    let out = ctx.out.clone().unwrap_or_else(|| ctx.config.traces(lang));
    let manifest = run_stage(
        "generate-traces",
        &items,
        &out,
        &ctx.config.stage_manifest("generate-traces", lang),
        ctx.stage_options(),
        |i, qa| {
            if !traceable(qa) {
                return ItemOutcome::Skipped;
            }
            let Some(context) = contexts.get(&qa.qa_id) else {
                return ItemOutcome::Failed {
                    id: qa.qa_id.clone(),
                    message: "no context for item; run retrieve first".into(),
                    backend_fault: false,
                };
            };
            match generate_trace(qa, &context.context, &gateway, Some(i as u64 + 1)) {
                Ok(trace) => {
                    let row = TraceRow::from(&trace);
                    match serde_json::to_string(&row) {
                        Ok(line) => ItemOutcome::Line(line),
                        Err(e) => failed_outcome(&qa.qa_id, &Error::Json(e)),
                    }
                }
                Err(e) => failed_outcome(&qa.qa_id, &e),
            }
        },
    )?;
    check_wipeout(&manifest)?;
    print_summary(json!({
        "stage": "generate-traces",
        "lang": lang,
        "total": manifest.total,
        "done": manifest.done,
        "failed": manifest.failed,
        "skipped": manifest.skipped,
        "out": out,
    }));
    Ok(())
}

pub fn verify(ctx: &StageCtx) -> CmdResult {
    ctx.ensure_work_dir()?;
    let lang = ctx.lang_or(Lang::En);
    let traces_path = ctx.stage_input.clone().unwrap_or_else(|| ctx.config.traces(lang));
    require(&traces_path)?;
    let traces: Vec<TraceRow> = jsonl::read_jsonl(&traces_path)?;
    let (kept, report) = verify_and_filter(traces);
    let out = ctx.out.clone().unwrap_or_else(|| ctx.config.kept_traces(lang));
    jsonl::write_jsonl(&out, &kept)?;
    jsonl::write_json(&ctx.config.verify_report(lang), &report)?;
    print_summary(json!({
        "stage": "verify",
        "lang": lang,
        "total": report.total,
        "kept": report.kept,
        "discard_rate": report.discard_rate,
        "out": out,
    }));
    Ok(())
}

pub fn assemble(ctx: &StageCtx) -> CmdResult {
    ctx.ensure_work_dir()?;
    let lang = ctx.lang_or(Lang::En);
    let kept_path = ctx.stage_input.clone().unwrap_or_else(|| ctx.config.kept_traces(lang));
    require(&kept_path)?;
    let items = read_items(&ctx.config.items(lang), None)?;
    let kept: Vec<TraceRow> = jsonl::read_jsonl(&kept_path)?;
    let (records, counts) = assemble_dataset(&kept, &items)?;
    let dataset_purity = purity(&records);
    let out = ctx.out.clone().unwrap_or_else(|| ctx.config.dataset(lang));
    jsonl::write_jsonl(&out, &records)?;
    jsonl::write_json(&ctx.config.dataset_counts(lang), &counts)?;
    print_summary(json!({
        "stage": "assemble",
        "lang": lang,
        "records": records.len(),
        "counts": counts,
        "purity": dataset_purity,
        "out": out,
    }));
    Ok(())
}

pub fn export_training_cmd(ctx: &StageCtx, ids_path: Option<&Path>) -> CmdResult {
    ctx.ensure_work_dir()?;
    let lang = ctx.lang_or(Lang::En);
    let dataset_path = ctx.stage_input.clone().unwrap_or_else(|| ctx.config.dataset(lang));
    require(&dataset_path)?;
    let records: Vec<medtrace_core::pipeline::TraceRecord> = jsonl::read_jsonl(&dataset_path)?;
    let ids: Option<Vec<String>> = match ids_path {
        Some(path) => {
            require(path)?;
            Some(
                std::fs::read_to_string(path)
                    .map_err(|e| CmdError::Other(e.to_string()))?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(str::to_string)
                    .collect(),
            )
        }
        None => None,
    };
    let rendered = export_training(&records, ids.as_deref())?;
    let out = ctx.out.clone().unwrap_or_else(|| ctx.config.training_export(lang));
    // One JSON-encoded string per line: records embed newlines, so raw
    // one-record-per-line text would not be parseable.
    jsonl::write_jsonl(&out, &rendered)?;
    print_summary(json!({
        "stage": "export-training",
        "lang": lang,
        "records": rendered.len(),
        "out": out,
    }));
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate / report / stats
// ---------------------------------------------------------------------------

pub fn evaluate(ctx: &StageCtx, mode: EvalMode, source: Option<Source>) -> CmdResult {
    ctx.ensure_work_dir()?;
    let lang = ctx.lang_or(Lang::En);
    let items_path = ctx.stage_input.clone().unwrap_or_else(|| ctx.config.items(lang));
    let all_items = read_items(&items_path, None)?;

    let mut test_items: Vec<QAItem> = all_items
        .iter()
        .filter(|i| i.split == Split::Test && source.is_none_or(|s| i.source == s))
        .cloned()
        .collect();
    if let Some(limit) = ctx.limit {
        test_items.truncate(limit);
    }
    if test_items.is_empty() {
        return Err(CmdError::Other("no test items to evaluate".into()));
    }
    let train_items: Vec<QAItem> = all_items
        .iter()
        .filter(|i| i.split == Split::Train)
        .cloned()
        .collect();

    // Traces back the shot pool in BOTH modes when available, so baseline
    // and traced runs share the exact same candidate set.
    let kept_path = ctx.config.kept_traces(lang);
    let traces: Option<HashMap<String, String>> = if kept_path.exists() {
        let kept: Vec<TraceRow> = jsonl::read_jsonl(&kept_path)?;
        Some(
            kept.into_iter()
                .map(|t| (t.qa_id, t.trace_text))
                .collect(),
        )
    } else if mode == EvalMode::Traced {
        return Err(CmdError::MissingInput(format!(
            "traced mode needs verified traces at {}",
            kept_path.display()
        )));
    } else {
        None
    };

    let embedder = ctx.embedder()?;
    let gateway = ctx.gateway()?;

    // Shot-pool policy: MedQA/MedMCQA test items draw from their own
    // train split; MedExpQA (which has no train split) draws from the
    // combined same-language pool.
    let mut groups: BTreeMap<Source, Vec<QAItem>> = BTreeMap::new();
    for item in test_items {
        groups.entry(item.source).or_default().push(item);
    }
    let mut outcomes: Vec<EvalOutcome> = Vec::new();
    let mut failed: Vec<(String, String)> = Vec::new();
    for (group_source, group_items) in groups {
        let pool_items: Vec<QAItem> = match group_source {
            Source::MedExpQA => train_items.clone(),
            same => train_items
                .iter()
                .filter(|i| i.source == same)
                .cloned()
                .collect(),
        };
        if pool_items.is_empty() {
            return Err(CmdError::Other(format!(
                "no train items available as shots for {group_source}"
            )));
        }
        let pool = ShotPool::build(pool_items, &embedder, traces.clone())?;
        if pool.is_empty() {
            return Err(CmdError::Other(format!(
                "shot pool for {group_source} is empty after trace filtering"
            )));
        }
        let run = run_eval(
            &group_items,
            mode,
            &pool,
            &embedder,
            &gateway,
            ctx.config.shot_count,
            ctx.config.concurrency,
        )?;
        outcomes.extend(run.outcomes);
        failed.extend(run.failed);
    }
    outcomes.sort_by(|a, b| a.qa_id.cmp(&b.qa_id));
    if outcomes.is_empty() && !failed.is_empty() {
        return Err(CmdError::Backend(format!(
            "evaluate: all {} items failed; backend unreachable",
            failed.len()
        )));
    }

    let mode_name = mode.to_string();
    let out = ctx
        .out
        .clone()
        .unwrap_or_else(|| ctx.config.outcomes(&mode_name, lang));
    jsonl::write_jsonl(&out, &outcomes)?;
    jsonl::write_json(
        &ctx.config
            .stage_manifest(&format!("evaluate-{mode_name}"), lang),
        &json!({
            "stage": format!("evaluate-{mode_name}"),
            "total": outcomes.len() + failed.len(),
            "done": outcomes.len(),
            "failed": failed.len(),
            "failed_ids": failed,
        }),
    )?;

    let table = aggregate(&outcomes, failed.len() as u64)?;
    print_summary(json!({
        "stage": "evaluate",
        "mode": mode_name,
        "lang": lang,
        "model": table.model,
        "items": outcomes.len(),
        "failed": failed.len(),
        "accuracy": table.macro_average(),
        "out": out,
    }));
    Ok(())
}

pub fn report(ctx: &StageCtx) -> CmdResult {
    ctx.ensure_work_dir()?;
    let mut baseline_all: Vec<EvalOutcome> = Vec::new();
    let mut traced_all: Vec<EvalOutcome> = Vec::new();
    for &lang in &ctx.config.languages {
        let baseline_path = ctx.config.outcomes("baseline", lang);
        let traced_path = ctx.config.outcomes("traced", lang);
        if baseline_path.exists() && traced_path.exists() {
            baseline_all.extend(jsonl::read_jsonl::<EvalOutcome>(&baseline_path)?);
            traced_all.extend(jsonl::read_jsonl::<EvalOutcome>(&traced_path)?);
        }
    }
    if baseline_all.is_empty() {
        return Err(CmdError::MissingInput(
            "no (baseline, traced) outcome pairs found; run evaluate first".into(),
        ));
    }

    let models: Vec<String> = {
        let mut names: Vec<String> = baseline_all.iter().map(|o| o.model.clone()).collect();
        names.sort();
        names.dedup();
        names
    };

    let table_for = |outcomes: &[EvalOutcome], model: &str| -> CmdResult<AccuracyTable> {
        let subset: Vec<EvalOutcome> = outcomes
            .iter()
            .filter(|o| o.model == model)
            .cloned()
            .collect();
        Ok(aggregate(&subset, 0)?)
    };

    // Per-model mean deltas feed the cross-model t-test.
    let mut mean_deltas = Vec::with_capacity(models.len());
    let mut tables = Vec::with_capacity(models.len());
    for model in &models {
        let baseline = table_for(&baseline_all, model)?;
        let treated = table_for(&traced_all, model)?;
        let probe = delta_report(&baseline, &treated, &[])?;
        mean_deltas.push(probe.mean_delta.unwrap_or(0.0));
        tables.push((baseline, treated));
    }
    let mut reports: Vec<DeltaReport> = Vec::with_capacity(models.len());
    for (baseline, treated) in &tables {
        reports.push(delta_report(baseline, treated, &mean_deltas)?);
    }

    let mut corrections = BTreeMap::new();
    for model in &models {
        let baseline: Vec<EvalOutcome> = baseline_all
            .iter()
            .filter(|o| &o.model == model)
            .cloned()
            .collect();
        let traced: Vec<EvalOutcome> = traced_all
            .iter()
            .filter(|o| &o.model == model)
            .cloned()
            .collect();
        if baseline.len() == traced.len() {
            corrections.insert(model.clone(), correction_analysis(&baseline, &traced)?);
        }
    }

    let base = ctx.config.report_base();
    let json_path = base.with_extension("json");
    let text_path = base.with_extension("txt");
    let csv_path = base.with_extension("csv");
    jsonl::write_json(
        &json_path,
        &json!({ "models": reports, "corrections": corrections }),
    )?;
    std::fs::write(&text_path, render_text_table(&reports))
        .map_err(|e| CmdError::Other(e.to_string()))?;
    std::fs::write(&csv_path, render_csv(&reports))
        .map_err(|e| CmdError::Other(e.to_string()))?;

    print!("{}", render_text_table(&reports));
    print_summary(json!({
        "stage": "report",
        "models": models,
        "out": {"json": json_path, "text": text_path, "csv": csv_path},
    }));
    Ok(())
}

pub fn stats(ctx: &StageCtx) -> CmdResult {
    let path = ctx
        .stage_input
        .clone()
        .unwrap_or_else(|| ctx.config.corpus_stats());
    require(&path)?;
    let stats: CorpusStats = jsonl::read_json(&path)?;
    let row = |lang: Lang| {
        let cell = |m: &BTreeMap<Lang, corpus::StageCount>| {
            m.get(&lang)
                .map(|c| format!("{} ({:.3}M)", c.pages, c.word_count_millions()))
                .unwrap_or_else(|| "-".into())
        };
        format!(
            "{:<4}{:>22}{:>22}{:>22}",
            lang.code(),
            cell(&stats.source),
            cell(&stats.deduplicated),
            cell(&stats.all_languages)
        )
    };
    println!(
        "{:<4}{:>22}{:>22}{:>22}",
        "", "source", "de-duplicated", "all-languages"
    );
    for lang in Lang::ALL {
        println!("{}", row(lang));
    }
    print_summary(json!({
        "stage": "stats",
        "monotonic": stats.is_monotonic(),
        "stats": stats,
    }));
    Ok(())
}
