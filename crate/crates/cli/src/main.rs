//! `medtrace` — command-line orchestration for the knowledge-base,
//! trace-generation, and evaluation pipeline.

mod config;
mod stages;

use clap::{Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

use medtrace_core::gateway::EvalMode;
use medtrace_core::{Lang, Source};

use config::PipelineConfig;
use stages::{CmdError, CmdResult, StageCtx};

#[derive(Parser)]
#[command(name = "medtrace", version, about = "Multilingual medical KB + reasoning-trace pipeline")]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true, default_value = "medtrace.json")]
    config: PathBuf,

    /// Language a stage operates on (en, it, es).
    #[arg(long, global = true)]
    lang: Option<String>,

    /// Override the stage's default input artifact.
    #[arg(long, global = true)]
    stage_input: Option<PathBuf>,

    /// Override the stage's default output artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Chat-backend override: `mock:<POLICY>` (ECHO, GOLD_TRACE,
    /// WRONG_TRACE=<p>, FIXED_ANSWER=<id>) or `http[:<base_url>]`.
    #[arg(long, global = true)]
    backend: Option<String>,

    /// Desk-scale truncation of the stage input.
    #[arg(long, global = true)]
    limit: Option<usize>,

    /// Resume an interrupted stage from its manifest.
    #[arg(long, global = true)]
    resume: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw page dumps, de-duplicate, align languages, filter.
    Ingest,
    /// Chunk aligned pages into per-language knowledge bases.
    BuildKb,
    /// Embed a knowledge base into a vector index.
    EmbedKb,
    /// Translate the English QA items into --lang.
    Translate,
    /// Back-translate a translated dataset and score it.
    BacktranslateScore,
    /// Retrieve top-k chunks per item and rewrite them into contexts.
    Retrieve,
    /// Generate reasoning traces from items and contexts.
    GenerateTraces,
    /// Keep verified traces and report the discard rate.
    Verify,
    /// Join kept traces with their items into the dataset.
    Assemble,
    /// Render the dataset in the training format.
    ExportTraining {
        /// Restrict the export to an externally supplied qa_id list.
        #[arg(long)]
        ids: Option<PathBuf>,
    },
    /// Run the few-shot evaluation.
    Evaluate {
        /// baseline or traced.
        #[arg(long)]
        mode: String,
        /// Restrict to one dataset (MedQA, MedMCQA, MedExpQA).
        #[arg(long)]
        source: Option<String>,
    },
    /// Build accuracy/delta/correction reports from eval outcomes.
    Report,
    /// Render corpus statistics.
    Stats,
}

fn run(cli: Cli) -> CmdResult {
    let config = PipelineConfig::load(&cli.config).map_err(|e| {
        if cli.config.exists() {
            CmdError::Other(format!("{e:#}"))
        } else {
            CmdError::MissingInput(format!("config {} does not exist", cli.config.display()))
        }
    })?;
    let lang = match &cli.lang {
        Some(code) => Some(
            code.parse::<Lang>()
                .map_err(|e| CmdError::Other(e.to_string()))?,
        ),
        None => None,
    };
    let ctx = StageCtx {
        config,
        lang,
        stage_input: cli.stage_input,
        out: cli.out,
        backend: cli.backend,
        limit: cli.limit,
        resume: cli.resume,
    };
    match cli.command {
        Command::Ingest => stages::ingest(&ctx),
        Command::BuildKb => stages::build_kb_cmd(&ctx),
        Command::EmbedKb => stages::embed_kb(&ctx),
        Command::Translate => stages::translate(&ctx),
        Command::BacktranslateScore => stages::backtranslate_score(&ctx),
        Command::Retrieve => stages::retrieve(&ctx),
        Command::GenerateTraces => stages::generate_traces(&ctx),
        Command::Verify => stages::verify(&ctx),
        Command::Assemble => stages::assemble(&ctx),
        Command::ExportTraining { ids } => stages::export_training_cmd(&ctx, ids.as_deref()),
        Command::Evaluate { mode, source } => {
            let mode: EvalMode = mode.parse().map_err(|e: medtrace_core::Error| {
                CmdError::Other(e.to_string())
            })?;
            let source = match source {
                Some(s) => Some(
                    s.parse::<Source>()
                        .map_err(|e| CmdError::Other(e.to_string()))?,
                ),
                None => None,
            };
            stages::evaluate(&ctx, mode, source)
        }
        Command::Report => stages::report(&ctx),
        Command::Stats => stages::stats(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                json!({"error": e.message(), "kind": e.kind(), "exit": e.exit_code()})
            );
            ExitCode::from(e.exit_code())
        }
    }
}
