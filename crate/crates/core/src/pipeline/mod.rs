//! Stage orchestration: dataset splits, translation, context building,
//! trace generation, verification, dataset assembly, and training export.

pub mod assemble;
pub mod batch;
pub mod context;
pub mod extract;
pub mod splits;
pub mod trace;
pub mod translate;

pub use assemble::{
    assemble_dataset, export_training, parse_training_record, purity, render_training_record,
    DatasetCounts, TraceRecord,
};
pub use batch::{run_stage, BatchManifest, ItemOutcome, StageOptions};
pub use context::{ContextBuilder, ContextRecord};
pub use extract::{conclusion_header, extract_answer};
pub use splits::{apply_splits, RawQAItem};
pub use trace::{generate_trace, verify_and_filter, ReasoningTrace, TraceRow, VerifyReport};
pub use translate::{
    back_translate_and_score, original_qa_id, translate_item, FieldScores, ScoreReport,
};
