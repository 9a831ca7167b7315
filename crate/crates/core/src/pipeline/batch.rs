//! Resumable batch execution over JSONL stage artifacts.
//!
//! A stage maps an ordered item list onto output lines. Items run in
//! parallel inside fixed-size flush windows; after each window the output
//! and manifest are rewritten atomically, so an interrupted stage resumes
//! from the last flushed window without duplicating outputs. Output lines
//! land in item order regardless of completion order, which makes re-runs
//! byte-identical under deterministic backends.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::jsonl;
use crate::util::parallel_map_ordered;

/// Per-stage progress record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub stage: String,
    pub total: u64,
    pub done: u64,
    pub failed: u64,
    pub skipped: u64,
    /// Items processed from the front of the list; resume starts here.
    pub cursor: u64,
    /// Failures whose root cause was an exhausted backend retry budget.
    #[serde(default)]
    pub backend_faults: u64,
    #[serde(default)]
    pub failed_ids: Vec<String>,
}

impl BatchManifest {
    fn new(stage: &str, total: u64) -> Self {
        BatchManifest {
            stage: stage.to_string(),
            total,
            done: 0,
            failed: 0,
            skipped: 0,
            cursor: 0,
            backend_faults: 0,
            failed_ids: Vec::new(),
        }
    }
}

/// Result of processing one item.
pub enum ItemOutcome {
    /// Serialized output line.
    Line(String),
    /// Outside the stage's contract (for example a split it does not
    /// touch); counted but not an error.
    Skipped,
    /// Item-level failure; recorded for re-driving, never aborts the batch.
    /// `backend_fault` marks failures caused by an exhausted retry budget.
    Failed {
        id: String,
        message: String,
        backend_fault: bool,
    },
}

/// How a stage runs: parallelism plus flush window.
#[derive(Debug, Clone, Copy)]
pub struct StageOptions {
    pub concurrency: usize,
    /// Items per flush window; output and manifest are persisted after
    /// each window.
    pub flush_every: usize,
    pub resume: bool,
}

impl Default for StageOptions {
    fn default() -> Self {
        StageOptions {
            concurrency: 8,
            flush_every: 32,
            resume: false,
        }
    }
}

/// Runs a stage over `items`, writing `out_path` (JSONL) and
/// `manifest_path` (JSON). Returns the final manifest.
pub fn run_stage<T, F>(
    stage: &str,
    items: &[T],
    out_path: &Path,
    manifest_path: &Path,
    options: StageOptions,
    f: F,
) -> Result<BatchManifest>
where
    T: Sync,
    F: Fn(usize, &T) -> ItemOutcome + Sync,
{
    let total = items.len() as u64;
    let (mut manifest, mut lines) = if options.resume && manifest_path.exists() {
        let manifest: BatchManifest = jsonl::read_json(manifest_path)?;
        if manifest.stage != stage {
            return Err(Error::Input(format!(
                "manifest at {} belongs to stage {:?}, not {stage:?}",
                manifest_path.display(),
                manifest.stage
            )));
        }
        if manifest.total != total {
            return Err(Error::Input(format!(
                "manifest expects {} items but the stage input has {total}; \
                 rerun without --resume",
                manifest.total
            )));
        }
        // Keep the original bytes: re-serializing through a generic JSON
        // value would reorder keys and break byte-identical resumes.
        let lines: Vec<String> = if out_path.exists() {
            let mut lines = Vec::new();
            for line in std::fs::read_to_string(out_path)?.lines() {
                if line.trim().is_empty() {
                    continue;
                }
                serde_json::from_str::<serde::de::IgnoredAny>(line)?;
                lines.push(line.to_string());
            }
            lines
        } else {
            Vec::new()
        };
        if lines.len() as u64 != manifest.done {
            return Err(Error::Input(format!(
                "output at {} has {} lines but the manifest recorded {} done items; \
                 rerun without --resume",
                out_path.display(),
                lines.len(),
                manifest.done
            )));
        }
        (manifest, lines)
    } else {
        (BatchManifest::new(stage, total), Vec::new())
    };

    let flush_every = options.flush_every.max(1);
    let mut cursor = manifest.cursor as usize;
    while cursor < items.len() {
        let end = (cursor + flush_every).min(items.len());
        let window = &items[cursor..end];
        let outcomes = parallel_map_ordered(window, options.concurrency, |offset, item| {
            f(cursor + offset, item)
        });
        for outcome in outcomes {
            match outcome {
                ItemOutcome::Line(line) => {
                    manifest.done += 1;
                    lines.push(line);
                }
                ItemOutcome::Skipped => manifest.skipped += 1,
                ItemOutcome::Failed {
                    id,
                    message,
                    backend_fault,
                } => {
                    log::warn!("{stage}: item {id} failed: {message}");
                    manifest.failed += 1;
                    if backend_fault {
                        manifest.backend_faults += 1;
                    }
                    manifest.failed_ids.push(id);
                }
            }
        }
        cursor = end;
        manifest.cursor = cursor as u64;
        jsonl::write_lines(out_path, &lines)?;
        jsonl::write_json(manifest_path, &manifest)?;
    }

    // An already-complete resume still needs its artifacts on disk.
    jsonl::write_lines(out_path, &lines)?;
    jsonl::write_json(manifest_path, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn paths(dir: &tempfile::TempDir) -> (std::path::PathBuf, std::path::PathBuf) {
        (
            dir.path().join("out.jsonl"),
            dir.path().join("manifest.json"),
        )
    }

    fn line_for(i: usize, item: &u32) -> ItemOutcome {
        ItemOutcome::Line(format!("{{\"i\":{i},\"v\":{item}}}"))
    }

    #[test]
    fn fresh_run_writes_all_lines_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let (out, manifest_path) = paths(&dir);
        let items: Vec<u32> = (0..25).collect();
        let manifest = run_stage(
            "demo",
            &items,
            &out,
            &manifest_path,
            StageOptions {
                concurrency: 4,
                flush_every: 7,
                resume: false,
            },
            line_for,
        )
        .unwrap();
        assert_eq!(manifest.done, 25);
        assert_eq!(manifest.cursor, 25);
        let content = fs::read_to_string(&out).unwrap();
        let expected: String = (0..25)
            .map(|i| format!("{{\"i\":{i},\"v\":{i}}}\n"))
            .collect();
        assert_eq!(content, expected);
    }

    #[test]
    fn output_bytes_do_not_depend_on_flush_or_concurrency() {
        let items: Vec<u32> = (0..40).collect();
        let mut outputs = Vec::new();
        for (concurrency, flush) in [(1, 1), (8, 3), (4, 100)] {
            let dir = tempfile::tempdir().unwrap();
            let (out, manifest_path) = paths(&dir);
            run_stage(
                "demo",
                &items,
                &out,
                &manifest_path,
                StageOptions {
                    concurrency,
                    flush_every: flush,
                    resume: false,
                },
                line_for,
            )
            .unwrap();
            outputs.push(fs::read_to_string(&out).unwrap());
        }
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[1], outputs[2]);
    }

    #[test]
    fn failures_are_counted_and_do_not_abort() {
        let dir = tempfile::tempdir().unwrap();
        let (out, manifest_path) = paths(&dir);
        let items: Vec<u32> = (0..10).collect();
        let manifest = run_stage(
            "demo",
            &items,
            &out,
            &manifest_path,
            StageOptions::default(),
            |i, item| {
                if item % 3 == 0 {
                    ItemOutcome::Failed {
                        id: format!("item-{i}"),
                        message: "boom".into(),
                        backend_fault: i % 2 == 0,
                    }
                } else {
                    line_for(i, item)
                }
            },
        )
        .unwrap();
        assert_eq!(manifest.failed, 4);
        assert_eq!(manifest.done, 6);
        assert_eq!(manifest.failed_ids.len(), 4);
        assert_eq!(manifest.backend_faults, 2);
        assert!(manifest.done + manifest.failed + manifest.skipped <= manifest.total);
    }

    #[test]
    fn resume_after_interruption_matches_uninterrupted_run() {
        let items: Vec<u32> = (0..30).collect();

        // Uninterrupted reference run.
        let reference_dir = tempfile::tempdir().unwrap();
        let (ref_out, ref_manifest) = paths(&reference_dir);
        run_stage(
            "demo",
            &items,
            &ref_out,
            &ref_manifest,
            StageOptions {
                concurrency: 4,
                flush_every: 10,
                resume: false,
            },
            line_for,
        )
        .unwrap();

        // Interrupted run: panic inside the second flush window, after the
        // first window landed on disk.
        let dir = tempfile::tempdir().unwrap();
        let (out, manifest_path) = paths(&dir);
        let calls = AtomicUsize::new(0);
        let interrupted = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            run_stage(
                "demo",
                &items,
                &out,
                &manifest_path,
                StageOptions {
                    concurrency: 1,
                    flush_every: 10,
                    resume: false,
                },
                |i, item| {
                    if calls.fetch_add(1, Ordering::SeqCst) == 14 {
                        panic!("interrupt");
                    }
                    line_for(i, item)
                },
            )
        }));
        assert!(interrupted.is_err());
        let partial: BatchManifest = jsonl::read_json(&manifest_path).unwrap();
        assert_eq!(partial.cursor, 10);

        let resumed = run_stage(
            "demo",
            &items,
            &out,
            &manifest_path,
            StageOptions {
                concurrency: 4,
                flush_every: 10,
                resume: true,
            },
            line_for,
        )
        .unwrap();
        assert_eq!(resumed.done, 30);
        assert_eq!(
            fs::read_to_string(&out).unwrap(),
            fs::read_to_string(&ref_out).unwrap()
        );
    }

    #[test]
    fn resume_rejects_mismatched_stage_or_total() {
        let dir = tempfile::tempdir().unwrap();
        let (out, manifest_path) = paths(&dir);
        let items: Vec<u32> = (0..5).collect();
        run_stage(
            "demo",
            &items,
            &out,
            &manifest_path,
            StageOptions::default(),
            line_for,
        )
        .unwrap();

        let resume = StageOptions {
            resume: true,
            ..StageOptions::default()
        };
        assert!(run_stage("other", &items, &out, &manifest_path, resume, line_for).is_err());
        let shorter: Vec<u32> = (0..3).collect();
        assert!(run_stage("demo", &shorter, &out, &manifest_path, resume, line_for).is_err());
    }
}
