//! Accuracy tables, baseline-vs-treatment deltas with the t-test, the
//! correction-rate analysis, and the plain-text/CSV renderers.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::eval::EvalOutcome;
use crate::gateway::EvalMode;
use crate::lang::Lang;
use crate::metrics::{one_sample_t_test, two_proportion_z_test, StatResult};
use crate::qa::Source;

/// One accuracy cell: exact counts, accuracy derived on demand.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub correct: u64,
    pub total: u64,
}

impl AccuracyCell {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Accuracy per (dataset, language) for one (model, mode) run. Cells with
/// no items are absent, not zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub model: String,
    pub mode: EvalMode,
    pub cells: BTreeMap<Source, BTreeMap<Lang, AccuracyCell>>,
    /// Items excluded from the denominators because their backend call
    /// failed.
    pub failed: u64,
}

impl AccuracyTable {
    pub fn cell(&self, source: Source, lang: Lang) -> Option<AccuracyCell> {
        self.cells.get(&source)?.get(&lang).copied()
    }

    /// Macro average over present cells.
    pub fn macro_average(&self) -> Option<f64> {
        let accs: Vec<f64> = self
            .cells
            .values()
            .flat_map(|row| row.values())
            .map(AccuracyCell::accuracy)
            .collect();
        if accs.is_empty() {
            None
        } else {
            Some(accs.iter().sum::<f64>() / accs.len() as f64)
        }
    }
}

/// Aggregates outcomes of one (model, mode) run into the accuracy table.
pub fn aggregate(outcomes: &[EvalOutcome], failed: u64) -> Result<AccuracyTable> {
    let (model, mode) = match outcomes.first() {
        Some(first) => (first.model.clone(), first.mode),
        None => {
            return Err(Error::Input(
                "cannot aggregate an empty outcome list".into(),
            ))
        }
    };
    let mut cells: BTreeMap<Source, BTreeMap<Lang, AccuracyCell>> = BTreeMap::new();
    for outcome in outcomes {
        if outcome.model != model || outcome.mode != mode {
            return Err(Error::Input(
                "aggregate expects outcomes from a single (model, mode) run".into(),
            ));
        }
        let cell = cells
            .entry(outcome.source)
            .or_default()
            .entry(outcome.lang)
            .or_default();
        cell.total += 1;
        if outcome.correct {
            cell.correct += 1;
        }
    }
    Ok(AccuracyTable {
        model,
        mode,
        cells,
        failed,
    })
}

/// One cell of the delta report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaCell {
    pub baseline: f64,
    pub treatment: f64,
    pub delta: f64,
}

/// Cellwise deltas plus the significance test over per-model mean deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub model: String,
    pub cells: BTreeMap<Source, BTreeMap<Lang, DeltaCell>>,
    pub baseline_macro: Option<f64>,
    pub treatment_macro: Option<f64>,
    pub mean_delta: Option<f64>,
    /// One-sample t over the provided per-model mean deltas; absent when
    /// the sample is degenerate (fewer than two models or zero variance).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_test: Option<StatResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_test_note: Option<String>,
}

/// Builds the delta report for one model from its baseline and treatment
/// tables; `per_model_deltas` carries the mean delta of every evaluated
/// model for the cross-model t-test.
pub fn delta_report(
    baseline: &AccuracyTable,
    treatment: &AccuracyTable,
    per_model_deltas: &[f64],
) -> Result<DeltaReport> {
    let structure = |t: &AccuracyTable| -> Vec<(Source, Lang)> {
        t.cells
            .iter()
            .flat_map(|(s, row)| row.keys().map(move |l| (*s, *l)))
            .collect()
    };
    if structure(baseline) != structure(treatment) {
        return Err(Error::Input(
            "baseline and treatment tables have different cell structures".into(),
        ));
    }

    let mut cells: BTreeMap<Source, BTreeMap<Lang, DeltaCell>> = BTreeMap::new();
    let mut deltas = Vec::new();
    for (source, row) in &baseline.cells {
        for (lang, base_cell) in row {
            let treat_cell = treatment.cell(*source, *lang).unwrap();
            let b = base_cell.accuracy();
            let t = treat_cell.accuracy();
            deltas.push(t - b);
            cells.entry(*source).or_default().insert(
                *lang,
                DeltaCell {
                    baseline: b,
                    treatment: t,
                    delta: t - b,
                },
            );
        }
    }
    let mean_delta = if deltas.is_empty() {
        None
    } else {
        Some(deltas.iter().sum::<f64>() / deltas.len() as f64)
    };

    let (t_test, t_test_note) = match one_sample_t_test(per_model_deltas) {
        Ok(result) => (Some(result), None),
        Err(Error::Degenerate(_)) => (
            None,
            Some("no effect: per-model deltas have zero variance".to_string()),
        ),
        Err(Error::Input(_)) => (
            None,
            Some("t-test needs at least two per-model deltas".to_string()),
        ),
        Err(e) => return Err(e),
    };

    Ok(DeltaReport {
        model: baseline.model.clone(),
        cells,
        baseline_macro: baseline.macro_average(),
        treatment_macro: treatment.macro_average(),
        mean_delta,
        t_test,
        t_test_note,
    })
}

/// Correction counts within one group: baseline errors and how many the
/// improved run fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRate {
    pub corrected: u64,
    pub errors: u64,
}

impl CorrectionRate {
    pub fn rate(&self) -> f64 {
        self.corrected as f64 / self.errors as f64
    }
}

/// Correction-rate analysis between a baseline run and an improved run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub overall: Option<CorrectionRate>,
    pub per_lang: BTreeMap<Lang, CorrectionRate>,
    /// MedQA + MedMCQA.
    pub in_domain: Option<CorrectionRate>,
    /// MedExpQA.
    pub out_of_domain: Option<CorrectionRate>,
    /// Two-proportion z between the domain groups, when both have errors
    /// and the pooled proportion is not degenerate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain_z_test: Option<StatResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn in_domain(source: Source) -> bool {
    matches!(source, Source::MedQA | Source::MedMCQA)
}

/// Among items the baseline got wrong, the fraction the improved run got
/// right, per language and per domain group. Groups with zero baseline
/// errors are reported as absent.
pub fn correction_analysis(
    baseline: &[EvalOutcome],
    improved: &[EvalOutcome],
) -> Result<CorrectionReport> {
    let improved_by_id: HashMap<&str, &EvalOutcome> =
        improved.iter().map(|o| (o.qa_id.as_str(), o)).collect();
    if baseline.len() != improved.len() {
        return Err(Error::Input(format!(
            "correction analysis needs the same item sets: {} baseline vs {} improved",
            baseline.len(),
            improved.len()
        )));
    }

    let mut overall = CorrectionRate {
        corrected: 0,
        errors: 0,
    };
    let mut per_lang: BTreeMap<Lang, CorrectionRate> = BTreeMap::new();
    let mut in_group = CorrectionRate {
        corrected: 0,
        errors: 0,
    };
    let mut out_group = CorrectionRate {
        corrected: 0,
        errors: 0,
    };

    for base in baseline {
        let improved = improved_by_id.get(base.qa_id.as_str()).ok_or_else(|| {
            Error::Input(format!("item {} is missing from the improved run", base.qa_id))
        })?;
        if base.correct {
            continue;
        }
        let fixed = improved.correct as u64;
        overall.errors += 1;
        overall.corrected += fixed;
        let lang_rate = per_lang.entry(base.lang).or_insert(CorrectionRate {
            corrected: 0,
            errors: 0,
        });
        lang_rate.errors += 1;
        lang_rate.corrected += fixed;
        let group = if in_domain(base.source) {
            &mut in_group
        } else {
            &mut out_group
        };
        group.errors += 1;
        group.corrected += fixed;
    }

    let present = |r: CorrectionRate| (r.errors > 0).then_some(r);
    let (domain_z_test, note) = if in_group.errors > 0 && out_group.errors > 0 {
        match two_proportion_z_test(
            in_group.corrected,
            in_group.errors,
            out_group.corrected,
            out_group.errors,
        ) {
            Ok(result) => (Some(result), None),
            Err(Error::Degenerate(message)) => (None, Some(message)),
            Err(e) => return Err(e),
        }
    } else {
        (
            None,
            Some("a domain group has no baseline errors; z-test not applicable".to_string()),
        )
    };

    Ok(CorrectionReport {
        overall: present(overall),
        per_lang,
        in_domain: present(in_group),
        out_of_domain: present(out_group),
        domain_z_test,
        note,
    })
}

const LANG_ORDER: [Lang; 3] = [Lang::It, Lang::En, Lang::Es];
const SOURCE_ORDER: [Source; 3] = [Source::MedExpQA, Source::MedMCQA, Source::MedQA];

/// Renders delta reports as an aligned plain-text table in the
/// dataset-by-language layout, one row per model plus a macro `AVG d` row.
pub fn render_text_table(reports: &[DeltaReport]) -> String {
    let mut out = String::new();
    let header_cells: Vec<String> = SOURCE_ORDER
        .iter()
        .flat_map(|s| LANG_ORDER.iter().map(move |l| format!("{s}/{}", lang_code(*l))))
        .collect();
    out.push_str(&format!("{:<24}", "model"));
    for cell in &header_cells {
        out.push_str(&format!("{cell:>16}"));
    }
    out.push_str(&format!("{:>16}\n", "AVG"));

    for report in reports {
        out.push_str(&format!("{:<24}", report.model));
        for source in SOURCE_ORDER {
            for lang in LANG_ORDER {
                let text = report
                    .cells
                    .get(&source)
                    .and_then(|row| row.get(&lang))
                    .map(|c| format!("{:.1} {:+.1}", 100.0 * c.treatment, 100.0 * c.delta))
                    .unwrap_or_else(|| "-".to_string());
                out.push_str(&format!("{text:>16}"));
            }
        }
        let avg = match (report.treatment_macro, report.mean_delta) {
            (Some(t), Some(d)) => format!("{:.1} {:+.1}", 100.0 * t, 100.0 * d),
            _ => "-".to_string(),
        };
        out.push_str(&format!("{avg:>16}\n"));
    }

    // Macro-over-models delta row.
    out.push_str(&format!("{:<24}", "AVG d (macro/models)"));
    for source in SOURCE_ORDER {
        for lang in LANG_ORDER {
            let deltas: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.cells.get(&source).and_then(|row| row.get(&lang)))
                .map(|c| c.delta)
                .collect();
            let text = if deltas.is_empty() {
                "-".to_string()
            } else {
                format!("{:+.1}", 100.0 * deltas.iter().sum::<f64>() / deltas.len() as f64)
            };
            out.push_str(&format!("{text:>16}"));
        }
    }
    let overall: Vec<f64> = reports.iter().filter_map(|r| r.mean_delta).collect();
    let text = if overall.is_empty() {
        "-".to_string()
    } else {
        format!("{:+.1}", 100.0 * overall.iter().sum::<f64>() / overall.len() as f64)
    };
    out.push_str(&format!("{text:>16}\n"));
    out
}

/// CSV rendering: one row per (model, dataset, language) cell.
pub fn render_csv(reports: &[DeltaReport]) -> String {
    let mut out = String::from("model,dataset,lang,baseline,treatment,delta\n");
    for report in reports {
        for source in SOURCE_ORDER {
            for lang in LANG_ORDER {
                if let Some(cell) = report.cells.get(&source).and_then(|row| row.get(&lang)) {
                    out.push_str(&format!(
                        "{},{},{},{:.6},{:.6},{:+.6}\n",
                        report.model,
                        source,
                        lang_code(lang),
                        cell.baseline,
                        cell.treatment,
                        cell.delta
                    ));
                }
            }
        }
    }
    out
}

fn lang_code(lang: Lang) -> &'static str {
    match lang {
        Lang::It => "IT",
        Lang::En => "EN",
        Lang::Es => "ES",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(
        qa_id: &str,
        lang: Lang,
        source: Source,
        mode: EvalMode,
        correct: bool,
    ) -> EvalOutcome {
        EvalOutcome {
            qa_id: qa_id.into(),
            lang,
            source,
            mode,
            model: "m".into(),
            predicted: Some("1".into()),
            correct,
            shot_ids: vec![],
        }
    }

    fn run_of(corrects: &[(Lang, Source, bool)], mode: EvalMode) -> Vec<EvalOutcome> {
        corrects
            .iter()
            .enumerate()
            .map(|(i, (lang, source, ok))| {
                outcome(&format!("q{i}"), *lang, *source, mode, *ok)
            })
            .collect()
    }

    #[test]
    fn aggregate_counts_cells_and_macro_average() {
        let outcomes = run_of(
            &[
                (Lang::En, Source::MedQA, true),
                (Lang::En, Source::MedQA, false),
                (Lang::It, Source::MedMCQA, true),
            ],
            EvalMode::Baseline,
        );
        let table = aggregate(&outcomes, 1).unwrap();
        assert_eq!(
            table.cell(Source::MedQA, Lang::En).unwrap(),
            AccuracyCell {
                correct: 1,
                total: 2
            }
        );
        assert!(table.cell(Source::MedExpQA, Lang::Es).is_none());
        // Macro over two present cells: (0.5 + 1.0) / 2.
        assert!((table.macro_average().unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(table.failed, 1);
    }

    #[test]
    fn identical_tables_surface_no_effect() {
        let outcomes = run_of(
            &[
                (Lang::En, Source::MedQA, true),
                (Lang::En, Source::MedQA, false),
            ],
            EvalMode::Baseline,
        );
        let table = aggregate(&outcomes, 0).unwrap();
        let report = delta_report(&table, &table, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(report.mean_delta, Some(0.0));
        assert!(report.t_test.is_none());
        assert!(report.t_test_note.unwrap().contains("no effect"));
    }

    #[test]
    fn delta_cells_are_exact_differences() {
        let baseline = aggregate(
            &run_of(
                &[
                    (Lang::En, Source::MedQA, true),
                    (Lang::En, Source::MedQA, false),
                    (Lang::En, Source::MedQA, false),
                ],
                EvalMode::Baseline,
            ),
            0,
        )
        .unwrap();
        let treatment = aggregate(
            &run_of(
                &[
                    (Lang::En, Source::MedQA, true),
                    (Lang::En, Source::MedQA, true),
                    (Lang::En, Source::MedQA, false),
                ],
                EvalMode::Traced,
            ),
            0,
        )
        .unwrap();
        let report = delta_report(&baseline, &treatment, &[1.0, 2.0, 3.0]).unwrap();
        let cell = report.cells[&Source::MedQA][&Lang::En];
        assert_eq!(cell.delta, cell.treatment - cell.baseline);
        let t = report.t_test.unwrap();
        assert!((t.statistic - 3.4641016151377544).abs() < 1e-10);
    }

    #[test]
    fn mismatched_structures_are_input_errors() {
        let a = aggregate(
            &run_of(&[(Lang::En, Source::MedQA, true)], EvalMode::Baseline),
            0,
        )
        .unwrap();
        let b = aggregate(
            &run_of(&[(Lang::It, Source::MedQA, true)], EvalMode::Traced),
            0,
        )
        .unwrap();
        assert!(delta_report(&a, &b, &[]).is_err());
    }

    #[test]
    fn correction_rates_per_group() {
        // 20 baseline items, 8 wrong; improved fixes 4 of them.
        let mut baseline = Vec::new();
        let mut improved = Vec::new();
        for i in 0..20 {
            let wrong = i < 8;
            let source = if i % 2 == 0 {
                Source::MedQA
            } else {
                Source::MedExpQA
            };
            baseline.push(outcome(
                &format!("q{i}"),
                Lang::En,
                source,
                EvalMode::Baseline,
                !wrong,
            ));
            let fixed = wrong && i < 4;
            improved.push(outcome(
                &format!("q{i}"),
                Lang::En,
                source,
                EvalMode::Traced,
                !wrong || fixed,
            ));
        }
        let report = correction_analysis(&baseline, &improved).unwrap();
        let overall = report.overall.unwrap();
        assert_eq!(overall.errors, 8);
        assert_eq!(overall.corrected, 4);
        assert!((overall.rate() - 0.5).abs() < 1e-12);
        assert_eq!(report.in_domain.unwrap().errors, 4);
        assert_eq!(report.out_of_domain.unwrap().errors, 4);
        assert!(report.domain_z_test.is_some());
    }

    #[test]
    fn eight_of_twenty_errors_fixed_is_point_four() {
        let mut baseline = Vec::new();
        let mut improved = Vec::new();
        for i in 0..25 {
            let wrong = i < 20;
            let fixed = wrong && i < 8;
            baseline.push(outcome(
                &format!("q{i:02}"),
                Lang::En,
                Source::MedMCQA,
                EvalMode::Baseline,
                !wrong,
            ));
            improved.push(outcome(
                &format!("q{i:02}"),
                Lang::En,
                Source::MedMCQA,
                EvalMode::Traced,
                !wrong || fixed,
            ));
        }
        let report = correction_analysis(&baseline, &improved).unwrap();
        let overall = report.overall.unwrap();
        assert_eq!((overall.corrected, overall.errors), (8, 20));
        assert_eq!(overall.rate(), 0.4);
    }

    #[test]
    fn all_errors_fixed_is_rate_one() {
        let baseline = run_of(
            &[
                (Lang::En, Source::MedQA, false),
                (Lang::En, Source::MedQA, false),
            ],
            EvalMode::Baseline,
        );
        let improved = run_of(
            &[
                (Lang::En, Source::MedQA, true),
                (Lang::En, Source::MedQA, true),
            ],
            EvalMode::Traced,
        );
        let report = correction_analysis(&baseline, &improved).unwrap();
        assert_eq!(report.overall.unwrap().rate(), 1.0);
        // Only in-domain errors exist, so the z-test is not applicable.
        assert!(report.domain_z_test.is_none());
        assert!(report.out_of_domain.is_none());
    }

    #[test]
    fn zero_baseline_errors_is_absent() {
        let baseline = run_of(&[(Lang::En, Source::MedQA, true)], EvalMode::Baseline);
        let improved = run_of(&[(Lang::En, Source::MedQA, true)], EvalMode::Traced);
        let report = correction_analysis(&baseline, &improved).unwrap();
        assert!(report.overall.is_none());
        assert!(report.per_lang.is_empty());
    }

    #[test]
    fn renderers_cover_all_cells() {
        let baseline = aggregate(
            &run_of(
                &[
                    (Lang::En, Source::MedQA, true),
                    (Lang::It, Source::MedExpQA, false),
                ],
                EvalMode::Baseline,
            ),
            0,
        )
        .unwrap();
        let treatment = aggregate(
            &run_of(
                &[
                    (Lang::En, Source::MedQA, true),
                    (Lang::It, Source::MedExpQA, true),
                ],
                EvalMode::Traced,
            ),
            0,
        )
        .unwrap();
        let report = delta_report(&baseline, &treatment, &[0.5]).unwrap();
        let text = render_text_table(std::slice::from_ref(&report));
        assert!(text.contains("MedQA/EN"));
        assert!(text.contains("AVG"));
        let csv = render_csv(std::slice::from_ref(&report));
        assert!(csv.lines().count() >= 3);
        assert!(csv.contains("MedExpQA,IT"));
    }
}
