//! The analysis pipeline run over an exported run, and its JSON/text report.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::qc::{self, FilterOutcome};
use crate::scoring::{
    self, AgreementReport, CriterionCorrelations, DescriptiveReport, Scoreboard, SignificanceMatrix,
};
use crate::types::{Criterion, EvaluationRun, WorkerId};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerQc {
    pub worker_id: WorkerId,
    pub p_value: f64,
    pub passed: bool,
    pub degraded_count: usize,
    pub genuine_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QcSummary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub unfilterable: usize,
    pub pass_rate: Option<f64>,
    pub workers: Vec<WorkerQc>,
    pub unfilterable_workers: Vec<WorkerId>,
}

impl QcSummary {
    fn from_outcome(outcome: &FilterOutcome) -> Self {
        let mut workers: Vec<WorkerQc> = outcome
            .passed
            .iter()
            .chain(&outcome.failed)
            .map(|r| WorkerQc {
                worker_id: r.worker_id.clone(),
                p_value: r.p_value,
                passed: r.passed,
                degraded_count: r.degraded_values.len(),
                genuine_count: r.genuine_values.len(),
            })
            .collect();
        workers.sort_by(|a, b| a.worker_id.cmp(&b.worker_id));
        Self {
            total: outcome.worker_count(),
            passed: outcome.passed.len(),
            failed: outcome.failed.len(),
            unfilterable: outcome.unfilterable.len(),
            pass_rate: outcome.pass_rate,
            workers,
            unfilterable_workers: outcome.unfilterable.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardizationSummary {
    pub retained_ratings: usize,
    pub excluded_ratings: usize,
    pub degenerate_workers: Vec<WorkerId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub pairs_passed: usize,
    pub pairs_failed: usize,
    pub mean_r_passed: Option<f64>,
    pub mean_r_failed: Option<f64>,
    pub histogram_passed: Vec<usize>,
    pub histogram_failed: Vec<usize>,
    pub excluded_pairs: usize,
    pub no_shared_hits: bool,
}

impl From<&AgreementReport> for AgreementSummary {
    fn from(r: &AgreementReport) -> Self {
        Self {
            pairs_passed: r.pairs.iter().filter(|p| p.both_passed).count(),
            pairs_failed: r.pairs.iter().filter(|p| !p.both_passed).count(),
            mean_r_passed: r.mean_r(true),
            mean_r_failed: r.mean_r(false),
            histogram_passed: r.histogram_passed.clone(),
            histogram_failed: r.histogram_failed.clone(),
            excluded_pairs: r.excluded_pairs,
            no_shared_hits: r.no_shared_hits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub run_id: String,
    pub alpha: f64,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
    pub qc: QcSummary,
    pub standardization: StandardizationSummary,
    pub scoreboard: Scoreboard,
    /// Pairwise one-sided tests over pooled standardized ratings, in scoreboard order.
    pub significance: Option<SignificanceMatrix>,
    pub criterion_correlations: Option<CriterionCorrelations>,
    pub agreement: AgreementSummary,
    pub descriptive: DescriptiveReport,
}

/// Filter, standardize, score and summarize a run.
pub fn analyze_run(run: &EvaluationRun, alpha: f64) -> AnalysisReport {
    let violations = run.validate();
    let mut warnings = Vec::new();
    if run.is_empty() {
        warnings.push("run is empty".to_string());
    }
    if !violations.is_empty() {
        warnings.push(format!("{} validation violations", violations.len()));
    }

    let outcome = qc::filter_run(run, alpha);
    let passed: BTreeSet<WorkerId> = outcome.passed_ids();
    let std = scoring::standardized_ratings(run, &passed);
    let scoreboard = scoring::score_systems(&std).unwrap_or_default();
    if scoreboard.scorecards.is_empty() && !run.is_empty() {
        warnings.push("no retained ratings after quality control".to_string());
    }
    let order = scoreboard.order();
    let significance = scoring::significance_matrix(&std, &order, None).ok();
    let criterion_correlations = scoring::criterion_correlations(&scoreboard.scorecards).ok();
    let agreement = scoring::annotator_agreement(run, &passed);

    AnalysisReport {
        schema_version: SCHEMA_VERSION,
        run_id: run.run_id.clone(),
        alpha,
        violations,
        warnings,
        qc: QcSummary::from_outcome(&outcome),
        standardization: StandardizationSummary {
            retained_ratings: std.ratings.len(),
            excluded_ratings: std.excluded_ratings,
            degenerate_workers: std.degenerate_workers.clone(),
        },
        scoreboard,
        significance,
        criterion_correlations,
        agreement: AgreementSummary::from(&agreement),
        descriptive: scoring::descriptive_stats(run, &passed),
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

/// Aligned plain-text tables: pass rates, standardized and raw scores, significance
/// and criterion correlations.
pub fn render_tables(report: &AnalysisReport) -> String {
    let mut out = String::new();
    let q = &report.qc;
    let _ = writeln!(out, "Quality control (alpha = {})", report.alpha);
    let _ = writeln!(
        out,
        "  workers {:>6}  passed {:>6}  failed {:>6}  unfilterable {:>4}  pass rate {}",
        q.total,
        q.passed,
        q.failed,
        q.unfilterable,
        q.pass_rate
            .map_or_else(|| "-".to_string(), |r| format!("{:.1}%", 100.0 * r))
    );
    let d = &report.descriptive;
    for (label, g) in [("passed", &d.passed), ("failed", &d.failed)] {
        let _ = writeln!(
            out,
            "  {label:<7} conversations {:>6}  ave. duration {} min  median words/input {}",
            g.conversations,
            opt(g.mean_conversation_minutes, 1),
            opt(g.median_words_per_input, 1)
        );
    }
    out.push('\n');

    for (title, raw) in [("Average standardized scores", false), ("Average raw scores", true)] {
        let _ = writeln!(out, "{title}");
        let mut header = format!("  {:<16} {:>6} {:>8}", "model", "n", "overall");
        for c in Criterion::TABLE_ORDER {
            let _ = write!(header, " {:>11}", c.name());
        }
        let _ = writeln!(out, "{header}");
        for s in &report.scoreboard.scorecards {
            let (overall, per) = if raw {
                (s.overall_raw, &s.per_criterion_raw)
            } else {
                (s.overall_z, &s.per_criterion_z)
            };
            let prec = if raw { 1 } else { 3 };
            let mut line = format!(
                "  {:<16} {:>6} {:>8}",
                s.system_id.as_str(),
                s.n,
                format!("{overall:.prec$}")
            );
            for c in Criterion::TABLE_ORDER {
                let _ = write!(line, " {:>11}", opt(per.get(&c).copied(), prec));
            }
            let _ = writeln!(out, "{line}");
        }
        out.push('\n');
    }

    if let Some(m) = &report.significance {
        let _ = writeln!(out, "Pairwise significance (row outperforms column; ** p<0.05, * p<0.10)");
        out.push_str(&m.render());
        out.push('\n');
    }

    if let Some(cc) = &report.criterion_correlations {
        let _ = writeln!(out, "Criterion correlations (upper: Pearson, lower: Spearman)");
        let mut header = format!("  {:<11}", "");
        for c in &cc.criteria {
            let _ = write!(header, " {:>11}", c.name());
        }
        let _ = writeln!(out, "{header}");
        for (i, c) in cc.criteria.iter().enumerate() {
            let mut line = format!("  {:<11}", c.name());
            for cell in &cc.cells[i] {
                let _ = write!(line, " {:>11}", opt(*cell, 3));
            }
            let _ = writeln!(out, "{line}");
        }
    }
    out
}
