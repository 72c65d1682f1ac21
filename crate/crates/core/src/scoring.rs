//! System-level scores and meta-evaluation.
//!
//! Pipeline order: filter workers, reverse negative criteria, standardize per worker,
//! then aggregate per system. The quality-control system takes part in each worker's
//! standardization but is never scored as a system.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::statkit::{self, Alternative, StatError};
use crate::types::{
    Criterion, EvaluationRun, Rating, SlotRole, Speaker, SystemId, TopicOpinion, WorkerId,
};

/// Significance levels marked in rendered matrices.
pub const SIGNIFICANCE_LEVELS: [f64; 2] = [0.05, 0.10];

/// Number of bins over [-1, 1] in agreement histograms.
pub const AGREEMENT_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("no ratings to score")]
    NoRatings,
    #[error("need at least {needed} systems, found {found}")]
    TooFewSystems { needed: usize, found: usize },
    #[error("system sets differ: only in first {only_a:?}, only in second {only_b:?}")]
    SystemMismatch {
        only_a: Vec<SystemId>,
        only_b: Vec<SystemId>,
    },
    #[error(transparent)]
    Stat(#[from] StatError),
}

/// A retained rating with its reversed and standardized values attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRating {
    pub rating: Rating,
    pub role: SlotRole,
    pub reversed: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardizedRun {
    pub ratings: Vec<ScoredRating>,
    /// Genuine systems of the run, sorted by id.
    pub systems: Vec<SystemId>,
    /// Passed workers whose ratings could not be standardized (fewer than two, or constant).
    pub degenerate_workers: Vec<WorkerId>,
    pub excluded_ratings: usize,
}

impl StandardizedRun {
    /// Standardized values of one genuine system, optionally restricted to one criterion.
    pub fn system_values(&self, system: &SystemId, criterion: Option<Criterion>) -> Vec<f64> {
        self.ratings
            .iter()
            .filter(|s| s.role == SlotRole::Genuine && &s.rating.system_id == system)
            .filter(|s| criterion.is_none_or(|c| s.rating.criterion == c))
            .map(|s| s.z)
            .collect()
    }
}

/// Reverses and z-standardizes the ratings of every passed worker.
pub fn standardized_ratings(run: &EvaluationRun, passed: &BTreeSet<WorkerId>) -> StandardizedRun {
    let mut out = StandardizedRun {
        systems: run.genuine_systems(),
        ..Default::default()
    };
    for (worker, ratings) in run.ratings_by_worker() {
        if !passed.contains(&worker) {
            continue;
        }
        let reversed: Vec<f64> = ratings.iter().map(|(r, _)| r.reversed_value()).collect();
        match statkit::standardize(&reversed) {
            Ok(z) if !z.degenerate => {
                for ((r, role), (rev, zv)) in ratings.iter().zip(reversed.iter().zip(z.values)) {
                    out.ratings.push(ScoredRating {
                        rating: (*r).clone(),
                        role: *role,
                        reversed: *rev,
                        z: zv,
                    });
                }
            }
            _ => {
                out.excluded_ratings += ratings.len();
                out.degenerate_workers.push(worker);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemScorecard {
    pub system_id: SystemId,
    pub n: usize,
    pub per_criterion_z: BTreeMap<Criterion, f64>,
    pub per_criterion_raw: BTreeMap<Criterion, f64>,
    pub overall_z: f64,
    pub overall_raw: f64,
}

/// Scorecards ordered best first, plus systems that had no retained ratings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scoreboard {
    pub scorecards: Vec<SystemScorecard>,
    pub absent: Vec<SystemId>,
}

impl Scoreboard {
    pub fn order(&self) -> Vec<SystemId> {
        self.scorecards.iter().map(|s| s.system_id.clone()).collect()
    }

    pub fn get(&self, system: &SystemId) -> Option<&SystemScorecard> {
        self.scorecards.iter().find(|s| &s.system_id == system)
    }
}

fn macro_mean(per_criterion: &BTreeMap<Criterion, f64>) -> f64 {
    per_criterion.values().sum::<f64>() / per_criterion.len() as f64
}

/// Per-criterion means and the macro-averaged overall score for every genuine system.
pub fn score_systems(std: &StandardizedRun) -> Result<Scoreboard, ScoringError> {
    if std.ratings.is_empty() {
        return Err(ScoringError::NoRatings);
    }
    // system -> criterion -> (sum z, sum raw, count)
    let mut acc: BTreeMap<&SystemId, BTreeMap<Criterion, (f64, f64, usize)>> = BTreeMap::new();
    for s in std.ratings.iter().filter(|s| s.role == SlotRole::Genuine) {
        let cell = acc
            .entry(&s.rating.system_id)
            .or_default()
            .entry(s.rating.criterion)
            .or_insert((0.0, 0.0, 0));
        cell.0 += s.z;
        cell.1 += s.reversed;
        cell.2 += 1;
    }

    let mut board = Scoreboard::default();
    for system in &std.systems {
        let Some(per) = acc.get(system) else {
            board.absent.push(system.clone());
            continue;
        };
        let per_criterion_z: BTreeMap<Criterion, f64> =
            per.iter().map(|(c, (z, _, n))| (*c, z / *n as f64)).collect();
        let per_criterion_raw: BTreeMap<Criterion, f64> =
            per.iter().map(|(c, (_, raw, n))| (*c, raw / *n as f64)).collect();
        board.scorecards.push(SystemScorecard {
            system_id: system.clone(),
            n: per.values().map(|(_, _, n)| n).sum(),
            overall_z: macro_mean(&per_criterion_z),
            overall_raw: macro_mean(&per_criterion_raw),
            per_criterion_z,
            per_criterion_raw,
        });
    }
    board.scorecards.sort_by(|a, b| {
        b.overall_z
            .total_cmp(&a.overall_z)
            .then_with(|| a.system_id.cmp(&b.system_id))
    });
    Ok(board)
}

/// Verdict for an unordered pair of systems at some significance level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conclusion {
    FirstWins,
    SecondWins,
    NoDifference,
}

/// One-sided p-values that the row system outperforms the column system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMatrix {
    pub systems: Vec<SystemId>,
    /// `p_values[i][j]`; `None` on the diagonal or where a system has no ratings.
    pub p_values: Vec<Vec<Option<f64>>>,
}

impl SignificanceMatrix {
    pub fn p(&self, i: usize, j: usize) -> Option<f64> {
        self.p_values.get(i)?.get(j).copied().flatten()
    }

    pub fn wins(&self, i: usize, j: usize, alpha: f64) -> bool {
        self.p(i, j).is_some_and(|p| p < alpha)
    }

    pub fn conclusion(&self, i: usize, j: usize, alpha: f64) -> Conclusion {
        match (self.wins(i, j, alpha), self.wins(j, i, alpha)) {
            (true, false) => Conclusion::FirstWins,
            (false, true) => Conclusion::SecondWins,
            _ => Conclusion::NoDifference,
        }
    }

    fn index(&self) -> BTreeMap<&SystemId, usize> {
        self.systems.iter().enumerate().map(|(i, s)| (s, i)).collect()
    }

    /// Text rendering: `**` marks p < 0.05, `*` marks p < 0.10.
    pub fn render(&self) -> String {
        let width = self
            .systems
            .iter()
            .map(|s| s.as_str().len())
            .max()
            .unwrap_or(0)
            .max(8);
        let mut out = format!("{:width$}", "");
        for s in &self.systems {
            out.push_str(&format!(" {:>width$}", s.as_str()));
        }
        out.push('\n');
        for (i, row) in self.systems.iter().enumerate() {
            out.push_str(&format!("{:width$}", row.as_str()));
            for j in 0..self.systems.len() {
                let cell = match self.p(i, j) {
                    None => "-".to_string(),
                    Some(p) if p < SIGNIFICANCE_LEVELS[0] => format!("{p:.3}**"),
                    Some(p) if p < SIGNIFICANCE_LEVELS[1] => format!("{p:.3}*"),
                    Some(p) => format!("{p:.3}"),
                };
                out.push_str(&format!(" {cell:>width$}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Rank-sum test of every ordered pair of systems over their pooled standardized ratings.
pub fn significance_matrix(
    std: &StandardizedRun,
    systems: &[SystemId],
    criterion: Option<Criterion>,
) -> Result<SignificanceMatrix, ScoringError> {
    if systems.len() < 2 {
        return Err(ScoringError::TooFewSystems {
            needed: 2,
            found: systems.len(),
        });
    }
    let samples: Vec<Vec<f64>> = systems
        .iter()
        .map(|s| std.system_values(s, criterion))
        .collect();
    let mut p_values = vec![vec![None; systems.len()]; systems.len()];
    for (i, row) in p_values.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if i == j || samples[i].is_empty() || samples[j].is_empty() {
                continue;
            }
            *cell = Some(statkit::rank_sum_test(&samples[i], &samples[j], Alternative::Greater)?.p_value);
        }
    }
    Ok(SignificanceMatrix {
        systems: systems.to_vec(),
        p_values,
    })
}

fn compare_sets(a: &[SystemId], b: &[SystemId]) -> Result<(), ScoringError> {
    let sa: BTreeSet<&SystemId> = a.iter().collect();
    let sb: BTreeSet<&SystemId> = b.iter().collect();
    if sa == sb && sa.len() == a.len() && sb.len() == b.len() {
        return Ok(());
    }
    Err(ScoringError::SystemMismatch {
        only_a: sa.difference(&sb).map(|s| (*s).clone()).collect(),
        only_b: sb.difference(&sa).map(|s| (*s).clone()).collect(),
    })
}

/// Fraction of system pairs on which two matrices reach the same verdict at `alpha`.
///
/// Systems are matched by id, so the two matrices may list them in different orders.
pub fn conclusion_agreement(
    a: &SignificanceMatrix,
    b: &SignificanceMatrix,
    alpha: f64,
) -> Result<f64, ScoringError> {
    compare_sets(&a.systems, &b.systems)?;
    let bi = b.index();
    let n = a.systems.len();
    let (mut same, mut total) = (0usize, 0usize);
    for i in 0..n {
        for j in (i + 1)..n {
            let (bi_i, bi_j) = (bi[&a.systems[i]], bi[&a.systems[j]]);
            total += 1;
            if a.conclusion(i, j, alpha) == b.conclusion(bi_i, bi_j, alpha) {
                same += 1;
            }
        }
    }
    if total == 0 {
        return Err(ScoringError::TooFewSystems { needed: 2, found: n });
    }
    Ok(same as f64 / total as f64)
}

/// Pearson correlations between two runs' system scores; `None` where undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub per_criterion: BTreeMap<Criterion, Option<f64>>,
    pub overall: Option<f64>,
}

pub fn replication_correlation(
    a: &[SystemScorecard],
    b: &[SystemScorecard],
) -> Result<Replication, ScoringError> {
    let ids_a: Vec<SystemId> = a.iter().map(|s| s.system_id.clone()).collect();
    let ids_b: Vec<SystemId> = b.iter().map(|s| s.system_id.clone()).collect();
    compare_sets(&ids_a, &ids_b)?;
    let by_id: BTreeMap<&SystemId, &SystemScorecard> = b.iter().map(|s| (&s.system_id, s)).collect();
    let pairs: Vec<(&SystemScorecard, &SystemScorecard)> =
        a.iter().map(|s| (s, by_id[&s.system_id])).collect();

    let overall_a: Vec<f64> = pairs.iter().map(|(x, _)| x.overall_z).collect();
    let overall_b: Vec<f64> = pairs.iter().map(|(_, y)| y.overall_z).collect();
    let overall = statkit::pearson(&overall_a, &overall_b).ok();

    let mut per_criterion = BTreeMap::new();
    for c in Criterion::ALL {
        let aligned: Option<(Vec<f64>, Vec<f64>)> = pairs
            .iter()
            .map(|(x, y)| Some((*x.per_criterion_z.get(&c)?, *y.per_criterion_z.get(&c)?)))
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().unzip());
        let r = aligned.and_then(|(xa, ya)| statkit::pearson(&xa, &ya).ok());
        per_criterion.insert(c, r);
    }
    Ok(Replication {
        per_criterion,
        overall,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerPairAgreement {
    pub worker_a: WorkerId,
    pub worker_b: WorkerId,
    pub r: f64,
    pub aligned: usize,
    pub both_passed: bool,
}

/// Pairwise agreement between workers who assessed the same HIT configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub pairs: Vec<WorkerPairAgreement>,
    /// Counts per 0.1-wide bin over [-1, 1] for pairs where both workers passed.
    pub histogram_passed: Vec<usize>,
    /// Same for pairs where at least one worker failed.
    pub histogram_failed: Vec<usize>,
    /// Pairs skipped for fewer than two aligned ratings or zero variance.
    pub excluded_pairs: usize,
    /// Set when no HIT configuration was completed by two or more workers.
    pub no_shared_hits: bool,
}

impl AgreementReport {
    pub fn mean_r(&self, both_passed: bool) -> Option<f64> {
        let rs: Vec<f64> = self
            .pairs
            .iter()
            .filter(|p| p.both_passed == both_passed)
            .map(|p| p.r)
            .collect();
        statkit::mean(&rs).ok()
    }
}

pub fn histogram_bin(r: f64) -> usize {
    (((r + 1.0) / 0.1).floor().max(0.0) as usize).min(AGREEMENT_BINS - 1)
}

/// Correlates every pair of workers that completed a HIT with the same set of systems.
///
/// Ratings are aligned on (system, criterion); a worker who saw a system more than
/// once contributes the mean of their reversed ratings for it.
/// Sum and count of one worker's ratings per (system, criterion) cell.
type CellSums = BTreeMap<(SystemId, Criterion), (f64, usize)>;

pub fn annotator_agreement(run: &EvaluationRun, passed: &BTreeSet<WorkerId>) -> AgreementReport {
    type Profile = BTreeMap<(SystemId, Criterion), f64>;
    let mut sums: BTreeMap<WorkerId, CellSums> = BTreeMap::new();
    for (worker, ratings) in run.ratings_by_worker() {
        let entry = sums.entry(worker).or_default();
        for (r, _) in ratings {
            let cell = entry.entry((r.system_id.clone(), r.criterion)).or_insert((0.0, 0));
            cell.0 += r.reversed_value();
            cell.1 += 1;
        }
    }
    let profiles: BTreeMap<WorkerId, Profile> = sums
        .into_iter()
        .map(|(w, m)| (w, m.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()))
        .collect();

    let mut groups: BTreeMap<Vec<SystemId>, BTreeSet<WorkerId>> = BTreeMap::new();
    for hit in &run.hits {
        if profiles.contains_key(&hit.worker_id) {
            groups
                .entry(hit.configuration())
                .or_default()
                .insert(hit.worker_id.clone());
        }
    }

    let mut report = AgreementReport {
        histogram_passed: vec![0; AGREEMENT_BINS],
        histogram_failed: vec![0; AGREEMENT_BINS],
        ..Default::default()
    };
    let mut done: BTreeSet<(WorkerId, WorkerId)> = BTreeSet::new();
    for (config, workers) in &groups {
        let workers: Vec<&WorkerId> = workers.iter().collect();
        for (i, wa) in workers.iter().enumerate() {
            for wb in &workers[i + 1..] {
                if !done.insert(((*wa).clone(), (*wb).clone())) {
                    continue;
                }
                let (pa, pb) = (&profiles[*wa], &profiles[*wb]);
                let (xa, xb): (Vec<f64>, Vec<f64>) = pa
                    .iter()
                    .filter(|((s, _), _)| config.contains(s))
                    .filter_map(|(k, va)| pb.get(k).map(|vb| (*va, *vb)))
                    .unzip();
                match statkit::pearson(&xa, &xb) {
                    Ok(r) => {
                        let both_passed = passed.contains(*wa) && passed.contains(*wb);
                        let hist = if both_passed {
                            &mut report.histogram_passed
                        } else {
                            &mut report.histogram_failed
                        };
                        hist[histogram_bin(r)] += 1;
                        report.pairs.push(WorkerPairAgreement {
                            worker_a: (*wa).clone(),
                            worker_b: (*wb).clone(),
                            r,
                            aligned: xa.len(),
                            both_passed,
                        });
                    }
                    Err(_) => report.excluded_pairs += 1,
                }
            }
        }
    }
    report.no_shared_hits = report.pairs.is_empty() && report.excluded_pairs == 0;
    report
}

/// Criterion-by-criterion correlations of system means: Pearson above the diagonal,
/// Spearman below it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionCorrelations {
    pub criteria: Vec<Criterion>,
    pub cells: Vec<Vec<Option<f64>>>,
}

pub fn criterion_correlations(
    scorecards: &[SystemScorecard],
) -> Result<CriterionCorrelations, ScoringError> {
    if scorecards.len() < 3 {
        return Err(ScoringError::TooFewSystems {
            needed: 3,
            found: scorecards.len(),
        });
    }
    let criteria = Criterion::TABLE_ORDER.to_vec();
    let column = |c: Criterion| -> Vec<f64> {
        scorecards
            .iter()
            .map(|s| s.per_criterion_z.get(&c).copied().unwrap_or(f64::NAN))
            .collect()
    };
    let columns: Vec<Vec<f64>> = criteria.iter().map(|&c| column(c)).collect();
    let k = criteria.len();
    let mut cells = vec![vec![None; k]; k];
    for i in 0..k {
        for j in 0..k {
            cells[i][j] = match i.cmp(&j) {
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Less => statkit::pearson(&columns[i], &columns[j]).ok(),
                std::cmp::Ordering::Greater => statkit::spearman(&columns[i], &columns[j]).ok(),
            };
        }
    }
    Ok(CriterionCorrelations { criteria, cells })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OpinionShares {
    pub liked: f64,
    pub ambivalent: f64,
    pub disliked: f64,
    pub responses: usize,
}

/// Length, duration and topic-opinion statistics for one group of workers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub workers: usize,
    pub conversations: usize,
    pub median_words_per_conversation: Option<f64>,
    pub median_chars_per_conversation: Option<f64>,
    pub median_words_per_input: Option<f64>,
    pub median_chars_per_input: Option<f64>,
    pub mean_conversation_minutes: Option<f64>,
    pub mean_hit_minutes: Option<f64>,
    pub topic_opinions: Option<OpinionShares>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveReport {
    pub passed: GroupStats,
    pub failed: GroupStats,
}

/// Descriptive statistics over the user side of completed conversations, split by QC outcome.
pub fn descriptive_stats(run: &EvaluationRun, passed: &BTreeSet<WorkerId>) -> DescriptiveReport {
    let group = |want_passed: bool| -> GroupStats {
        let convs: Vec<_> = run
            .conversations
            .iter()
            .filter(|c| c.completed && passed.contains(&c.worker_id) == want_passed)
            .collect();
        let mut words_conv = Vec::new();
        let mut chars_conv = Vec::new();
        let mut words_input = Vec::new();
        let mut chars_input = Vec::new();
        let mut durations = Vec::new();
        let mut hit_spans: BTreeMap<_, (i64, i64)> = BTreeMap::new();
        let mut opinions: BTreeMap<TopicOpinion, usize> = BTreeMap::new();
        let mut workers = BTreeSet::new();
        for c in &convs {
            workers.insert(&c.worker_id);
            let (mut w, mut ch) = (0usize, 0usize);
            for u in c.utterances.iter().filter(|u| u.speaker == Speaker::User) {
                let uw = u.text.split_whitespace().count();
                let uc = u.text.chars().count();
                words_input.push(uw as f64);
                chars_input.push(uc as f64);
                w += uw;
                ch += uc;
            }
            words_conv.push(w as f64);
            chars_conv.push(ch as f64);
            if let (Some(first), Some(last)) = (c.utterances.first(), c.utterances.last()) {
                durations.push((last.timestamp - first.timestamp) as f64 / 60_000.0);
                let span = hit_spans
                    .entry(&c.hit_id)
                    .or_insert((first.timestamp, last.timestamp));
                span.0 = span.0.min(first.timestamp);
                span.1 = span.1.max(last.timestamp);
            }
            if let Some(o) = c.topic_opinion {
                *opinions.entry(o).or_default() += 1;
            }
        }
        let hit_minutes: Vec<f64> = hit_spans
            .values()
            .map(|(a, b)| (b - a) as f64 / 60_000.0)
            .collect();
        let responses: usize = opinions.values().sum();
        let share = |o| 100.0 * *opinions.get(&o).unwrap_or(&0) as f64 / responses as f64;
        GroupStats {
            workers: workers.len(),
            conversations: convs.len(),
            median_words_per_conversation: statkit::median(&words_conv),
            median_chars_per_conversation: statkit::median(&chars_conv),
            median_words_per_input: statkit::median(&words_input),
            median_chars_per_input: statkit::median(&chars_input),
            mean_conversation_minutes: statkit::mean(&durations).ok(),
            mean_hit_minutes: statkit::mean(&hit_minutes).ok(),
            topic_opinions: (responses > 0).then(|| OpinionShares {
                liked: share(TopicOpinion::Liked),
                ambivalent: share(TopicOpinion::Ambivalent),
                disliked: share(TopicOpinion::Disliked),
                responses,
            }),
        }
    };
    DescriptiveReport {
        passed: group(true),
        failed: group(false),
    }
}
