//! Automatic metrics: word-overlap scores against references and the reference-free
//! likelihood-difference score.

mod bleu;
mod fed;
mod gleu;
mod meteor;
mod ngram;
mod rouge;
mod testset;
mod tokenize;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::statkit::{self, StatError};
use crate::types::SystemId;

pub use bleu::{bleu, modified_precision, sentence_bleu, Bleu, BleuOptions};
pub use fed::{fed_scores, FedConfig, FedUtterances, LikelihoodScorer, ScorerError};
pub use gleu::{corpus_gleu, gleu, gleu_counts, GleuCounts};
pub use meteor::{meteor, meteor_alignment, MeteorAlignment, METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA};
pub use ngram::NgramScorer;
pub use rouge::{lcs_length, rouge_l, RougeL};
pub use testset::{
    conversation, parse_candidates, parse_test_set, score_system, Candidate, MetricName, MetricSettings,
    TestItem,
};
pub use tokenize::tokenize;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty conversation")]
    EmptyConversation,
    #[error("pair has no references")]
    NoReferences,
    #[error("unsupported n-gram order {0}")]
    BadOrder(usize),
    #[error("system sets differ: {0}")]
    SystemMismatch(String),
    #[error("need at least 3 systems, found {0}")]
    TooFewSystems(usize),
    #[error("FED scorer failed on {criterion}: {source}")]
    Scorer {
        criterion: crate::types::Criterion,
        #[source]
        source: ScorerError,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("bad candidate: {0}")]
    Candidate(String),
    #[error(transparent)]
    Stat(#[from] StatError),
}

/// A candidate with one or more references, all produced by [`tokenize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedPair {
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl TokenizedPair {
    pub fn new(candidate: &str, references: &[&str]) -> Self {
        Self {
            candidate: tokenize(candidate),
            references: references.iter().map(|r| tokenize(r)).collect(),
        }
    }

    pub(crate) fn check(&self) -> Result<(), MetricError> {
        if self.references.is_empty() {
            return Err(MetricError::NoReferences);
        }
        Ok(())
    }
}

/// n-gram counts of `tokens` for a single order.
pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Pearson correlation between per-system metric scores and human scores.
pub fn metric_human_correlation(
    metric: &BTreeMap<SystemId, f64>,
    human: &BTreeMap<SystemId, f64>,
) -> Result<f64, MetricError> {
    if metric.keys().ne(human.keys()) {
        let only_m: Vec<_> = metric.keys().filter(|k| !human.contains_key(*k)).collect();
        let only_h: Vec<_> = human.keys().filter(|k| !metric.contains_key(*k)).collect();
        return Err(MetricError::SystemMismatch(format!(
            "metric only {only_m:?}, human only {only_h:?}"
        )));
    }
    if metric.len() < 3 {
        return Err(MetricError::TooFewSystems(metric.len()));
    }
    let m: Vec<f64> = metric.values().copied().collect();
    let h: Vec<f64> = human.values().copied().collect();
    Ok(statkit::pearson(&m, &h)?)
}
