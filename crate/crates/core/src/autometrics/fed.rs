//! Likelihood-difference dialogue scoring.
//!
//! For each criterion the score is the mean log-likelihood of a set of positive
//! follow-up utterances minus the mean over negative ones, conditioned on the
//! conversation so far.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{tokenize, MetricError};
use crate::types::{Criterion, Utterance};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ScorerError(pub String);

/// Something that can say how likely a response is after a conversation.
pub trait LikelihoodScorer {
    /// Natural-log likelihood of `response` following `context`. Must be deterministic.
    fn log_likelihood(&self, response: &[String], context: &[Utterance]) -> Result<f64, ScorerError>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FedUtterances {
    #[serde(default)]
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

/// Follow-up utterances per criterion, serialized as `{"interesting": {"positive": [..], "negative": [..]}, ..}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FedConfig(pub BTreeMap<Criterion, FedUtterances>);

fn utts(positive: &[&str], negative: &[&str]) -> FedUtterances {
    FedUtterances {
        positive: positive.iter().map(|s| s.to_string()).collect(),
        negative: negative.iter().map(|s| s.to_string()).collect(),
    }
}

impl Default for FedConfig {
    fn default() -> Self {
        let mut m = BTreeMap::new();
        m.insert(
            Criterion::Interesting,
            utts(
                &[
                    "Wow that is really interesting.",
                    "That's really interesting!",
                    "Cool! That sounds super interesting.",
                ],
                &[
                    "That's not very interesting.",
                    "That's really boring.",
                    "That was a really boring response.",
                ],
            ),
        );
        m.insert(
            Criterion::Fun,
            utts(
                &["Wow that is very fun.", "Chat with you is enjoyable.", "You are fun."],
                &["That's not very fun.", "I am not having fun."],
            ),
        );
        m.insert(
            Criterion::Consistent,
            utts(&[], &["That's not what you said earlier!", "Stop contradicting yourself!"]),
        );
        m.insert(
            Criterion::Fluent,
            utts(
                &["That makes sense!", "You have a good point."],
                &["Is that real English?", "I'm so confused right now!", "That makes no sense!"],
            ),
        );
        m.insert(
            Criterion::Topic,
            utts(&[], &["Stop changing the topic so much.", "Don't change the topic!"]),
        );
        m.insert(
            Criterion::Robotic,
            utts(&[], &["You are robot.", "You do not sound like a person."]),
        );
        m.insert(
            Criterion::Repetitive,
            utts(
                &[],
                &[
                    "Stop saying the same thing repeatedly.",
                    "Why are you repeating yourself?",
                    "Stop repeating yourself!",
                ],
            ),
        );
        FedConfig(m)
    }
}

impl FedConfig {
    /// Problems with the configuration; empty when usable.
    pub fn problems(&self) -> Vec<String> {
        Criterion::ALL
            .iter()
            .filter(|c| self.0.get(c).is_none_or(|u| u.negative.is_empty()))
            .map(|c| format!("criterion {c} has no negative utterances"))
            .collect()
    }
}

fn mean_ll(
    utterances: &[String],
    context: &[Utterance],
    scorer: &dyn LikelihoodScorer,
    criterion: Criterion,
) -> Result<Option<f64>, MetricError> {
    if utterances.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for u in utterances {
        sum += scorer
            .log_likelihood(&tokenize(u), context)
            .map_err(|source| MetricError::Scorer { criterion, source })?;
    }
    Ok(Some(sum / utterances.len() as f64))
}

/// Per-criterion scores of a conversation. Criteria without positive utterances
/// use 0 for the positive term.
pub fn fed_scores(
    conversation: &[Utterance],
    scorer: &dyn LikelihoodScorer,
    config: &FedConfig,
) -> Result<BTreeMap<Criterion, f64>, MetricError> {
    if conversation.is_empty() {
        return Err(MetricError::EmptyConversation);
    }
    let mut out = BTreeMap::new();
    for (&criterion, u) in &config.0 {
        let pos = mean_ll(&u.positive, conversation, scorer, criterion)?.unwrap_or(0.0);
        let neg = mean_ll(&u.negative, conversation, scorer, criterion)?.unwrap_or(0.0);
        out.insert(criterion, pos - neg);
    }
    Ok(out)
}
