//! Scoring a system's responses against a test set of (context, reference) items.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{
    bleu, corpus_gleu, fed_scores, meteor, rouge_l, tokenize, BleuOptions, FedConfig,
    LikelihoodScorer, MetricError, TokenizedPair,
};
use crate::types::{Criterion, Speaker, Utterance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricName {
    #[serde(rename = "bleu-1")]
    Bleu1,
    #[serde(rename = "bleu-4")]
    Bleu4,
    #[serde(rename = "rouge-l")]
    RougeL,
    #[serde(rename = "meteor")]
    Meteor,
    #[serde(rename = "gleu")]
    Gleu,
    #[serde(rename = "fed")]
    Fed,
}

impl MetricName {
    pub const ALL: [MetricName; 6] = [
        MetricName::Bleu1,
        MetricName::Bleu4,
        MetricName::RougeL,
        MetricName::Meteor,
        MetricName::Gleu,
        MetricName::Fed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricName::Bleu1 => "bleu-1",
            MetricName::Bleu4 => "bleu-4",
            MetricName::RougeL => "rouge-l",
            MetricName::Meteor => "meteor",
            MetricName::Gleu => "gleu",
            MetricName::Fed => "fed",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestItem {
    /// Preceding turns, oldest first; the last one is the turn being answered.
    pub context: Vec<String>,
    pub references: Vec<String>,
}

#[derive(Deserialize)]
struct RawItem {
    #[serde(default)]
    context: Vec<String>,
    reference: Option<String>,
    #[serde(default)]
    references: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub context_id: usize,
    pub response: String,
}

fn json_lines<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<(usize, T)>, MetricError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .map_err(|e| MetricError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
        })
        .collect()
}

/// Parses JSON lines of `{"context": [...], "reference": "..."}`; a `"references"` list is
/// also accepted.
pub fn parse_test_set(text: &str) -> Result<Vec<TestItem>, MetricError> {
    json_lines::<RawItem>(text)?
        .into_iter()
        .map(|(line, raw)| {
            let mut references = raw.references;
            references.extend(raw.reference);
            if references.is_empty() {
                return Err(MetricError::Parse {
                    line,
                    message: "item has no reference".into(),
                });
            }
            Ok(TestItem {
                context: raw.context,
                references,
            })
        })
        .collect()
}

/// Parses JSON lines of `{"context_id": n, "response": "..."}`.
pub fn parse_candidates(text: &str) -> Result<Vec<Candidate>, MetricError> {
    Ok(json_lines(text)?.into_iter().map(|(_, c)| c).collect())
}

/// The context followed by the candidate as the system's turn; speakers alternate
/// backwards from the candidate.
pub fn conversation(item: &TestItem, response: &str) -> Vec<Utterance> {
    let n = item.context.len();
    item.context
        .iter()
        .enumerate()
        .map(|(i, text)| Utterance {
            speaker: if (n - i) % 2 == 1 { Speaker::User } else { Speaker::Bot },
            text: text.clone(),
            timestamp: i as i64,
        })
        .chain(std::iter::once(Utterance {
            speaker: Speaker::Bot,
            text: response.to_string(),
            timestamp: n as i64,
        }))
        .collect()
}

pub struct MetricSettings<'a> {
    pub smoothed_bleu: bool,
    pub fed: &'a FedConfig,
    pub scorer: &'a dyn LikelihoodScorer,
}

fn pairs<'a>(items: &'a [TestItem], candidates: &'a [Candidate]) -> Result<Vec<(&'a TestItem, &'a Candidate)>, MetricError> {
    if candidates.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut seen = vec![false; items.len()];
    candidates
        .iter()
        .map(|c| {
            let item = items.get(c.context_id).ok_or_else(|| {
                MetricError::Candidate(format!(
                    "context_id {} outside the test set of {} items",
                    c.context_id,
                    items.len()
                ))
            })?;
            if std::mem::replace(&mut seen[c.context_id], true) {
                return Err(MetricError::Candidate(format!("context_id {} answered twice", c.context_id)));
            }
            Ok((item, c))
        })
        .collect()
}

/// System-level scores for one metric. Word-overlap metrics report one value under the
/// metric name (corpus level for BLEU and GLEU, mean over items otherwise); FED reports
/// the mean over criteria under `fed` and each criterion under `fed/<criterion>`.
pub fn score_system(
    items: &[TestItem],
    candidates: &[Candidate],
    metric: MetricName,
    settings: &MetricSettings<'_>,
) -> Result<BTreeMap<String, f64>, MetricError> {
    let aligned = pairs(items, candidates)?;
    let tokenized: Vec<TokenizedPair> = aligned
        .iter()
        .map(|(item, c)| TokenizedPair {
            candidate: tokenize(&c.response),
            references: item.references.iter().map(|r| tokenize(r)).collect(),
        })
        .collect();
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let mut out = BTreeMap::new();
    let bleu_options = |n| {
        if settings.smoothed_bleu {
            BleuOptions::smoothed(n)
        } else {
            BleuOptions::new(n)
        }
    };
    let single = match metric {
        MetricName::Bleu1 => bleu(&tokenized, bleu_options(1))?.score,
        MetricName::Bleu4 => bleu(&tokenized, bleu_options(4))?.score,
        MetricName::RougeL => mean(tokenized.iter().map(|p| rouge_l(p).map(|r| r.f1)).collect::<Result<_, _>>()?),
        MetricName::Meteor => mean(tokenized.iter().map(meteor).collect::<Result<_, _>>()?),
        MetricName::Gleu => corpus_gleu(&tokenized, 4)?,
        MetricName::Fed => {
            let mut sums: BTreeMap<Criterion, f64> = BTreeMap::new();
            for (item, c) in &aligned {
                for (criterion, v) in fed_scores(&conversation(item, &c.response), settings.scorer, settings.fed)? {
                    *sums.entry(criterion).or_default() += v;
                }
            }
            let per: BTreeMap<Criterion, f64> = sums
                .into_iter()
                .map(|(c, s)| (c, s / aligned.len() as f64))
                .collect();
            for (c, v) in &per {
                out.insert(format!("fed/{c}"), *v);
            }
            per.values().sum::<f64>() / per.len().max(1) as f64
        }
    };
    out.insert(metric.name().to_string(), single);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autometrics::NgramScorer;

    const TEST_SET: &str = r#"{"context": ["hi , how are you ?"], "reference": "i am fine , thanks ."}
{"context": ["do you like dogs ?"], "references": ["yes i love dogs .", "i do ."]}
"#;

    fn settings<'a>(fed: &'a FedConfig, scorer: &'a NgramScorer) -> MetricSettings<'a> {
        MetricSettings {
            smoothed_bleu: false,
            fed,
            scorer,
        }
    }

    #[test]
    fn parses_both_reference_forms() {
        let items = parse_test_set(TEST_SET).unwrap();
        assert_eq!(items[1].references.len(), 2);
        assert!(matches!(parse_test_set("{\"context\": []}\n"), Err(MetricError::Parse { line: 1, .. })));
        assert!(matches!(parse_candidates("{oops"), Err(MetricError::Parse { line: 1, .. })));
    }

    #[test]
    fn references_as_candidates_score_one() {
        let items = parse_test_set(TEST_SET).unwrap();
        let cands = vec![
            Candidate { context_id: 0, response: "i am fine , thanks .".into() },
            Candidate { context_id: 1, response: "yes i love dogs .".into() },
        ];
        let (fed, scorer) = (FedConfig::default(), NgramScorer::bundled());
        for m in [MetricName::Bleu1, MetricName::Bleu4, MetricName::RougeL, MetricName::Gleu] {
            let s = score_system(&items, &cands, m, &settings(&fed, &scorer)).unwrap();
            assert!((s[m.name()] - 1.0).abs() < 1e-12, "{m}: {s:?}");
        }
        let f = score_system(&items, &cands, MetricName::Fed, &settings(&fed, &scorer)).unwrap();
        assert_eq!(f.len(), 8);
    }

    #[test]
    fn rejects_unknown_or_repeated_contexts() {
        let items = parse_test_set(TEST_SET).unwrap();
        let (fed, scorer) = (FedConfig::default(), NgramScorer::bundled());
        let out_of_range = vec![Candidate { context_id: 5, response: "x".into() }];
        assert!(score_system(&items, &out_of_range, MetricName::Bleu1, &settings(&fed, &scorer)).is_err());
        let twice = vec![
            Candidate { context_id: 0, response: "x".into() },
            Candidate { context_id: 0, response: "y".into() },
        ];
        assert!(score_system(&items, &twice, MetricName::Bleu1, &settings(&fed, &scorer)).is_err());
    }

    #[test]
    fn speakers_alternate_back_from_the_response() {
        let item = TestItem {
            context: vec!["a".into(), "b".into(), "c".into()],
            references: vec!["r".into()],
        };
        let conv = conversation(&item, "x");
        let speakers: Vec<Speaker> = conv.iter().map(|u| u.speaker).collect();
        assert_eq!(speakers, [Speaker::User, Speaker::Bot, Speaker::User, Speaker::Bot]);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in MetricName::ALL {
            assert_eq!(MetricName::from_name(m.name()), Some(m));
        }
        assert_eq!(MetricName::from_name("bleu"), None);
    }
}
