//! The quality-control bot: random responses with meaning distortion.
//!
//! A degraded reply is a response drawn uniformly from a corpus, ignoring what the
//! user said, in which a window of `r` words has been swapped for `r` words taken
//! from a different corpus response. For responses of three or more words the
//! window never touches the first or last word.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Utterance;

/// Toy response corpus bundled with the crate, one response per line.
pub const BUNDLED_CORPUS: &str = include_str!("../data/corpus.txt");

#[derive(Debug, Error)]
pub enum DegradationError {
    #[error("response length must be at least 1 word")]
    ZeroLength,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("corpus needs at least 2 responses, found {0}")]
    CorpusTooSmall(usize),
    #[error("corpus exhausted: need {needed} words from other responses, only {available} available")]
    CorpusExhausted { needed: usize, available: usize },
    #[error("reading corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Whitespace-tokenized responses sampled by the degraded bot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseCorpus {
    pub responses: Vec<Vec<String>>,
    pub source_name: String,
}

impl ResponseCorpus {
    pub fn new(responses: Vec<Vec<String>>, source_name: impl Into<String>) -> Result<Self, DegradationError> {
        let responses: Vec<Vec<String>> = responses.into_iter().filter(|r| !r.is_empty()).collect();
        if responses.len() < 2 {
            return Err(DegradationError::CorpusTooSmall(responses.len()));
        }
        Ok(Self {
            responses,
            source_name: source_name.into(),
        })
    }

    /// Parses plain text with one response per line; blank lines are skipped.
    pub fn from_text(text: &str, source_name: impl Into<String>) -> Result<Self, DegradationError> {
        let responses = text
            .lines()
            .map(|l| l.split_whitespace().map(str::to_owned).collect::<Vec<_>>())
            .filter(|t| !t.is_empty())
            .collect();
        Self::new(responses, source_name)
    }

    pub fn from_file(path: &Path) -> Result<Self, DegradationError> {
        let text = std::fs::read_to_string(path).map_err(|source| DegradationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text, path.display().to_string())
    }

    pub fn bundled() -> Self {
        Self::from_text(BUNDLED_CORPUS, "bundled").expect("bundled corpus is valid")
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Responses joined back into lines of text.
    pub fn lines(&self) -> impl Iterator<Item = String> + '_ {
        self.responses.iter().map(|r| r.join(" "))
    }
}

/// Where a response of `n` words gets its `r`-word window replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistortionPlan {
    pub n: usize,
    pub r: usize,
    pub start: usize,
}

impl DistortionPlan {
    /// Inclusive range of valid window starts for a response of `n` words.
    fn start_range(n: usize, r: usize) -> (usize, usize) {
        if n >= 3 {
            (1, n - 1 - r)
        } else {
            (0, n - r)
        }
    }

    pub fn is_valid(&self) -> bool {
        if self.n == 0 || replacement_length(self.n).ok() != Some(self.r) {
            return false;
        }
        let (lo, hi) = Self::start_range(self.n, self.r);
        (lo..=hi).contains(&self.start)
    }
}

/// Number of words replaced in a response of `n` words.
pub fn replacement_length(n: usize) -> Result<usize, DegradationError> {
    Ok(match n {
        0 => return Err(DegradationError::ZeroLength),
        1..=3 => 1,
        4..=5 => 2,
        6..=8 => 3,
        9..=15 => 4,
        16..=29 => 5,
        _ => n / 5,
    })
}

/// Uniform draw over corpus entries; returns the tokens and their index.
pub fn sample_response<R: Rng + ?Sized>(
    corpus: &ResponseCorpus,
    rng: &mut R,
) -> Result<(Vec<String>, usize), DegradationError> {
    if corpus.responses.is_empty() {
        return Err(DegradationError::EmptyCorpus);
    }
    let idx = rng.random_range(0..corpus.responses.len());
    Ok((corpus.responses[idx].clone(), idx))
}

/// Picks the replacement window for a response of `n` words, uniformly over valid starts.
pub fn plan_distortion<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<DistortionPlan, DegradationError> {
    let r = replacement_length(n)?;
    let (lo, hi) = DistortionPlan::start_range(n, r);
    let start = rng.random_range(lo..=hi);
    Ok(DistortionPlan { n, r, start })
}

/// Replaces a window of `tokens` with an equally long span taken from another response.
///
/// `source` is the corpus index `tokens` came from, if any; the replacement span is
/// always drawn from a different entry. When the chosen entry is shorter than the
/// window, further distinct entries are appended until enough words are available.
pub fn distort<R: Rng + ?Sized>(
    tokens: &[String],
    source: Option<usize>,
    corpus: &ResponseCorpus,
    rng: &mut R,
) -> Result<Vec<String>, DegradationError> {
    let plan = plan_distortion(tokens.len(), rng)?;

    let mut donors: Vec<usize> = (0..corpus.responses.len())
        .filter(|&i| Some(i) != source)
        .collect();
    let available: usize = donors.iter().map(|&i| corpus.responses[i].len()).sum();
    if available < plan.r {
        return Err(DegradationError::CorpusExhausted {
            needed: plan.r,
            available,
        });
    }
    donors.shuffle(rng);

    let mut pool: Vec<&String> = Vec::new();
    for &i in &donors {
        pool.extend(corpus.responses[i].iter());
        if pool.len() >= plan.r {
            break;
        }
    }
    let offset = rng.random_range(0..=pool.len() - plan.r);

    let mut out = tokens.to_vec();
    for (k, word) in pool[offset..offset + plan.r].iter().enumerate() {
        out[plan.start + k] = (*word).clone();
    }
    Ok(out)
}

/// Produces the degraded bot's reply. The conversation history is deliberately ignored.
pub fn degraded_reply<R: Rng + ?Sized>(
    _history: &[Utterance],
    corpus: &ResponseCorpus,
    rng: &mut R,
) -> Result<String, DegradationError> {
    let (tokens, idx) = sample_response(corpus, rng)?;
    Ok(distort(&tokens, Some(idx), corpus, rng)?.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn toy_corpus() -> ResponseCorpus {
        ResponseCorpus::from_text(
            "i like to walk my dog in the park\n\nred green blue yellow\nthe weather is cold today\n",
            "toy",
        )
        .unwrap()
    }

    #[test]
    fn replacement_length_table() {
        assert_eq!(replacement_length(10).unwrap(), 4);
        assert_eq!(replacement_length(30).unwrap(), 6);
        assert_eq!(replacement_length(1).unwrap(), 1);
        assert_eq!(replacement_length(47).unwrap(), 9);
        assert!(matches!(replacement_length(0), Err(DegradationError::ZeroLength)));
    }

    #[test]
    fn forced_plans() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(plan_distortion(3, &mut rng).unwrap(), DistortionPlan { n: 3, r: 1, start: 1 });
            assert_eq!(plan_distortion(4, &mut rng).unwrap(), DistortionPlan { n: 4, r: 2, start: 1 });
            let p = plan_distortion(2, &mut rng).unwrap();
            assert_eq!(p.r, 1);
            assert!(p.start <= 1);
        }
    }

    #[test]
    fn plans_valid_for_all_lengths() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=1000 {
            for _ in 0..100 {
                let p = plan_distortion(n, &mut rng).unwrap();
                assert!(p.is_valid(), "{p:?}");
                if n >= 3 {
                    assert!(p.start >= 1 && p.start + p.r < n, "{p:?}");
                } else {
                    assert!(p.start + p.r <= n, "{p:?}");
                }
            }
        }
    }

    #[test]
    fn single_entry_sample() {
        let corpus = ResponseCorpus {
            responses: vec![words("only one")],
            source_name: "x".into(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_response(&corpus, &mut rng).unwrap(), (words("only one"), 0));
    }

    #[test]
    fn empty_corpus_rejected() {
        let corpus = ResponseCorpus {
            responses: vec![],
            source_name: "x".into(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_response(&corpus, &mut rng),
            Err(DegradationError::EmptyCorpus)
        ));
        assert!(matches!(
            ResponseCorpus::from_text("just one line\n\n", "x"),
            Err(DegradationError::CorpusTooSmall(1))
        ));
    }

    #[test]
    fn sample_frequencies_are_uniform() {
        let text: String = (0..10).map(|i| format!("response number {i}\n")).collect();
        let corpus = ResponseCorpus::from_text(&text, "ten").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            counts[sample_response(&corpus, &mut rng).unwrap().1] += 1;
        }
        // binomial(10000, 0.1): sd = 30
        for c in counts {
            assert!((c as f64 - 1000.0).abs() <= 90.0, "{counts:?}");
        }
    }

    #[test]
    fn distort_preserves_length_and_boundaries() {
        let corpus = ResponseCorpus::bundled();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tokens = words("a b c d e f g h i j");
        for _ in 0..1000 {
            let out = distort(&tokens, None, &corpus, &mut rng).unwrap();
            assert_eq!(out.len(), 10);
            assert_eq!(out[0], "a");
            assert_eq!(out[9], "j");
        }
    }

    #[test]
    fn single_word_is_fully_replaced() {
        let corpus = ResponseCorpus::from_text("alpha\nbeta\n", "two").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = distort(&words("alpha"), Some(0), &corpus, &mut rng).unwrap();
        assert_eq!(out, words("beta"));
    }

    #[test]
    fn short_donors_are_concatenated() {
        // window of 4 words, every other response has at most 2 words
        let corpus = ResponseCorpus::from_text("one two\nthree\nfour five\nsource line\n", "short").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tokens = words("w0 w1 w2 w3 w4 w5 w6 w7 w8 w9");
        let out = distort(&tokens, Some(3), &corpus, &mut rng).unwrap();
        assert_eq!(out.len(), 10);
        let replaced: Vec<&String> = out.iter().filter(|w| !w.starts_with('w')).collect();
        assert_eq!(replaced.len(), 4);
    }

    #[test]
    fn exhausted_corpus_errors() {
        let corpus = ResponseCorpus::from_text("tiny\nsource\n", "tiny").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tokens = words("a b c d e f g h i j");
        assert!(matches!(
            distort(&tokens, Some(1), &corpus, &mut rng),
            Err(DegradationError::CorpusExhausted { needed: 4, available: 1 })
        ));
    }

    #[test]
    fn replacement_comes_from_another_entry() {
        let corpus = toy_corpus();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let out = distort(&corpus.responses[1], Some(1), &corpus, &mut rng).unwrap();
            // "red green blue yellow": window of 2 in the interior, drawn from other lines
            assert_eq!(out[0], "red");
            assert_eq!(out[3], "yellow");
            assert!(out[1] != "green" || out[2] != "blue");
        }
    }

    #[test]
    fn reply_ignores_history_and_is_reproducible() {
        let corpus = ResponseCorpus::bundled();
        let history = vec![Utterance {
            speaker: crate::types::Speaker::User,
            text: "tell me about your day".into(),
            timestamp: 0,
        }];
        let a = degraded_reply(&history, &corpus, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = degraded_reply(&[], &corpus, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);

        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (sampled, _) = sample_response(&corpus, &mut rng).unwrap();
        assert_eq!(a.split_whitespace().count(), sampled.len());
    }
}
