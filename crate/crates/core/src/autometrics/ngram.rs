//! Add-k smoothed trigram language model used as the default likelihood scorer.

use std::collections::{BTreeSet, HashMap};

use super::fed::{LikelihoodScorer, ScorerError};
use super::tokenize;
use crate::types::Utterance;

const BOS: &str = "<s>";
const EOS: &str = "</s>";

type Trigram = (String, String, String);
type Bigram = (String, String);

/// Trigram model with add-k smoothing. The conversation being scored is folded into the
/// counts as extra training text, so the model adapts to what was said.
#[derive(Debug, Clone)]
pub struct NgramScorer {
    k: f64,
    trigrams: HashMap<Trigram, usize>,
    histories: HashMap<Bigram, usize>,
    vocab: BTreeSet<String>,
}

fn padded(tokens: Vec<String>) -> Vec<String> {
    let mut v = vec![BOS.to_string(), BOS.to_string()];
    v.extend(tokens);
    v.push(EOS.to_string());
    v
}

fn count_into(
    seq: &[String],
    trigrams: &mut HashMap<Trigram, usize>,
    histories: &mut HashMap<Bigram, usize>,
) {
    for w in seq.windows(3) {
        *trigrams
            .entry((w[0].clone(), w[1].clone(), w[2].clone()))
            .or_insert(0) += 1;
        *histories.entry((w[0].clone(), w[1].clone())).or_insert(0) += 1;
    }
}

impl NgramScorer {
    pub const DEFAULT_K: f64 = 0.5;

    pub fn train<'a>(lines: impl IntoIterator<Item = &'a str>, k: f64) -> Self {
        let mut trigrams = HashMap::new();
        let mut histories = HashMap::new();
        let mut vocab = BTreeSet::new();
        for line in lines {
            let tokens = tokenize(line);
            if tokens.is_empty() {
                continue;
            }
            vocab.extend(tokens.iter().cloned());
            count_into(&padded(tokens), &mut trigrams, &mut histories);
        }
        vocab.insert(EOS.to_string());
        Self {
            k,
            trigrams,
            histories,
            vocab,
        }
    }

    /// Trained on the bundled response corpus with add-0.5 smoothing.
    pub fn bundled() -> Self {
        Self::train(crate::degradation::BUNDLED_CORPUS.lines(), Self::DEFAULT_K)
    }

    /// Log-probability of `tokens` as one utterance after `context`.
    pub fn score(&self, tokens: &[String], context: &[Utterance]) -> f64 {
        let mut ctx_tri = HashMap::new();
        let mut ctx_hist = HashMap::new();
        let mut vocab: BTreeSet<&str> = self.vocab.iter().map(String::as_str).collect();
        let ctx_tokens: Vec<Vec<String>> = context.iter().map(|u| tokenize(&u.text)).collect();
        for t in &ctx_tokens {
            vocab.extend(t.iter().map(String::as_str));
            count_into(&padded(t.clone()), &mut ctx_tri, &mut ctx_hist);
        }
        vocab.extend(tokens.iter().map(String::as_str));
        let v = vocab.len() as f64;

        let seq = padded(tokens.to_vec());
        let mut ll = 0.0;
        for w in seq.windows(3) {
            let tri = (w[0].clone(), w[1].clone(), w[2].clone());
            let hist = (w[0].clone(), w[1].clone());
            let c3 = self.trigrams.get(&tri).unwrap_or(&0) + ctx_tri.get(&tri).unwrap_or(&0);
            let c2 = self.histories.get(&hist).unwrap_or(&0) + ctx_hist.get(&hist).unwrap_or(&0);
            ll += ((c3 as f64 + self.k) / (c2 as f64 + self.k * v)).ln();
        }
        ll
    }
}

impl LikelihoodScorer for NgramScorer {
    fn log_likelihood(&self, response: &[String], context: &[Utterance]) -> Result<f64, ScorerError> {
        Ok(self.score(response, context))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autometrics::{fed_scores, FedConfig};
    use crate::types::{Criterion, Speaker};

    fn conversation(lines: &[(&str, &str)]) -> Vec<Utterance> {
        lines
            .iter()
            .enumerate()
            .flat_map(|(i, (user, bot))| {
                [
                    Utterance {
                        speaker: Speaker::User,
                        text: user.to_string(),
                        timestamp: 2 * i as i64,
                    },
                    Utterance {
                        speaker: Speaker::Bot,
                        text: bot.to_string(),
                        timestamp: 2 * i as i64 + 1,
                    },
                ]
            })
            .collect()
    }

    #[test]
    fn probabilities_normalise_over_vocab() {
        let lm = NgramScorer::train(["a b", "a c"], 0.5);
        let ctx = [];
        // after <s> <s> every vocabulary word (a, b, c, </s>) sums to 1
        let total: f64 = ["a", "b", "c"]
            .iter()
            .map(|w| {
                let seq = padded(vec![w.to_string()]);
                let tri = (seq[0].clone(), seq[1].clone(), seq[2].clone());
                let c3 = *lm.trigrams.get(&tri).unwrap_or(&0) as f64;
                let c2 = *lm.histories.get(&(seq[0].clone(), seq[1].clone())).unwrap_or(&0) as f64;
                (c3 + 0.5) / (c2 + 0.5 * lm.vocab.len() as f64)
            })
            .sum::<f64>()
            + 0.5 / (2.0 + 0.5 * lm.vocab.len() as f64);
        assert!((total - 1.0).abs() < 1e-12);
        assert!(lm.score(&tokenize("a b"), &ctx) < 0.0);
    }

    #[test]
    fn deterministic_and_prefers_seen_text() {
        let lm = NgramScorer::bundled();
        let seen = tokenize("i love coffee , i drink three cups a day .");
        let unseen = tokenize("coffee day three love i a cups drink , i .");
        assert_eq!(lm.score(&seen, &[]), lm.score(&seen, &[]));
        assert!(lm.score(&seen, &[]) > lm.score(&unseen, &[]));
    }

    #[test]
    fn repetition_complaints_raise_repetitive_signal() {
        let lm = NgramScorer::bundled();
        let cfg = FedConfig::default();
        let repetitive = conversation(&[
            ("hi , what do you like ?", "i like to ski ."),
            ("cool , anything else ?", "i like to ski ."),
            ("you keep saying the same thing .", "i like to ski ."),
            ("why are you repeating yourself ?", "i like to ski ."),
            ("stop repeating yourself please .", "i like to ski ."),
        ]);
        let varied = conversation(&[
            ("hi , what do you like ?", "i like to ski ."),
            ("cool , anything else ?", "i also paint landscapes on weekends ."),
            ("what do you paint ?", "mostly mountains and lakes near my town ."),
            ("do you sell them ?", "sometimes at the local market in summer ."),
            ("that sounds lovely .", "thanks , what about your hobbies ?"),
        ]);
        let rep = fed_scores(&repetitive, &lm, &cfg).unwrap()[&Criterion::Repetitive];
        let var = fed_scores(&varied, &lm, &cfg).unwrap()[&Criterion::Repetitive];
        // higher score means less repetitive
        assert!(rep < var, "repetitive {rep} vs varied {var}");
    }
}
