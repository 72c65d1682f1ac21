use serde::{Deserialize, Serialize};

use super::{ngram_counts, MetricError, TokenizedPair};

/// Pooled n-gram counts over orders 1..=max_n for one candidate/reference pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GleuCounts {
    pub matches: usize,
    pub candidate_total: usize,
    pub reference_total: usize,
}

impl GleuCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.matches, self.candidate_total)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.matches, self.reference_total)
    }

    pub fn score(&self) -> f64 {
        self.precision().min(self.recall())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn gleu_counts(candidate: &[String], reference: &[String], max_n: usize) -> GleuCounts {
    let mut out = GleuCounts {
        matches: 0,
        candidate_total: 0,
        reference_total: 0,
    };
    for n in 1..=max_n {
        let c = ngram_counts(candidate, n);
        let r = ngram_counts(reference, n);
        out.matches += c
            .iter()
            .map(|(g, k)| (*k).min(*r.get(g).unwrap_or(&0)))
            .sum::<usize>();
        out.candidate_total += c.values().sum::<usize>();
        out.reference_total += r.values().sum::<usize>();
    }
    out
}

/// Sentence GLEU: min of pooled n-gram precision and recall, best over references.
pub fn gleu(pair: &TokenizedPair, max_n: usize) -> Result<f64, MetricError> {
    pair.check()?;
    if max_n == 0 {
        return Err(MetricError::BadOrder(0));
    }
    Ok(pair
        .references
        .iter()
        .map(|r| gleu_counts(&pair.candidate, r, max_n).score())
        .fold(0.0, f64::max))
}

/// Corpus GLEU: counts summed over pairs (first reference of each) before taking the min.
pub fn corpus_gleu(corpus: &[TokenizedPair], max_n: usize) -> Result<f64, MetricError> {
    if corpus.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut total = GleuCounts {
        matches: 0,
        candidate_total: 0,
        reference_total: 0,
    };
    for pair in corpus {
        pair.check()?;
        let c = gleu_counts(&pair.candidate, &pair.references[0], max_n);
        total.matches += c.matches;
        total.candidate_total += c.candidate_total;
        total.reference_total += c.reference_total;
    }
    Ok(total.score())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(gleu(&TokenizedPair::new("a b c d", &["a b c d"]), 4).unwrap(), 1.0);
        // "a b" vs "a b c": matches 2 + 1 = 3, cand 3, ref 3 + 2 + 1 = 6
        let p = TokenizedPair::new("a b", &["a b c"]);
        let c = gleu_counts(&p.candidate, &p.references[0], 4);
        assert_eq!(c, GleuCounts { matches: 3, candidate_total: 3, reference_total: 6 });
        assert_eq!(c.precision(), 1.0);
        assert_eq!(gleu(&p, 4).unwrap(), 0.5);
        assert_eq!(gleu(&TokenizedPair::new("x y", &["a b"]), 4).unwrap(), 0.0);
    }

    #[test]
    fn swapping_roles_keeps_min() {
        let a = TokenizedPair::new("the cat sat on a mat", &["a cat sat on the mat"]);
        let b = TokenizedPair::new("a cat sat on the mat", &["the cat sat on a mat"]);
        let ca = gleu_counts(&a.candidate, &a.references[0], 4);
        let cb = gleu_counts(&b.candidate, &b.references[0], 4);
        assert_eq!(ca.precision(), cb.recall());
        assert_eq!(ca.recall(), cb.precision());
        assert_eq!(gleu(&a, 4).unwrap(), gleu(&b, 4).unwrap());
    }
}
