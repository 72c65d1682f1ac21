use serde::{Deserialize, Serialize};

use super::{ngram_counts, MetricError, TokenizedPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuOptions {
    /// Highest n-gram order, 1 or 4 in practice.
    pub max_n: usize,
    /// Add-one smoothing of precisions for orders above 1.
    pub smoothing: bool,
}

impl BleuOptions {
    pub fn new(max_n: usize) -> Self {
        Self {
            max_n,
            smoothing: false,
        }
    }

    pub fn smoothed(max_n: usize) -> Self {
        Self {
            max_n,
            smoothing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bleu {
    pub score: f64,
    /// Clipped matches and candidate n-gram totals per order.
    pub precisions: Vec<(usize, usize)>,
    pub brevity_penalty: f64,
    pub candidate_length: usize,
    pub reference_length: usize,
}

/// Clipped n-gram matches of one pair: each candidate n-gram is credited at most as
/// often as it occurs in any single reference.
pub fn modified_precision(pair: &TokenizedPair, n: usize) -> (usize, usize) {
    let cand = ngram_counts(&pair.candidate, n);
    let mut max_ref: std::collections::BTreeMap<&[String], usize> = Default::default();
    for r in &pair.references {
        for (g, c) in ngram_counts(r, n) {
            let e = max_ref.entry(g).or_insert(0);
            *e = (*e).max(c);
        }
    }
    let matched = cand
        .iter()
        .map(|(g, c)| (*c).min(*max_ref.get(g).unwrap_or(&0)))
        .sum();
    let total = cand.values().sum();
    (matched, total)
}

/// Reference length closest to the candidate length, preferring the shorter on ties.
fn closest_ref_len(pair: &TokenizedPair) -> usize {
    let c = pair.candidate.len() as i64;
    pair.references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| ((l as i64 - c).abs(), l))
        .unwrap_or(0)
}

/// Corpus-level BLEU.
pub fn bleu(corpus: &[TokenizedPair], options: BleuOptions) -> Result<Bleu, MetricError> {
    if corpus.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if options.max_n == 0 {
        return Err(MetricError::BadOrder(0));
    }
    let mut precisions = vec![(0usize, 0usize); options.max_n];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for pair in corpus {
        pair.check()?;
        cand_len += pair.candidate.len();
        ref_len += closest_ref_len(pair);
        for (k, acc) in precisions.iter_mut().enumerate() {
            let (m, t) = modified_precision(pair, k + 1);
            acc.0 += m;
            acc.1 += t;
        }
    }

    let brevity_penalty = if cand_len == 0 {
        0.0
    } else if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };

    let mut log_sum = 0.0;
    let mut zero = cand_len == 0;
    for (k, &(m, t)) in precisions.iter().enumerate() {
        let p = if options.smoothing && k > 0 {
            (m as f64 + 1.0) / (t as f64 + 1.0)
        } else if t == 0 {
            0.0
        } else {
            m as f64 / t as f64
        };
        if p == 0.0 {
            zero = true;
            break;
        }
        log_sum += p.ln();
    }
    let score = if zero {
        0.0
    } else {
        brevity_penalty * (log_sum / options.max_n as f64).exp()
    };
    Ok(Bleu {
        score,
        precisions,
        brevity_penalty,
        candidate_length: cand_len,
        reference_length: ref_len,
    })
}

pub fn sentence_bleu(pair: &TokenizedPair, options: BleuOptions) -> Result<Bleu, MetricError> {
    bleu(std::slice::from_ref(pair), options)
}
