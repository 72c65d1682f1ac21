use serde::{Deserialize, Serialize};

use super::{MetricError, TokenizedPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeL {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when candidate and reference were both empty.
    pub degenerate: bool,
}

/// Longest common subsequence length by dynamic programming.
pub fn lcs_length(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn rouge_single(cand: &[String], reference: &[String]) -> RougeL {
    if cand.is_empty() && reference.is_empty() {
        return RougeL {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            degenerate: true,
        };
    }
    let l = lcs_length(cand, reference) as f64;
    let precision = if cand.is_empty() { 0.0 } else { l / cand.len() as f64 };
    let recall = if reference.is_empty() { 0.0 } else { l / reference.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    RougeL {
        precision,
        recall,
        f1,
        degenerate: false,
    }
}

/// ROUGE-L with beta = 1; with several references the best F1 is kept.
pub fn rouge_l(pair: &TokenizedPair) -> Result<RougeL, MetricError> {
    pair.check()?;
    Ok(pair
        .references
        .iter()
        .map(|r| rouge_single(&pair.candidate, r))
        .max_by(|a, b| a.f1.total_cmp(&b.f1))
        .expect("at least one reference"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let id = rouge_l(&TokenizedPair::new("a b c", &["a b c"])).unwrap();
        assert_eq!((id.precision, id.recall, id.f1), (1.0, 1.0, 1.0));

        let p = TokenizedPair::new("police kill the gunman", &["police killed the gunman"]);
        assert_eq!(lcs_length(&p.candidate, &p.references[0]), 3);
        let r = rouge_l(&p).unwrap();
        assert!((r.precision - 0.75).abs() < 1e-12);
        assert!((r.recall - 0.75).abs() < 1e-12);
        assert!((r.f1 - 0.75).abs() < 1e-12);

        let d = rouge_l(&TokenizedPair::new("x y", &["a b c"])).unwrap();
        assert_eq!((d.precision, d.recall, d.f1), (0.0, 0.0, 0.0));

        let e = rouge_l(&TokenizedPair::new("", &[""])).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.f1, 0.0);
    }

    #[test]
    fn best_reference_wins() {
        let r = rouge_l(&TokenizedPair::new("a b c", &["x y z", "a b c"])).unwrap();
        assert_eq!(r.f1, 1.0);
    }
}
