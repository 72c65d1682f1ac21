//! METEOR restricted to the exact-match stage (no stemming or synonym modules).

use serde::{Deserialize, Serialize};

use super::{MetricError, TokenizedPair};

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeteorAlignment {
    /// (candidate index, reference index) pairs sorted by candidate index.
    pub links: Vec<(usize, usize)>,
    pub chunks: usize,
}

/// Exact-match unigram alignment.
///
/// Every candidate word is linked while an unused identical reference word remains, so
/// the match count is maximal. Among the available reference positions the one that
/// extends the current chunk is preferred, otherwise the leftmost.
pub fn meteor_alignment(candidate: &[String], reference: &[String]) -> MeteorAlignment {
    let mut used = vec![false; reference.len()];
    let mut links: Vec<(usize, usize)> = Vec::new();
    for (i, word) in candidate.iter().enumerate() {
        let continues = links
            .last()
            .filter(|&&(ci, _)| ci + 1 == i)
            .map(|&(_, rj)| rj + 1)
            .filter(|&rj| rj < reference.len() && !used[rj] && &reference[rj] == word);
        let target = continues.or_else(|| {
            reference
                .iter()
                .enumerate()
                .position(|(j, w)| !used[j] && w == word)
        });
        if let Some(j) = target {
            used[j] = true;
            links.push((i, j));
        }
    }
    let chunks = count_chunks(&links);
    MeteorAlignment { links, chunks }
}

fn count_chunks(links: &[(usize, usize)]) -> usize {
    if links.is_empty() {
        return 0;
    }
    1 + links
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

fn meteor_single(candidate: &[String], reference: &[String]) -> f64 {
    let a = meteor_alignment(candidate, reference);
    let m = a.links.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let penalty = METEOR_GAMMA * (a.chunks as f64 / m as f64).powf(METEOR_BETA);
    fmean * (1.0 - penalty)
}

/// METEOR-exact, best over references.
pub fn meteor(pair: &TokenizedPair) -> Result<f64, MetricError> {
    pair.check()?;
    Ok(pair
        .references
        .iter()
        .map(|r| meteor_single(&pair.candidate, r))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_of_four_words() {
        let p = TokenizedPair::new("a b c d", &["a b c d"]);
        let a = meteor_alignment(&p.candidate, &p.references[0]);
        assert_eq!(a.chunks, 1);
        let expected = 1.0 * (1.0 - 0.5 / 64.0);
        assert!((meteor(&p).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn identity_approaches_one() {
        let long: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
        let s = long.join(" ");
        let v = meteor(&TokenizedPair::new(&s, &[&s])).unwrap();
        assert!(v > 0.99999 && v < 1.0);
        assert!(v >= 1.0 - METEOR_GAMMA);
    }

    #[test]
    fn zero_overlap() {
        assert_eq!(meteor(&TokenizedPair::new("a b", &["c d"])).unwrap(), 0.0);
    }

    #[test]
    fn reversed_order_is_penalised() {
        let id = meteor(&TokenizedPair::new("a b c d", &["a b c d"])).unwrap();
        let rev_pair = TokenizedPair::new("d c b a", &["a b c d"]);
        let a = meteor_alignment(&rev_pair.candidate, &rev_pair.references[0]);
        assert_eq!(a.links.len(), 4);
        assert_eq!(a.chunks, 4);
        let rev = meteor(&rev_pair).unwrap();
        // same Fmean (= 1), penalty 0.5 * 1^3
        assert!((rev - 0.5).abs() < 1e-12);
        assert!(rev < id);
    }

    #[test]
    fn repeated_words_prefer_contiguous_links() {
        // the second "the" should link to the reference "the" that continues "on"
        let p = TokenizedPair::new("sat on the mat", &["the cat sat on the mat"]);
        let a = meteor_alignment(&p.candidate, &p.references[0]);
        assert_eq!(a.links, vec![(0, 2), (1, 3), (2, 4), (3, 5)]);
        assert_eq!(a.chunks, 1);
    }
}
