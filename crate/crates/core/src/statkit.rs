//! Ranking, rank-sum testing, correlation and standardization.
//!
//! Every routine is generic over [`Scalar`] so the same code serves `f32` and `f64`
//! callers; the crate root re-exports `f64` aliases for the common case.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Pooled sample size up to which rank-sum p-values are computed exactly.
pub const EXACT_THRESHOLD: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatError {
    #[error("empty sample")]
    EmptySample,
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),
    #[error("insufficient ratings to standardize (need at least 2, got {0})")]
    InsufficientRatings(usize),
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("exact rank-sum p-values require tie-free samples")]
    TiesInExactTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// First sample tends to be smaller.
    Less,
    /// First sample tends to be larger.
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult<F> {
    /// Mann-Whitney U of the first sample.
    pub u_statistic: F,
    pub p_value: F,
    pub alternative: Alternative,
    pub method: TestMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary<F> {
    pub n: usize,
    pub mean: F,
    /// Population standard deviation (divisor `n`).
    pub std: F,
}

/// Result of z-standardizing a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized<F> {
    pub values: Vec<F>,
    /// Set when the sample had zero variance; `values` are then all zero.
    pub degenerate: bool,
}

fn check_finite<F: Scalar>(values: &[F]) -> Result<(), StatError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatError::NonFinite)
    }
}

pub fn mean<F: Scalar>(values: &[F]) -> Result<F, StatError> {
    if values.is_empty() {
        return Err(StatError::EmptySample);
    }
    let sum = values.iter().fold(F::zero(), |acc, &v| acc + v);
    Ok(sum / F::from_count(values.len()))
}

pub fn summarize<F: Scalar>(values: &[F]) -> Result<Summary<F>, StatError> {
    check_finite(values)?;
    let m = mean(values)?;
    let ss = values
        .iter()
        .fold(F::zero(), |acc, &v| acc + (v - m) * (v - m));
    let n = values.len();
    let all_equal = values.iter().all(|&v| v == values[0]);
    let std = if all_equal {
        F::zero()
    } else {
        (ss / F::from_count(n)).sqrt()
    };
    Ok(Summary { n, mean: m, std })
}

/// 1-based ranks, ties receiving the average of the ranks they span.
pub fn ranks_with_ties<F: Scalar>(values: &[F]) -> Result<Vec<F>, StatError> {
    if values.is_empty() {
        return Err(StatError::EmptySample);
    }
    check_finite(values)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));

    let mut ranks = vec![F::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1
        let avg = F::from_count(i + j + 2) / F::lit(2.0);
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    Ok(ranks)
}

/// Sizes of each group of tied values in `values` (groups of one included).
fn tie_groups<F: Scalar>(values: &[F]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        groups.push(j - i);
        i = j;
    }
    groups
}

/// Number of rank arrangements yielding each value of U for samples of size `n` and `m`.
///
/// Uses the recurrence `c(n, m, u) = c(n-1, m, u-m) + c(n, m-1, u)`: the largest
/// pooled observation either belongs to the first sample (contributing `m` to U) or not.
pub(crate) fn u_distribution(n: usize, m: usize) -> Vec<u64> {
    // table[i][j] is the count vector for sizes (i, j)
    let mut table: Vec<Vec<Vec<u64>>> = vec![vec![Vec::new(); m + 1]; n + 1];
    for i in 0..=n {
        for j in 0..=m {
            if i == 0 || j == 0 {
                table[i][j] = vec![1];
                continue;
            }
            let mut counts = vec![0u64; i * j + 1];
            for (u, c) in table[i - 1][j].iter().enumerate() {
                counts[u + j] += c;
            }
            for (u, c) in table[i][j - 1].iter().enumerate() {
                counts[u] += c;
            }
            table[i][j] = counts;
        }
    }
    std::mem::take(&mut table[n][m])
}

fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Wilcoxon rank-sum (Mann-Whitney U) test of `x` against `y`.
///
/// Tie-free samples with `|x| + |y| <= 20` get the exact permutation p-value;
/// everything else uses the tie-corrected normal approximation with a 0.5
/// continuity correction. A pooled sample with no variance yields `p = 1`.
pub fn rank_sum_test<F: Scalar>(
    x: &[F],
    y: &[F],
    alternative: Alternative,
) -> Result<TestResult<F>, StatError> {
    rank_sum(x, y, alternative, None)
}

/// [`rank_sum_test`] with the p-value method fixed by the caller. `Exact` fails on
/// samples with ties.
pub fn rank_sum_test_with<F: Scalar>(
    x: &[F],
    y: &[F],
    alternative: Alternative,
    method: TestMethod,
) -> Result<TestResult<F>, StatError> {
    rank_sum(x, y, alternative, Some(method))
}

fn rank_sum<F: Scalar>(
    x: &[F],
    y: &[F],
    alternative: Alternative,
    forced: Option<TestMethod>,
) -> Result<TestResult<F>, StatError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatError::EmptySample);
    }
    let n = x.len();
    let m = y.len();
    let pooled: Vec<F> = x.iter().chain(y.iter()).copied().collect();
    let ranks = ranks_with_ties(&pooled)?;
    let rank_sum_x: f64 = ranks[..n].iter().map(|r| r.as_f64()).sum();
    let u = rank_sum_x - (n * (n + 1)) as f64 / 2.0;

    let groups = tie_groups(&pooled);
    let has_ties = groups.iter().any(|&t| t > 1);

    let method = match forced {
        Some(TestMethod::Exact) if has_ties => return Err(StatError::TiesInExactTest),
        Some(method) => method,
        None if !has_ties && n + m <= EXACT_THRESHOLD => TestMethod::Exact,
        None => TestMethod::NormalApprox,
    };
    let p = match method {
        TestMethod::Exact => exact_p(n, m, u, alternative),
        TestMethod::NormalApprox => approx_p(n, m, u, &groups, alternative),
    };

    Ok(TestResult {
        u_statistic: F::lit(u),
        p_value: F::lit(p.clamp(0.0, 1.0)),
        alternative,
        method,
    })
}

fn exact_p(n: usize, m: usize, u: f64, alternative: Alternative) -> f64 {
    let dist = u_distribution(n, m);
    let total: u64 = dist.iter().sum();
    // u is integral when there are no ties
    let u = u.round() as usize;
    let lower: u64 = dist[..=u].iter().sum();
    let upper: u64 = dist[u..].iter().sum();
    let total = total as f64;
    match alternative {
        Alternative::Less => lower as f64 / total,
        Alternative::Greater => upper as f64 / total,
        Alternative::TwoSided => (2.0 * lower.min(upper) as f64 / total).min(1.0),
    }
}

fn approx_p(n: usize, m: usize, u: f64, groups: &[usize], alternative: Alternative) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    let big_n = nf + mf;
    let tie_term: f64 = groups
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum::<f64>()
        / (big_n * (big_n - 1.0));
    let variance = nf * mf / 12.0 * ((big_n + 1.0) - tie_term);
    if variance <= 0.0 {
        return 1.0;
    }
    let sd = variance.sqrt();
    let mu = nf * mf / 2.0;
    match alternative {
        Alternative::Less => standard_normal_cdf((u - mu + 0.5) / sd),
        Alternative::Greater => standard_normal_cdf(-(u - mu - 0.5) / sd),
        Alternative::TwoSided => {
            let z = ((u - mu).abs() - 0.5) / sd;
            (2.0 * standard_normal_cdf(-z)).min(1.0)
        }
    }
}

/// Pearson product-moment correlation.
pub fn pearson<F: Scalar>(x: &[F], y: &[F]) -> Result<F, StatError> {
    if x.len() != y.len() {
        return Err(StatError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatError::UndefinedCorrelation("fewer than two observations"));
    }
    check_finite(x)?;
    check_finite(y)?;
    let mx = mean(x)?;
    let my = mean(y)?;
    let (mut sxy, mut sxx, mut syy) = (F::zero(), F::zero(), F::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == F::zero() || syy == F::zero() {
        return Err(StatError::UndefinedCorrelation("zero variance"));
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-F::one()).min(F::one()))
}

/// Spearman rank correlation: Pearson over tie-averaged ranks.
pub fn spearman<F: Scalar>(x: &[F], y: &[F]) -> Result<F, StatError> {
    if x.len() != y.len() {
        return Err(StatError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatError::UndefinedCorrelation("fewer than two observations"));
    }
    pearson(&ranks_with_ties(x)?, &ranks_with_ties(y)?)
}

/// z-scores with the population standard deviation.
pub fn standardize<F: Scalar>(values: &[F]) -> Result<Standardized<F>, StatError> {
    if values.len() < 2 {
        return Err(StatError::InsufficientRatings(values.len()));
    }
    let s = summarize(values)?;
    if s.std == F::zero() {
        return Ok(Standardized {
            values: vec![F::zero(); values.len()],
            degenerate: true,
        });
    }
    Ok(Standardized {
        values: values.iter().map(|&v| (v - s.mean) / s.std).collect(),
        degenerate: false,
    })
}

/// Median of a sample; the mean of the two middle values for even sizes.
pub fn median<F: Scalar>(values: &[F]) -> Option<F> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / F::lit(2.0)
    })
}
