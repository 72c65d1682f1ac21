//! Worker consistency filtering.
//!
//! Each worker's reversed ratings are split into those given to the degraded system and
//! those given to genuine systems. A one-sided rank-sum test checks whether the degraded
//! ratings are lower; workers with `p >= alpha` are removed from all later analysis.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::statkit::{self, Alternative, StatError};
use crate::types::{EvaluationRun, Rating, SlotRole, WorkerId};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QcError {
    #[error("unfilterable worker {0}: no ratings of the quality-control system")]
    NoDegradedRatings(WorkerId),
    #[error("unfilterable worker {0}: no ratings of genuine systems")]
    NoGenuineRatings(WorkerId),
    #[error("worker {worker}: {source}")]
    Stat {
        worker: WorkerId,
        #[source]
        source: StatError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerRecord {
    pub worker_id: WorkerId,
    pub degraded_values: Vec<f64>,
    pub genuine_values: Vec<f64>,
    pub p_value: f64,
    pub passed: bool,
}

/// Tests one worker's ratings. Values are reversed before pooling across criteria.
pub fn worker_consistency(
    worker_id: &WorkerId,
    ratings: &[(&Rating, SlotRole)],
    alpha: f64,
) -> Result<WorkerRecord, QcError> {
    let mut degraded_values = Vec::new();
    let mut genuine_values = Vec::new();
    for (r, role) in ratings {
        match role {
            SlotRole::Degraded => degraded_values.push(r.reversed_value()),
            SlotRole::Genuine => genuine_values.push(r.reversed_value()),
        }
    }
    if degraded_values.is_empty() {
        return Err(QcError::NoDegradedRatings(worker_id.clone()));
    }
    if genuine_values.is_empty() {
        return Err(QcError::NoGenuineRatings(worker_id.clone()));
    }
    let test = statkit::rank_sum_test(&degraded_values, &genuine_values, Alternative::Less)
        .map_err(|source| QcError::Stat {
            worker: worker_id.clone(),
            source,
        })?;
    Ok(WorkerRecord {
        worker_id: worker_id.clone(),
        degraded_values,
        genuine_values,
        p_value: test.p_value,
        passed: test.p_value < alpha,
    })
}

/// Per-worker filter decisions for a whole run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub passed: Vec<WorkerRecord>,
    pub failed: Vec<WorkerRecord>,
    /// Workers whose ratings could not be tested; excluded like failed workers.
    pub unfilterable: Vec<WorkerId>,
    /// Passed over all workers with ratings; `None` when the run has no rated workers.
    pub pass_rate: Option<f64>,
}

impl FilterOutcome {
    pub fn passed_ids(&self) -> BTreeSet<WorkerId> {
        self.passed.iter().map(|w| w.worker_id.clone()).collect()
    }

    pub fn worker_count(&self) -> usize {
        self.passed.len() + self.failed.len() + self.unfilterable.len()
    }

    pub fn record(&self, worker: &WorkerId) -> Option<&WorkerRecord> {
        self.passed
            .iter()
            .chain(&self.failed)
            .find(|w| &w.worker_id == worker)
    }
}

pub fn filter_run(run: &EvaluationRun, alpha: f64) -> FilterOutcome {
    let mut outcome = FilterOutcome::default();
    for (worker, ratings) in run.ratings_by_worker() {
        match worker_consistency(&worker, &ratings, alpha) {
            Ok(rec) if rec.passed => outcome.passed.push(rec),
            Ok(rec) => outcome.failed.push(rec),
            Err(_) => outcome.unfilterable.push(worker),
        }
    }
    let total = outcome.worker_count();
    outcome.pass_rate = (total > 0).then(|| outcome.passed.len() as f64 / total as f64);
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Criterion, Rating};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ratings_for(degraded: &[f64], genuine: &[f64]) -> Vec<(Rating, SlotRole)> {
        let mk = |v: f64, i: usize, role| {
            (
                Rating {
                    worker_id: "w".into(),
                    hit_id: "h".into(),
                    conversation_id: format!("c{i}").into(),
                    system_id: "s".into(),
                    criterion: Criterion::Interesting,
                    raw_value: v,
                },
                role,
            )
        };
        degraded
            .iter()
            .enumerate()
            .map(|(i, &v)| mk(v, i, SlotRole::Degraded))
            .chain(
                genuine
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| mk(v, i + 1000, SlotRole::Genuine)),
            )
            .collect()
    }

    fn check(degraded: &[f64], genuine: &[f64]) -> Result<WorkerRecord, QcError> {
        let owned = ratings_for(degraded, genuine);
        let borrowed: Vec<(&Rating, SlotRole)> = owned.iter().map(|(r, s)| (r, *s)).collect();
        worker_consistency(&"w".into(), &borrowed, DEFAULT_ALPHA)
    }

    #[test]
    fn perfect_discriminator_passes() {
        let rec = check(&[5.0; 7], &[80.0; 35]).unwrap();
        assert!(rec.p_value < 0.001, "{}", rec.p_value);
        assert!(rec.passed);
    }

    #[test]
    fn constant_rater_fails() {
        let rec = check(&[50.0; 7], &[50.0; 35]).unwrap();
        assert_eq!(rec.p_value, 1.0);
        assert!(!rec.passed);
    }

    #[test]
    fn worker_without_degraded_ratings_is_unfilterable() {
        assert_eq!(
            check(&[], &[80.0; 35]).unwrap_err(),
            QcError::NoDegradedRatings("w".into())
        );
    }

    #[test]
    fn negative_criteria_are_reversed_before_testing() {
        // a good rater marks the degraded bot as very robotic (high raw value)
        let mut owned = ratings_for(&[95.0; 7], &[10.0; 35]);
        for (r, _) in &mut owned {
            r.criterion = Criterion::Robotic;
        }
        let borrowed: Vec<(&Rating, SlotRole)> = owned.iter().map(|(r, s)| (r, *s)).collect();
        let rec = worker_consistency(&"w".into(), &borrowed, DEFAULT_ALPHA).unwrap();
        assert!(rec.passed);
        assert_eq!(rec.degraded_values, vec![5.0; 7]);
    }

    #[test]
    fn random_clickers_pass_at_about_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut passed = 0;
        for _ in 0..1000 {
            let d: Vec<f64> = (0..7).map(|_| rng.random_range(0.0..=100.0)).collect();
            let g: Vec<f64> = (0..35).map(|_| rng.random_range(0.0..=100.0)).collect();
            if check(&d, &g).unwrap().passed {
                passed += 1;
            }
        }
        let rate = passed as f64 / 1000.0;
        assert!((rate - 0.05).abs() <= 0.02, "pass rate {rate}");
    }

    #[test]
    fn monotone_transform_keeps_decision() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let d: Vec<f64> = (0..7).map(|_| rng.random_range(0.0..60.0)).collect();
            let g: Vec<f64> = (0..35).map(|_| rng.random_range(20.0..100.0)).collect();
            let f = |v: &f64| (v / 100.0).powi(3) * 100.0;
            let a = check(&d, &g).unwrap();
            let b = check(&d.iter().map(f).collect::<Vec<_>>(), &g.iter().map(f).collect::<Vec<_>>()).unwrap();
            assert_eq!(a.passed, b.passed);
            assert!((a.p_value - b.p_value).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_run_has_undefined_pass_rate() {
        let out = filter_run(&EvaluationRun::default(), DEFAULT_ALPHA);
        assert!(out.passed.is_empty() && out.failed.is_empty());
        assert_eq!(out.pass_rate, None);
    }
}
