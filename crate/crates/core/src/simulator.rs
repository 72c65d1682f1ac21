//! Synthetic assessors for desk-scale validation of the pipeline.
//!
//! Consistent workers rate `clamp(a + b*q + e, 0, 100)` on the oriented scale, where `q`
//! is the latent quality of the system on that criterion, `a` and `b` are the worker's
//! bias and scale and `e` is per-rating noise; negative criteria are then flipped so the
//! pipeline's reversal has something to undo. Random clickers rate uniformly. The output
//! is an ordinary event log, so analysis shares the replay path with the live service.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{self, Event, EventRecord, LogError, SessionMode};
use crate::hit::{assemble_hit, HitError};
use crate::report::{analyze_run, AnalysisReport};
use crate::scoring::{self, Replication};
use crate::types::{
    ConversationId, Criterion, EvaluationRun, HitId, Speaker, SystemId, TopicOpinion, WorkerId,
    MIN_USER_INPUTS, SCALE_MAX, SCALE_MIN,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Hit(#[from] HitError),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSystem {
    pub system_id: SystemId,
    /// Latent quality per criterion on the oriented 0-100 scale (higher is better).
    pub quality: BTreeMap<Criterion, f64>,
}

impl LatentSystem {
    pub fn uniform(id: &str, quality: f64) -> Self {
        Self {
            system_id: id.into(),
            quality: Criterion::ALL.iter().map(|&c| (c, quality)).collect(),
        }
    }

    pub fn overall(&self) -> f64 {
        self.quality.values().sum::<f64>() / self.quality.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RaterModel {
    pub bias_sd: f64,
    pub scale_mean: f64,
    pub scale_sd: f64,
    /// Scale draws below this are redrawn.
    pub scale_min: f64,
    pub noise_sd: f64,
}

impl Default for RaterModel {
    fn default() -> Self {
        Self {
            bias_sd: 10.0,
            scale_mean: 1.0,
            scale_sd: 0.15,
            scale_min: 0.2,
            noise_sd: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkerPopulation {
    pub consistent: usize,
    pub random_clickers: usize,
}

impl Default for WorkerPopulation {
    fn default() -> Self {
        Self {
            consistent: 200,
            random_clickers: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatentConfig {
    pub systems: Vec<LatentSystem>,
    pub degraded_system_id: SystemId,
    pub degraded_quality: f64,
    pub workers: WorkerPopulation,
    pub rater: RaterModel,
    pub hits_per_worker: usize,
    pub seed: u64,
    /// Timestamp of the first simulated session, ms since the Unix epoch.
    pub start_timestamp: i64,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self {
            systems: [("A", 70.0), ("B", 60.0), ("C", 50.0), ("D", 40.0), ("E", 30.0)]
                .iter()
                .map(|(id, q)| LatentSystem::uniform(id, *q))
                .collect(),
            degraded_system_id: "QC".into(),
            degraded_quality: 15.0,
            workers: WorkerPopulation::default(),
            rater: RaterModel::default(),
            hits_per_worker: 1,
            seed: 20210801,
            start_timestamp: 1_600_000_000_000,
        }
    }
}

impl LatentConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.systems.len() < crate::types::GENUINE_PER_HIT {
            return bad(format!(
                "need at least {} systems, got {}",
                crate::types::GENUINE_PER_HIT,
                self.systems.len()
            ));
        }
        let in_range = |q: f64| (SCALE_MIN..=SCALE_MAX).contains(&q);
        for s in &self.systems {
            if s.system_id == self.degraded_system_id {
                return bad(format!("system {} reuses the degraded system id", s.system_id));
            }
            for c in Criterion::ALL {
                match s.quality.get(&c) {
                    None => return bad(format!("system {} lacks a quality for {c}", s.system_id)),
                    Some(&q) if !in_range(q) => {
                        return bad(format!("system {} quality {q} for {c} outside [0, 100]", s.system_id))
                    }
                    _ => {}
                }
            }
        }
        if !in_range(self.degraded_quality) {
            return bad(format!("degraded quality {} outside [0, 100]", self.degraded_quality));
        }
        let r = &self.rater;
        if [r.bias_sd, r.scale_sd, r.noise_sd].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("rater standard deviations must be finite and non-negative".into());
        }
        if !(r.scale_min > 0.0 && r.scale_mean >= r.scale_min) {
            return bad("rater scale_mean must be at least scale_min, which must be positive".into());
        }
        if self.hits_per_worker == 0 {
            return bad("hits_per_worker must be positive".into());
        }
        if self.workers.consistent + self.workers.random_clickers == 0 {
            return bad("worker population is empty".into());
        }
        Ok(())
    }

    fn quality(&self, system: &SystemId, criterion: Criterion) -> f64 {
        self.systems
            .iter()
            .find(|s| &s.system_id == system)
            .map_or(self.degraded_quality, |s| s.quality[&criterion])
    }

    /// Copy of the config with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WorkerKind {
    Consistent,
    RandomClicker,
}

/// SplitMix64 finalizer, used to derive independent per-worker seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TOPICS: [&str; 9] = [
    "rainbow", "football", "flower", "candy", "coffee", "house", "snow", "dog", "cat",
];

const OPINIONS: [TopicOpinion; 3] = [
    TopicOpinion::Liked,
    TopicOpinion::Ambivalent,
    TopicOpinion::Disliked,
];

struct Clock(i64);

impl Clock {
    fn tick(&mut self, ms: i64) -> i64 {
        self.0 += ms;
        self.0
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Generates the event log of one simulated run.
pub fn simulate_log(config: &LatentConfig) -> Result<Vec<EventRecord>, SimError> {
    config.validate()?;
    let genuine: Vec<SystemId> = config.systems.iter().map(|s| s.system_id.clone()).collect();
    let total = config.workers.consistent + config.workers.random_clickers;
    let mut events: Vec<(i64, Event)> = Vec::new();

    for w in 0..total {
        let kind = if w < config.workers.consistent {
            WorkerKind::Consistent
        } else {
            WorkerKind::RandomClicker
        };
        let worker_id = WorkerId::new(format!("w{w:05}"));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, w as u64));

        let r = &config.rater;
        let bias = Normal::new(0.0, r.bias_sd).expect("validated sd").sample(&mut rng);
        let scale_dist = Normal::new(r.scale_mean, r.scale_sd).expect("validated sd");
        let scale = loop {
            let b = scale_dist.sample(&mut rng);
            if b >= r.scale_min {
                break b;
            }
        };
        let noise = Normal::new(0.0, r.noise_sd).expect("validated sd");

        for h in 0..config.hits_per_worker {
            let session_index = (w * config.hits_per_worker + h) as i64;
            let mut clock = Clock(config.start_timestamp + session_index * 3_600_000);
            let session_id = format!("sim-{w:05}-{h}");
            let hit = assemble_hit(
                HitId::new(session_id.clone()),
                worker_id.clone(),
                &genuine,
                &config.degraded_system_id,
                &mut rng,
            )?;
            events.push((
                clock.tick(0),
                Event::SessionStarted {
                    session_id: session_id.clone(),
                    worker_id: worker_id.clone(),
                    mode: SessionMode::FreeTopic,
                    hit: hit.clone(),
                },
            ));
            for (slot, system) in hit.slots.iter().enumerate() {
                let topic = TOPICS[rng.random_range(0..TOPICS.len())];
                events.push((
                    clock.tick(1_000),
                    Event::ConversationStarted {
                        session_id: session_id.clone(),
                        slot,
                        conversation_id: ConversationId::new(format!("{session_id}-{slot}")),
                        system_id: system.clone(),
                        ice_breaker: None,
                    },
                ));
                events.push((
                    clock.tick(5_000),
                    Event::TopicSet {
                        session_id: session_id.clone(),
                        slot,
                        topic: topic.to_string(),
                    },
                ));
                for turn in 0..MIN_USER_INPUTS {
                    events.push((
                        clock.tick(rng.random_range(8_000..20_000)),
                        Event::Utterance {
                            session_id: session_id.clone(),
                            slot,
                            speaker: Speaker::User,
                            text: format!("simulated input {turn} about {topic}"),
                        },
                    ));
                    events.push((
                        clock.tick(rng.random_range(1_000..4_000)),
                        Event::Utterance {
                            session_id: session_id.clone(),
                            slot,
                            speaker: Speaker::Bot,
                            text: format!("simulated reply {turn}"),
                        },
                    ));
                }
                let ratings: BTreeMap<Criterion, f64> = Criterion::ALL
                    .iter()
                    .map(|&c| {
                        let v = match kind {
                            WorkerKind::Consistent => {
                                let q = config.quality(system, c);
                                let oriented = (bias + scale * q + noise.sample(&mut rng))
                                    .clamp(SCALE_MIN, SCALE_MAX);
                                c.orient(oriented)
                            }
                            WorkerKind::RandomClicker => rng.random_range(SCALE_MIN..=SCALE_MAX),
                        };
                        (c, round2(v))
                    })
                    .collect();
                events.push((
                    clock.tick(30_000),
                    Event::RatingsSubmitted {
                        session_id: session_id.clone(),
                        slot,
                        ratings,
                    },
                ));
                events.push((
                    clock.tick(2_000),
                    Event::TopicOpinion {
                        session_id: session_id.clone(),
                        slot,
                        opinion: OPINIONS[rng.random_range(0..OPINIONS.len())],
                    },
                ));
            }
            events.push((
                clock.tick(10_000),
                Event::Feedback {
                    session_id: session_id.clone(),
                    text: String::new(),
                },
            ));
            events.push((clock.tick(0), Event::SessionCompleted { session_id }));
        }
    }

    Ok(events
        .into_iter()
        .enumerate()
        .map(|(seq, (timestamp, event))| EventRecord {
            seq: seq as u64,
            timestamp,
            event,
        })
        .collect())
}

pub fn simulate_run(config: &LatentConfig) -> Result<EvaluationRun, SimError> {
    Ok(eventlog::replay(&simulate_log(config)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunComparison {
    pub first: usize,
    pub second: usize,
    pub replication: Replication,
    /// Conclusion agreement at 0.05 and 0.10.
    pub agreement_05: f64,
    pub agreement_10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationExperiment {
    pub seeds: Vec<u64>,
    pub reports: Vec<AnalysisReport>,
    pub comparisons: Vec<RunComparison>,
}

/// Simulates `runs` independent runs with derived seeds and compares every pair.
pub fn replication_experiment(
    config: &LatentConfig,
    runs: usize,
    alpha: f64,
) -> Result<ReplicationExperiment, SimError> {
    if runs < 2 {
        return Err(SimError::Config("a replication experiment needs at least 2 runs".into()));
    }
    let seeds: Vec<u64> = (0..runs)
        .map(|k| derive_seed(config.seed, 0xC0FF_EE00 + k as u64))
        .collect();
    let mut reports = Vec::new();
    for &seed in &seeds {
        let run = simulate_run(&config.with_seed(seed))?;
        reports.push(analyze_run(&run, alpha));
    }
    let mut comparisons = Vec::new();
    for i in 0..runs {
        for j in (i + 1)..runs {
            let (a, b) = (&reports[i], &reports[j]);
            let replication =
                scoring::replication_correlation(&a.scoreboard.scorecards, &b.scoreboard.scorecards)
                    .map_err(|e| SimError::Config(e.to_string()))?;
            let agreement = |alpha| match (&a.significance, &b.significance) {
                (Some(ma), Some(mb)) => scoring::conclusion_agreement(ma, mb, alpha).unwrap_or(0.0),
                _ => 0.0,
            };
            comparisons.push(RunComparison {
                first: i,
                second: j,
                replication,
                agreement_05: agreement(0.05),
                agreement_10: agreement(0.10),
            });
        }
    }
    Ok(ReplicationExperiment {
        seeds,
        reports,
        comparisons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(consistent: usize, clickers: usize) -> LatentConfig {
        LatentConfig {
            workers: WorkerPopulation {
                consistent,
                random_clickers: clickers,
            },
            ..Default::default()
        }
    }

    #[test]
    fn default_config_round_trips_with_every_field() {
        let json = serde_json::to_value(LatentConfig::default()).unwrap();
        for key in ["systems", "degraded_quality", "workers", "rater", "hits_per_worker", "seed"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["rater"]["noise_sd"], 8.0);
        let back: LatentConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, LatentConfig::default());
        let partial: LatentConfig = serde_json::from_str(r#"{"seed": 5}"#).unwrap();
        assert_eq!(partial.seed, 5);
        assert_eq!(partial.systems.len(), 5);
    }

    #[test]
    fn rejects_out_of_range_quality() {
        let mut cfg = LatentConfig::default();
        cfg.systems[0].quality.insert(Criterion::Fun, 120.0);
        assert!(matches!(cfg.validate(), Err(SimError::Config(m)) if m.contains("120")));
    }

    #[test]
    fn simulated_run_validates() {
        let run = simulate_run(&small(6, 2)).unwrap();
        assert!(run.validate().is_empty(), "{:?}", run.validate());
        assert_eq!(run.hits.len(), 8);
        assert_eq!(run.ratings.len(), 8 * 6 * 7);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = eventlog::to_log_text(&simulate_log(&small(5, 2)).unwrap());
        let b = eventlog::to_log_text(&simulate_log(&small(5, 2)).unwrap());
        assert_eq!(a, b);
        let c = eventlog::to_log_text(&simulate_log(&small(5, 2).with_seed(1)).unwrap());
        assert_ne!(a, c);
    }

    #[test]
    fn noise_free_raters_order_systems_by_latent_quality() {
        let mut cfg = small(20, 0);
        cfg.rater.noise_sd = 0.0;
        let run = simulate_run(&cfg).unwrap();
        for (_, ratings) in run.ratings_by_worker() {
            for c in Criterion::ALL {
                let mut by_system: Vec<(f64, f64)> = ratings
                    .iter()
                    .filter(|(r, _)| r.criterion == c)
                    .map(|(r, _)| (cfg.quality(&r.system_id, c), r.reversed_value()))
                    .collect();
                by_system.sort_by(|a, b| a.0.total_cmp(&b.0));
                for w in by_system.windows(2) {
                    assert!(w[0].1 <= w[1].1, "{by_system:?}");
                }
            }
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let s: std::collections::BTreeSet<u64> = (0..1000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
    }
}
