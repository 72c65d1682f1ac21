//! The evaluation service: session lifecycle over a single append-only log.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use dialeval_core::degradation::{degraded_reply, DegradationError, ResponseCorpus};
use dialeval_core::eventlog::{self, Event, EventLogWriter, LogError, SessionMode};
use dialeval_core::hit::{assemble_hit, HitError};
use dialeval_core::qc::worker_consistency;
use dialeval_core::simulator::derive_seed;
use dialeval_core::types::{
    Criterion, HitId, Rating, SlotRole, SystemId, SystemKind, TopicOpinion, WorkerId,
};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bots::{adapter_request, AdapterClient, AdapterError, RetrievalBot};
use crate::config::HarnessConfig;
use crate::session::{Phase, SessionError, SessionState, SessionView};

const HIT_STREAM: u64 = 0x4849_5400;
const ICE_BREAKER_STREAM: u64 = 0x4943_4500;
const REPLY_STREAM: u64 = 0x5245_5000;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("session {0} not found")]
    UnknownSession(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("invalid worker id")]
    InvalidWorker,
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Hit(#[from] HitError),
    #[error(transparent)]
    Degradation(#[from] DegradationError),
    #[error("system {0} is not configured")]
    UnknownSystem(SystemId),
}

fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seed of the degraded bot's reply for a given turn, so replies are reproducible from
/// the configuration seed and the session, slot and turn alone.
pub fn reply_seed(seed: u64, session_id: &str, slot: usize, turn: usize) -> u64 {
    let session = derive_seed(seed ^ REPLY_STREAM, fnv1a(session_id));
    derive_seed(session, (slot * 1_000 + turn) as u64)
}

pub struct Service {
    config: HarnessConfig,
    corpus: ResponseCorpus,
    retrieval: RetrievalBot,
    adapter: AdapterClient,
    log: Mutex<EventLogWriter>,
    sessions: RwLock<HashMap<String, Arc<tokio::sync::Mutex<SessionState>>>>,
    next_session: AtomicU64,
}

impl std::fmt::Debug for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Service")
            .field("log_path", &self.config.log_path)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Corpus(#[from] DegradationError),
    #[error(transparent)]
    Log(#[from] LogError),
}

impl Service {
    /// Opens the log, recovering any sessions already recorded in it.
    pub fn new(config: HarnessConfig) -> Result<Self, StartupError> {
        config.validate()?;
        let corpus = match &config.corpus_path {
            Some(p) => ResponseCorpus::from_file(p)?,
            None => ResponseCorpus::bundled(),
        };
        let sessions = recover_sessions(&config.log_path)?;
        let next = sessions
            .keys()
            .filter_map(|id| id.strip_prefix('s')?.parse::<u64>().ok())
            .max()
            .map_or(sessions.len() as u64, |n| n + 1);
        let log = EventLogWriter::open(&config.log_path)?;
        Ok(Self {
            retrieval: RetrievalBot::new(&corpus),
            corpus,
            adapter: AdapterClient::new(Duration::from_millis(config.adapter_timeout_ms)),
            log: Mutex::new(log),
            sessions: RwLock::new(
                sessions
                    .into_iter()
                    .map(|(k, v)| (k, Arc::new(tokio::sync::Mutex::new(v))))
                    .collect(),
            ),
            next_session: AtomicU64::new(next),
            config,
        })
    }

    pub fn config(&self) -> &HarnessConfig {
        &self.config
    }

    fn persist(&self, event: Event) -> Result<(Event, i64), ServiceError> {
        let timestamp = now_ms();
        let rec = self.log.lock().expect("log lock").append(timestamp, event)?;
        Ok((rec.event, timestamp))
    }

    fn persist_apply(&self, state: &mut SessionState, event: Event) -> Result<(), ServiceError> {
        let (event, ts) = self.persist(event)?;
        state.apply(&event, ts);
        Ok(())
    }

    fn session(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<SessionState>>, ServiceError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn start_session(&self, worker_id: &str) -> Result<SessionView, ServiceError> {
        let worker_id = worker_id.trim();
        if worker_id.is_empty() {
            return Err(ServiceError::InvalidWorker);
        }
        let n = self.next_session.fetch_add(1, Ordering::SeqCst);
        let session_id = format!("s{n:06}");
        let session_seed = derive_seed(self.config.seed, n);

        let genuine: Vec<SystemId> = self
            .config
            .systems
            .iter()
            .filter(|s| !s.is_degraded())
            .map(|s| s.system_id.clone())
            .collect();
        let degraded = self
            .config
            .systems
            .iter()
            .find(|s| s.is_degraded())
            .map(|s| s.system_id.clone())
            .expect("validated config has a degraded system");
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(session_seed, HIT_STREAM));
        let hit = assemble_hit(
            HitId::new(session_id.clone()),
            WorkerId::new(worker_id),
            &genuine,
            &degraded,
            &mut rng,
        )?;

        let mut ice_rng = ChaCha8Rng::seed_from_u64(derive_seed(session_seed, ICE_BREAKER_STREAM));
        let mut events = vec![Event::SessionStarted {
            session_id: session_id.clone(),
            worker_id: WorkerId::new(worker_id),
            mode: self.config.mode,
            hit: hit.clone(),
        }];
        for (slot, system_id) in hit.slots.iter().enumerate() {
            let ice_breaker = match self.config.mode {
                SessionMode::FreeTopic => None,
                SessionMode::IceBreaker => {
                    let system = self
                        .config
                        .system(system_id)
                        .ok_or_else(|| ServiceError::UnknownSystem(system_id.clone()))?;
                    let pool = system.persona.as_deref().unwrap_or(&self.config.persona_pool);
                    pool.choose(&mut ice_rng).cloned()
                }
            };
            events.push(Event::ConversationStarted {
                session_id: session_id.clone(),
                slot,
                conversation_id: format!("{session_id}-{slot}").into(),
                system_id: system_id.clone(),
                ice_breaker,
            });
        }

        let mut state = None::<SessionState>;
        {
            let mut log = self.log.lock().expect("log lock");
            let ts = now_ms();
            for ev in events {
                let rec = log.append(ts, ev)?;
                match state.as_mut() {
                    None => state = SessionState::started(&rec.event),
                    Some(s) => s.apply(&rec.event, ts),
                }
            }
        }
        let state = state.expect("first event starts the session");
        let view = state.view();
        self.sessions
            .write()
            .expect("sessions lock")
            .insert(session_id, Arc::new(tokio::sync::Mutex::new(state)));
        Ok(view)
    }

    pub async fn view(&self, session_id: &str) -> Result<SessionView, ServiceError> {
        let s = self.session(session_id)?;
        let state = s.lock().await;
        Ok(state.view())
    }

    pub async fn topic(&self, session_id: &str, slot: usize, topic: &str) -> Result<SessionView, ServiceError> {
        let s = self.session(session_id)?;
        let mut state = s.lock().await;
        let ev = state.topic(slot, topic)?;
        self.persist_apply(&mut state, ev)?;
        Ok(state.view())
    }

    /// Logs the user's message, obtains the slot system's reply and logs it. When the reply
    /// fails the user message stays logged and the error is returned.
    pub async fn post_message(&self, session_id: &str, slot: usize, text: &str) -> Result<String, ServiceError> {
        let s = self.session(session_id)?;
        let mut state = s.lock().await;
        let ev = state.user_message(slot, text)?;
        self.persist_apply(&mut state, ev)?;

        let slot_state = &state.slots[slot];
        let system = self
            .config
            .system(&slot_state.system_id)
            .ok_or_else(|| ServiceError::UnknownSystem(slot_state.system_id.clone()))?;
        let history = &slot_state.utterances;
        let reply = match &system.kind {
            SystemKind::Adapter { endpoint } => {
                let req = adapter_request(system.persona.as_deref(), history);
                self.adapter.respond(endpoint, &req).await?
            }
            SystemKind::BuiltinRetrieval => self.retrieval.reply(history),
            SystemKind::BuiltinDegraded => {
                let seed = reply_seed(self.config.seed, session_id, slot, slot_state.user_inputs());
                degraded_reply(history, &self.corpus, &mut ChaCha8Rng::seed_from_u64(seed))?
            }
        };
        let ev = state.bot_message(slot, &reply)?;
        self.persist_apply(&mut state, ev)?;
        Ok(reply)
    }

    pub async fn complete(&self, session_id: &str, slot: usize) -> Result<SessionView, ServiceError> {
        let s = self.session(session_id)?;
        let mut state = s.lock().await;
        state.complete(slot)?;
        Ok(state.view())
    }

    pub async fn submit_ratings(
        &self,
        session_id: &str,
        slot: usize,
        values: &BTreeMap<String, f64>,
    ) -> Result<SessionView, ServiceError> {
        let s = self.session(session_id)?;
        let mut state = s.lock().await;
        let ev = state.ratings(slot, values)?;
        self.persist_apply(&mut state, ev)?;
        Ok(state.view())
    }

    pub async fn submit_opinion(
        &self,
        session_id: &str,
        slot: usize,
        opinion: TopicOpinion,
    ) -> Result<SessionView, ServiceError> {
        let s = self.session(session_id)?;
        let mut state = s.lock().await;
        let ev = state.opinion(slot, opinion)?;
        self.persist_apply(&mut state, ev)?;
        Ok(state.view())
    }

    /// Records feedback, completes the session and logs the worker's consistency check
    /// over this session's ratings.
    pub async fn submit_feedback(&self, session_id: &str, text: &str) -> Result<SessionView, ServiceError> {
        let s = self.session(session_id)?;
        let mut state = s.lock().await;
        for ev in state.feedback(text)? {
            self.persist_apply(&mut state, ev)?;
        }
        if let Some(ev) = self.qc_event(&state) {
            self.persist(ev)?;
        }
        Ok(state.view())
    }

    fn qc_event(&self, state: &SessionState) -> Option<Event> {
        let ratings: Vec<(Rating, SlotRole)> = state
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.phase == Phase::Done)
            .flat_map(|(i, s)| {
                let role = if state.hit.is_degraded_slot(i) {
                    SlotRole::Degraded
                } else {
                    SlotRole::Genuine
                };
                s.ratings.iter().flatten().map(move |(&criterion, &raw_value)| {
                    (
                        Rating {
                            worker_id: state.worker_id.clone(),
                            hit_id: state.hit.hit_id.clone(),
                            conversation_id: s.conversation_id.clone(),
                            system_id: s.system_id.clone(),
                            criterion,
                            raw_value,
                        },
                        role,
                    )
                })
            })
            .collect();
        let borrowed: Vec<(&Rating, SlotRole)> = ratings.iter().map(|(r, role)| (r, *role)).collect();
        let rec = worker_consistency(&state.worker_id, &borrowed, self.config.alpha).ok()?;
        Some(Event::QcResult {
            worker_id: rec.worker_id,
            p_value: rec.p_value,
            passed: rec.passed,
            degraded_count: rec.degraded_values.len(),
            genuine_count: rec.genuine_values.len(),
        })
    }
}

fn recover_sessions(path: &Path) -> Result<HashMap<String, SessionState>, LogError> {
    let mut sessions: HashMap<String, SessionState> = HashMap::new();
    if !path.exists() {
        return Ok(sessions);
    }
    let (records, _) = eventlog::read_log(path)?;
    // replaying through the run builder checks ordering and consistency
    eventlog::replay(&records)?;
    for rec in &records {
        if let Some(state) = SessionState::started(&rec.event) {
            sessions.insert(state.session_id.clone(), state);
        } else if let Some(s) = rec.event.session_id().and_then(|id| sessions.get_mut(id)) {
            s.apply(&rec.event, rec.timestamp);
        }
    }
    Ok(sessions)
}

/// Criteria in presentation order, for the rating form.
pub fn criteria() -> Vec<(Criterion, &'static str)> {
    Criterion::ALL.iter().map(|&c| (c, c.statement())).collect()
}
