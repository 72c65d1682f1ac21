//! Per-session state machine. Every transition that must survive a crash is expressed as
//! an [`Event`]: operations validate and build the event, the service persists it, and only
//! then is it applied. Recovery replays the same `apply`.

use std::collections::BTreeMap;

use dialeval_core::eventlog::{Event, SessionMode};
use dialeval_core::types::{
    ConversationId, Criterion, Hit, Speaker, SystemId, TopicOpinion, Utterance, WorkerId,
    MIN_USER_INPUTS, SCALE_MAX, SCALE_MIN, SLOTS_PER_HIT,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("{detail}")]
    Conflict {
        code: &'static str,
        detail: String,
        count: Option<usize>,
    },
    #[error("{detail}")]
    Invalid { code: &'static str, detail: String },
    #[error("slot {0} does not exist")]
    NoSuchSlot(usize),
}

fn conflict(code: &'static str, detail: impl Into<String>) -> SessionError {
    SessionError::Conflict {
        code,
        detail: detail.into(),
        count: None,
    }
}

fn invalid(code: &'static str, detail: impl Into<String>) -> SessionError {
    SessionError::Invalid {
        code,
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingTopic,
    Chatting,
    Rating,
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotState {
    pub conversation_id: ConversationId,
    pub system_id: SystemId,
    pub ice_breaker: Option<String>,
    pub phase: Phase,
    pub topic_history: Vec<String>,
    pub utterances: Vec<Utterance>,
    pub opinion: Option<TopicOpinion>,
    pub ratings: Option<BTreeMap<Criterion, f64>>,
}

impl SlotState {
    pub fn user_inputs(&self) -> usize {
        self.utterances.iter().filter(|u| u.speaker == Speaker::User).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub session_id: String,
    pub worker_id: WorkerId,
    pub mode: SessionMode,
    pub hit: Hit,
    /// First slot not yet rated; equals the slot count once all are done.
    pub current_slot: usize,
    pub slots: Vec<SlotState>,
    pub feedback: Option<String>,
    pub completed: bool,
}

impl SessionState {
    /// Builds the state from a `session_started` event.
    pub fn started(event: &Event) -> Option<Self> {
        let Event::SessionStarted {
            session_id,
            worker_id,
            mode,
            hit,
        } = event
        else {
            return None;
        };
        Some(Self {
            session_id: session_id.clone(),
            worker_id: worker_id.clone(),
            mode: *mode,
            hit: hit.clone(),
            current_slot: 0,
            slots: Vec::new(),
            feedback: None,
            completed: false,
        })
    }

    pub fn all_rated(&self) -> bool {
        self.slots.len() == SLOTS_PER_HIT && self.slots.iter().all(|s| s.phase == Phase::Done)
    }

    fn slot(&self, slot: usize) -> Result<&SlotState, SessionError> {
        self.slots.get(slot).ok_or(SessionError::NoSuchSlot(slot))
    }

    fn active_slot(&self, slot: usize) -> Result<&SlotState, SessionError> {
        let s = self.slot(slot)?;
        if self.completed {
            return Err(conflict("session_completed", "the session is already completed"));
        }
        if slot != self.current_slot {
            return Err(conflict(
                "not_current_slot",
                format!("slot {slot} is not the current slot ({})", self.current_slot),
            ));
        }
        Ok(s)
    }

    /// Sets the topic of a slot awaiting one, or changes it mid-conversation.
    pub fn topic(&self, slot: usize, topic: &str) -> Result<Event, SessionError> {
        let s = self.active_slot(slot)?;
        let topic = topic.trim();
        if topic.is_empty() {
            return Err(invalid("empty_topic", "topic must not be empty"));
        }
        let (session_id, topic) = (self.session_id.clone(), topic.to_string());
        match s.phase {
            Phase::AwaitingTopic => Ok(Event::TopicSet { session_id, slot, topic }),
            Phase::Chatting => Ok(Event::TopicChanged { session_id, slot, topic }),
            p => Err(conflict("wrong_phase", format!("slot {slot} is in phase {p:?}"))),
        }
    }

    fn chatting(&self, slot: usize) -> Result<(), SessionError> {
        match self.active_slot(slot)?.phase {
            Phase::Chatting => Ok(()),
            Phase::AwaitingTopic => Err(conflict("wrong_phase", format!("slot {slot} has no topic yet"))),
            p => Err(conflict("wrong_phase", format!("slot {slot} is in phase {p:?}"))),
        }
    }

    pub fn user_message(&self, slot: usize, text: &str) -> Result<Event, SessionError> {
        self.chatting(slot)?;
        if text.trim().is_empty() {
            return Err(invalid("empty_message", "message must not be empty"));
        }
        Ok(Event::Utterance {
            session_id: self.session_id.clone(),
            slot,
            speaker: Speaker::User,
            text: text.to_string(),
        })
    }

    pub fn bot_message(&self, slot: usize, text: &str) -> Result<Event, SessionError> {
        self.chatting(slot)?;
        Ok(Event::Utterance {
            session_id: self.session_id.clone(),
            slot,
            speaker: Speaker::Bot,
            text: text.to_string(),
        })
    }

    /// Moves a slot to rating once it has enough user inputs. Repeating the call on a slot
    /// already in rating is acknowledged without change.
    pub fn complete(&mut self, slot: usize) -> Result<(), SessionError> {
        let s = self.active_slot(slot)?;
        match s.phase {
            Phase::Rating => return Ok(()),
            Phase::Chatting => {}
            p => return Err(conflict("wrong_phase", format!("slot {slot} is in phase {p:?}"))),
        }
        let count = s.user_inputs();
        if count < MIN_USER_INPUTS {
            return Err(SessionError::Conflict {
                code: "insufficient_inputs",
                detail: format!(
                    "{count} user inputs, at least {MIN_USER_INPUTS} required ({} more)",
                    MIN_USER_INPUTS - count
                ),
                count: Some(count),
            });
        }
        self.slots[slot].phase = Phase::Rating;
        Ok(())
    }

    pub fn ratings(&self, slot: usize, values: &BTreeMap<String, f64>) -> Result<Event, SessionError> {
        let s = self.active_slot(slot)?;
        match s.phase {
            Phase::Rating => {}
            Phase::Done => return Err(conflict("already_submitted", format!("slot {slot} is already rated"))),
            p => return Err(conflict("wrong_phase", format!("slot {slot} is in phase {p:?}"))),
        }
        let mut ratings = BTreeMap::new();
        for (name, &v) in values {
            let c = Criterion::from_name(name)
                .ok_or_else(|| invalid("unknown_criterion", format!("unknown criterion {name}")))?;
            if !v.is_finite() || !(SCALE_MIN..=SCALE_MAX).contains(&v) {
                return Err(invalid("out_of_range", format!("{name} = {v} outside [0, 100]")));
            }
            if ratings.insert(c, v).is_some() {
                return Err(invalid("duplicate_criterion", format!("{name} given twice")));
            }
        }
        let missing: Vec<&str> = Criterion::ALL
            .iter()
            .filter(|c| !ratings.contains_key(c))
            .map(|c| c.name())
            .collect();
        if !missing.is_empty() {
            return Err(invalid("missing_criteria", format!("missing criteria: {}", missing.join(", "))));
        }
        Ok(Event::RatingsSubmitted {
            session_id: self.session_id.clone(),
            slot,
            ratings,
        })
    }

    pub fn opinion(&self, slot: usize, opinion: TopicOpinion) -> Result<Event, SessionError> {
        let s = self.slot(slot)?;
        if s.topic_history.is_empty() {
            return Err(conflict("no_topic", format!("slot {slot} has no topic yet")));
        }
        Ok(Event::TopicOpinion {
            session_id: self.session_id.clone(),
            slot,
            opinion,
        })
    }

    /// Feedback closes the session.
    pub fn feedback(&self, text: &str) -> Result<[Event; 2], SessionError> {
        if self.completed {
            return Err(conflict("session_completed", "the session is already completed"));
        }
        if !self.all_rated() {
            return Err(conflict(
                "wrong_phase",
                format!("feedback requires all {SLOTS_PER_HIT} conversations to be rated"),
            ));
        }
        Ok([
            Event::Feedback {
                session_id: self.session_id.clone(),
                text: text.to_string(),
            },
            Event::SessionCompleted {
                session_id: self.session_id.clone(),
            },
        ])
    }

    pub fn apply(&mut self, event: &Event, timestamp: i64) {
        match event {
            Event::ConversationStarted {
                slot,
                conversation_id,
                system_id,
                ice_breaker,
                ..
            } => {
                debug_assert_eq!(*slot, self.slots.len());
                self.slots.push(SlotState {
                    conversation_id: conversation_id.clone(),
                    system_id: system_id.clone(),
                    ice_breaker: ice_breaker.clone(),
                    phase: if ice_breaker.is_some() {
                        Phase::Chatting
                    } else {
                        Phase::AwaitingTopic
                    },
                    topic_history: ice_breaker.iter().cloned().collect(),
                    utterances: Vec::new(),
                    opinion: None,
                    ratings: None,
                });
            }
            Event::TopicSet { slot, topic, .. } | Event::TopicChanged { slot, topic, .. } => {
                let s = &mut self.slots[*slot];
                s.topic_history.push(topic.clone());
                if s.phase == Phase::AwaitingTopic {
                    s.phase = Phase::Chatting;
                }
            }
            Event::Utterance {
                slot, speaker, text, ..
            } => self.slots[*slot].utterances.push(Utterance {
                speaker: *speaker,
                text: text.clone(),
                timestamp,
            }),
            Event::RatingsSubmitted { slot, ratings, .. } => {
                let s = &mut self.slots[*slot];
                s.ratings = Some(ratings.clone());
                s.phase = Phase::Done;
                while self.current_slot < self.slots.len() && self.slots[self.current_slot].phase == Phase::Done {
                    self.current_slot += 1;
                }
            }
            Event::TopicOpinion { slot, opinion, .. } => self.slots[*slot].opinion = Some(*opinion),
            Event::Feedback { text, .. } => self.feedback = Some(text.clone()),
            Event::SessionCompleted { .. } => self.completed = true,
            Event::SessionStarted { .. } | Event::QcResult { .. } => {}
        }
    }

    /// The assessor-facing view. Carries no system identity.
    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.session_id.clone(),
            worker_id: self.worker_id.clone(),
            mode: self.mode,
            slot_count: SLOTS_PER_HIT,
            current_slot: self.current_slot,
            inputs_required: MIN_USER_INPUTS,
            awaiting_feedback: self.all_rated() && !self.completed,
            completed: self.completed,
            slots: self
                .slots
                .iter()
                .enumerate()
                .map(|(index, s)| SlotView {
                    index,
                    phase: s.phase,
                    topic: s.topic_history.last().cloned(),
                    topic_history: s.topic_history.clone(),
                    ice_breaker: s.ice_breaker.clone(),
                    messages: s
                        .utterances
                        .iter()
                        .map(|u| MessageView {
                            speaker: u.speaker,
                            text: u.text.clone(),
                        })
                        .collect(),
                    user_inputs: s.user_inputs(),
                    opinion: s.opinion,
                    rated: s.ratings.is_some(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageView {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotView {
    pub index: usize,
    pub phase: Phase,
    pub topic: Option<String>,
    pub topic_history: Vec<String>,
    pub ice_breaker: Option<String>,
    pub messages: Vec<MessageView>,
    pub user_inputs: usize,
    pub opinion: Option<TopicOpinion>,
    pub rated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub worker_id: WorkerId,
    pub mode: SessionMode,
    pub slot_count: usize,
    pub current_slot: usize,
    pub inputs_required: usize,
    pub awaiting_feedback: bool,
    pub completed: bool,
    pub slots: Vec<SlotView>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session() -> SessionState {
        let slots: Vec<SystemId> = ["a", "b", "c", "d", "e", "q"].map(SystemId::from).to_vec();
        let hit = Hit {
            hit_id: "s1".into(),
            worker_id: "w".into(),
            slots: slots.clone(),
            degraded_slot: 5,
        };
        let mut st = SessionState::started(&Event::SessionStarted {
            session_id: "s1".into(),
            worker_id: "w".into(),
            mode: SessionMode::FreeTopic,
            hit,
        })
        .unwrap();
        for (slot, system_id) in slots.into_iter().enumerate() {
            st.apply(
                &Event::ConversationStarted {
                    session_id: "s1".into(),
                    slot,
                    conversation_id: format!("s1-{slot}").into(),
                    system_id,
                    ice_breaker: None,
                },
                0,
            );
        }
        st
    }

    fn step(st: &mut SessionState, ev: Result<Event, SessionError>) {
        let ev = ev.unwrap();
        st.apply(&ev, 0);
    }

    fn full_ratings() -> BTreeMap<String, f64> {
        Criterion::ALL.iter().map(|c| (c.name().to_string(), 100.0)).collect()
    }

    #[test]
    fn topic_then_change() {
        let mut st = session();
        let ev = st.topic(0, "dogs");
        step(&mut st, ev);
        let ev = st.topic(0, "cats");
        assert!(matches!(ev, Ok(Event::TopicChanged { .. })));
        step(&mut st, ev);
        assert_eq!(st.slots[0].topic_history, ["dogs", "cats"]);
        assert_eq!(st.topic(0, "  ").unwrap_err().to_string(), "topic must not be empty");
    }

    #[test]
    fn nine_inputs_conflict_ten_succeed() {
        let mut st = session();
        let ev = st.topic(0, "dogs");
        step(&mut st, ev);
        for i in 0..9 {
            let ev = st.user_message(0, &format!("m{i}"));
            step(&mut st, ev);
        }
        match st.complete(0) {
            Err(SessionError::Conflict { count, .. }) => assert_eq!(count, Some(9)),
            other => panic!("{other:?}"),
        }
        let ev = st.user_message(0, "ten");
        step(&mut st, ev);
        st.complete(0).unwrap();
        st.complete(0).unwrap();
        assert_eq!(st.slots[0].phase, Phase::Rating);
        assert!(matches!(st.user_message(0, "late"), Err(SessionError::Conflict { .. })));
    }

    #[test]
    fn ratings_validation() {
        let mut st = session();
        let ev = st.topic(0, "dogs");
        step(&mut st, ev);
        for _ in 0..10 {
            let ev = st.user_message(0, "hi");
            step(&mut st, ev);
        }
        st.complete(0).unwrap();
        let mut six = full_ratings();
        six.remove("topic");
        assert_eq!(st.ratings(0, &six).unwrap_err().to_string(), "missing criteria: topic");
        let mut over = full_ratings();
        over.insert("fun".into(), 100.5);
        assert!(matches!(st.ratings(0, &over), Err(SessionError::Invalid { code: "out_of_range", .. })));
        let ev = st.ratings(0, &full_ratings());
        step(&mut st, ev);
        assert_eq!(st.current_slot, 1);
        assert_eq!(st.slots[0].phase, Phase::Done);
        assert!(matches!(st.ratings(0, &full_ratings()), Err(SessionError::Conflict { .. })));
    }

    #[test]
    fn only_current_slot_is_active() {
        let st = session();
        assert!(matches!(
            st.topic(2, "x"),
            Err(SessionError::Conflict { code: "not_current_slot", .. })
        ));
        assert_eq!(st.topic(6, "x").unwrap_err(), SessionError::NoSuchSlot(6));
    }

    #[test]
    fn feedback_requires_all_slots() {
        let st = session();
        assert!(matches!(st.feedback(""), Err(SessionError::Conflict { .. })));
    }

    #[test]
    fn opinion_needs_topic() {
        let mut st = session();
        assert!(st.opinion(0, TopicOpinion::Liked).is_err());
        let ev = st.topic(0, "dogs");
        step(&mut st, ev);
        let ev = st.opinion(0, TopicOpinion::Disliked);
        step(&mut st, ev);
        assert_eq!(st.slots[0].opinion, Some(TopicOpinion::Disliked));
    }
}
