//! Domain types shared by every stage of the pipeline.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Lowest value of the rating scale.
pub const SCALE_MIN: f64 = 0.0;
/// Highest value of the rating scale.
pub const SCALE_MAX: f64 = 100.0;
/// Conversations (slots) per HIT: five genuine systems plus one degraded.
pub const SLOTS_PER_HIT: usize = 6;
/// Genuine systems per HIT.
pub const GENUINE_PER_HIT: usize = 5;
/// Minimum number of user inputs before a conversation may be rated.
pub const MIN_USER_INPUTS: usize = 10;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_type!(
    /// Opaque crowd-worker identity.
    WorkerId
);
id_type!(HitId);
id_type!(ConversationId);
id_type!(
    /// Opaque identity of a dialogue system. Never shown to assessors.
    SystemId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

/// The seven measurement criteria, in the order they are presented to assessors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Robotic,
    Interesting,
    Fun,
    Consistent,
    Fluent,
    Repetitive,
    Topic,
}

impl Criterion {
    /// Presentation order of the rating form.
    pub const ALL: [Criterion; 7] = [
        Criterion::Robotic,
        Criterion::Interesting,
        Criterion::Fun,
        Criterion::Consistent,
        Criterion::Fluent,
        Criterion::Repetitive,
        Criterion::Topic,
    ];

    /// Column order used in score tables: positive criteria first, reversed ones last.
    pub const TABLE_ORDER: [Criterion; 7] = [
        Criterion::Interesting,
        Criterion::Fun,
        Criterion::Consistent,
        Criterion::Fluent,
        Criterion::Topic,
        Criterion::Robotic,
        Criterion::Repetitive,
    ];

    /// The Likert statement the assessor agrees or disagrees with.
    pub fn statement(self) -> &'static str {
        match self {
            Criterion::Robotic => {
                "It was obvious that I was talking to a chatbot as opposed to another human user."
            }
            Criterion::Interesting => "The conversation with the chatbot was interesting.",
            Criterion::Fun => "The conversation with the chatbot was fun/enjoyable.",
            Criterion::Consistent => "The chatbot was consistent throughout the conversation.",
            Criterion::Fluent => {
                "The chatbot's English was fluent and natural throughout the conversation."
            }
            Criterion::Repetitive => {
                "I felt that the chatbot kept being repetitive during the conversation."
            }
            Criterion::Topic => "The chatbot stays on topic.",
        }
    }

    pub fn polarity(self) -> Polarity {
        match self {
            Criterion::Robotic | Criterion::Repetitive => Polarity::Negative,
            _ => Polarity::Positive,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Robotic => "robotic",
            Criterion::Interesting => "interesting",
            Criterion::Fun => "fun",
            Criterion::Consistent => "consistent",
            Criterion::Fluent => "fluent",
            Criterion::Repetitive => "repetitive",
            Criterion::Topic => "topic",
        }
    }

    pub fn from_name(name: &str) -> Option<Criterion> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(name))
    }

    /// Orients a value on this criterion so that higher always means better.
    pub fn orient(self, value: f64) -> f64 {
        match self.polarity() {
            Polarity::Positive => value,
            Polarity::Negative => SCALE_MAX - value,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One worker's judgement of one conversation under one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub worker_id: WorkerId,
    pub hit_id: HitId,
    pub conversation_id: ConversationId,
    pub system_id: SystemId,
    pub criterion: Criterion,
    pub raw_value: f64,
}

impl Rating {
    /// The rating with negative criteria flipped (`100 - v`).
    pub fn reversed_value(&self) -> f64 {
        reversed_value(self)
    }
}

/// Applies score reversal: raw value for positive criteria, `100 - raw` for negative ones.
pub fn reversed_value(rating: &Rating) -> f64 {
    rating.criterion.orient(rating.raw_value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConversationMode {
    FreeTopic,
    IceBreaker { statement: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub topic: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicOpinion {
    Liked,
    Ambivalent,
    Disliked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: ConversationId,
    pub hit_id: HitId,
    pub system_id: SystemId,
    pub worker_id: WorkerId,
    pub slot_index: usize,
    pub mode: ConversationMode,
    pub topic_history: Vec<TopicEntry>,
    pub utterances: Vec<Utterance>,
    pub topic_opinion: Option<TopicOpinion>,
    pub completed: bool,
}

impl Conversation {
    pub fn user_inputs(&self) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(|u| u.speaker == Speaker::User)
    }

    pub fn user_input_count(&self) -> usize {
        self.user_inputs().count()
    }
}

/// A blind, shuffled assignment of six conversation slots to one worker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub hit_id: HitId,
    pub worker_id: WorkerId,
    pub slots: Vec<SystemId>,
    pub degraded_slot: usize,
}

impl Hit {
    pub fn degraded_system(&self) -> Option<&SystemId> {
        self.slots.get(self.degraded_slot)
    }

    pub fn is_degraded_slot(&self, slot: usize) -> bool {
        slot == self.degraded_slot
    }

    /// Sorted set of systems in the HIT, used to group workers with the same configuration.
    pub fn configuration(&self) -> Vec<SystemId> {
        let mut c = self.slots.clone();
        c.sort();
        c
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SystemKind {
    Adapter { endpoint: String },
    BuiltinRetrieval,
    BuiltinDegraded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemUnderTest {
    pub system_id: SystemId,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<Vec<String>>,
    pub kind: SystemKind,
}

impl SystemUnderTest {
    pub fn is_degraded(&self) -> bool {
        self.kind == SystemKind::BuiltinDegraded
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub worker_id: WorkerId,
    pub text: String,
}

/// Everything collected by one evaluation run, as replayed from the event log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub run_id: String,
    pub hits: Vec<Hit>,
    pub conversations: Vec<Conversation>,
    pub ratings: Vec<Rating>,
    pub feedback: Vec<Feedback>,
}

/// Whether a rating was given to the quality-control system or a genuine one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotRole {
    Genuine,
    Degraded,
}

impl EvaluationRun {
    pub fn is_empty(&self) -> bool {
        self.hits.is_empty() && self.conversations.is_empty() && self.ratings.is_empty()
    }

    pub fn conversation(&self, id: &ConversationId) -> Option<&Conversation> {
        self.conversations.iter().find(|c| &c.conversation_id == id)
    }

    /// Role of every conversation, keyed by conversation id.
    pub fn slot_roles(&self) -> HashMap<&ConversationId, SlotRole> {
        let hits: HashMap<&HitId, &Hit> = self.hits.iter().map(|h| (&h.hit_id, h)).collect();
        self.conversations
            .iter()
            .filter_map(|c| {
                let hit = hits.get(&c.hit_id)?;
                let role = if hit.is_degraded_slot(c.slot_index) {
                    SlotRole::Degraded
                } else {
                    SlotRole::Genuine
                };
                Some((&c.conversation_id, role))
            })
            .collect()
    }

    /// Systems that occupy the degraded slot of some HIT.
    pub fn degraded_systems(&self) -> BTreeSet<SystemId> {
        self.hits
            .iter()
            .filter_map(|h| h.degraded_system().cloned())
            .collect()
    }

    /// Genuine systems appearing in any HIT, sorted by id.
    pub fn genuine_systems(&self) -> Vec<SystemId> {
        let degraded = self.degraded_systems();
        let all: BTreeSet<SystemId> = self
            .hits
            .iter()
            .flat_map(|h| h.slots.iter().cloned())
            .filter(|s| !degraded.contains(s))
            .collect();
        all.into_iter().collect()
    }

    /// Ratings on completed conversations, grouped by worker and tagged with their slot role.
    pub fn ratings_by_worker(&self) -> BTreeMap<WorkerId, Vec<(&Rating, SlotRole)>> {
        let roles = self.slot_roles();
        let completed: BTreeSet<&ConversationId> = self
            .conversations
            .iter()
            .filter(|c| c.completed)
            .map(|c| &c.conversation_id)
            .collect();
        let mut out: BTreeMap<WorkerId, Vec<(&Rating, SlotRole)>> = BTreeMap::new();
        for r in &self.ratings {
            if !completed.contains(&r.conversation_id) {
                continue;
            }
            if let Some(role) = roles.get(&r.conversation_id) {
                out.entry(r.worker_id.clone()).or_default().push((r, *role));
            }
        }
        out
    }

    /// Checks every structural invariant; an empty result means the run is well formed.
    pub fn validate(&self) -> Vec<String> {
        validate_run(self)
    }
}

/// Lists every invariant violation in `run`, naming the offending record.
pub fn validate_run(run: &EvaluationRun) -> Vec<String> {
    let mut violations = Vec::new();

    let mut hit_ids = HashMap::new();
    for hit in &run.hits {
        if hit_ids.insert(&hit.hit_id, hit).is_some() {
            violations.push(format!("hit {}: duplicate hit id", hit.hit_id));
        }
        if hit.slots.len() != SLOTS_PER_HIT {
            violations.push(format!(
                "hit {}: has {} slots, expected {SLOTS_PER_HIT}",
                hit.hit_id,
                hit.slots.len()
            ));
        }
        if hit.degraded_slot >= hit.slots.len() {
            violations.push(format!(
                "hit {}: degraded slot {} out of range",
                hit.hit_id, hit.degraded_slot
            ));
        }
        let distinct: BTreeSet<&SystemId> = hit.slots.iter().collect();
        if distinct.len() != hit.slots.len() {
            violations.push(format!("hit {}: slots reference a system twice", hit.hit_id));
        }
    }

    let degraded = run.degraded_systems();
    for hit in &run.hits {
        let n_degraded = hit.slots.iter().filter(|s| degraded.contains(*s)).count();
        if hit.slots.len() == SLOTS_PER_HIT && n_degraded != 1 {
            violations.push(format!(
                "hit {}: {n_degraded} slots reference a quality-control system, expected 1",
                hit.hit_id
            ));
        }
    }

    let mut conv_ids = HashMap::new();
    for conv in &run.conversations {
        let id = &conv.conversation_id;
        if conv_ids.insert(id, conv).is_some() {
            violations.push(format!("conversation {id}: duplicate conversation id"));
        }
        if conv.slot_index >= SLOTS_PER_HIT {
            violations.push(format!(
                "conversation {id}: slot index {} out of range",
                conv.slot_index
            ));
        }
        match hit_ids.get(&conv.hit_id) {
            None => violations.push(format!(
                "conversation {id}: references unknown hit {}",
                conv.hit_id
            )),
            Some(hit) => {
                if hit.slots.get(conv.slot_index) != Some(&conv.system_id) {
                    violations.push(format!(
                        "conversation {id}: system {} does not occupy slot {} of hit {}",
                        conv.system_id, conv.slot_index, conv.hit_id
                    ));
                }
                if hit.worker_id != conv.worker_id {
                    violations.push(format!(
                        "conversation {id}: worker {} differs from hit worker {}",
                        conv.worker_id, hit.worker_id
                    ));
                }
            }
        }
        if conv.completed && conv.user_input_count() < MIN_USER_INPUTS {
            violations.push(format!(
                "conversation {id}: completed with {} user inputs, minimum is {MIN_USER_INPUTS}",
                conv.user_input_count()
            ));
        }
        if let ConversationMode::IceBreaker { statement } = &conv.mode {
            if conv.topic_history.first().map(|t| &t.topic) != Some(statement) {
                violations.push(format!(
                    "conversation {id}: first topic is not the ice-breaker statement"
                ));
            }
        }
        for (i, u) in conv.utterances.iter().enumerate() {
            if u.text.trim().is_empty() {
                violations.push(format!("conversation {id}: utterance {i} is empty"));
            }
        }
    }

    let mut seen = BTreeSet::new();
    for (i, r) in run.ratings.iter().enumerate() {
        let label = format!(
            "rating #{i} ({}, {}, {})",
            r.worker_id, r.conversation_id, r.criterion
        );
        if !(SCALE_MIN..=SCALE_MAX).contains(&r.raw_value) {
            violations.push(format!(
                "{label}: value {} outside [{SCALE_MIN}, {SCALE_MAX}]",
                r.raw_value
            ));
        }
        if !seen.insert((&r.conversation_id, r.criterion)) {
            violations.push(format!("{label}: duplicate rating for this criterion"));
        }
        match conv_ids.get(&r.conversation_id) {
            None => violations.push(format!("{label}: references unknown conversation")),
            Some(conv) => {
                if conv.system_id != r.system_id || conv.worker_id != r.worker_id {
                    violations.push(format!(
                        "{label}: worker/system disagree with the conversation record"
                    ));
                }
            }
        }
    }

    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rating(criterion: Criterion, v: f64) -> Rating {
        Rating {
            worker_id: "w".into(),
            hit_id: "h".into(),
            conversation_id: "c".into(),
            system_id: "s".into(),
            criterion,
            raw_value: v,
        }
    }

    #[test]
    fn reversal_examples() {
        assert_eq!(reversed_value(&rating(Criterion::Robotic, 70.0)), 30.0);
        assert_eq!(reversed_value(&rating(Criterion::Fluent, 70.0)), 70.0);
        assert_eq!(reversed_value(&rating(Criterion::Repetitive, 0.0)), 100.0);
    }

    #[test]
    fn criteria_polarity() {
        let negative: Vec<_> = Criterion::ALL
            .into_iter()
            .filter(|c| c.polarity() == Polarity::Negative)
            .collect();
        assert_eq!(negative, vec![Criterion::Robotic, Criterion::Repetitive]);
        assert_eq!(Criterion::Topic.statement(), "The chatbot stays on topic.");
        for c in Criterion::ALL {
            assert_eq!(Criterion::from_name(c.name()), Some(c));
        }
    }

    #[test]
    fn reversal_is_an_involution() {
        for i in 0..=100 {
            let v = i as f64;
            assert_eq!(Criterion::Robotic.orient(Criterion::Robotic.orient(v)), v);
        }
        for i in 0..=1000 {
            let v = i as f64 / 10.0;
            assert!((Criterion::Repetitive.orient(Criterion::Repetitive.orient(v)) - v).abs() < 1e-12);
            assert_eq!(Criterion::Fun.orient(v), v);
        }
    }

    pub(crate) fn small_run() -> EvaluationRun {
        let slots: Vec<SystemId> = ["a", "b", "c", "d", "e", "q"].map(SystemId::from).to_vec();
        let hit = Hit {
            hit_id: "h1".into(),
            worker_id: "w1".into(),
            slots: slots.clone(),
            degraded_slot: 5,
        };
        let mut conversations = Vec::new();
        let mut ratings = Vec::new();
        for (k, s) in slots.iter().enumerate() {
            let cid = ConversationId::new(format!("h1-{k}"));
            let utterances = (0..20)
                .map(|i| Utterance {
                    speaker: if i % 2 == 0 { Speaker::User } else { Speaker::Bot },
                    text: format!("line {i}"),
                    timestamp: i,
                })
                .collect();
            conversations.push(Conversation {
                conversation_id: cid.clone(),
                hit_id: "h1".into(),
                system_id: s.clone(),
                worker_id: "w1".into(),
                slot_index: k,
                mode: ConversationMode::FreeTopic,
                topic_history: vec![TopicEntry {
                    topic: "dogs".into(),
                    timestamp: 0,
                }],
                utterances,
                topic_opinion: None,
                completed: true,
            });
            for c in Criterion::ALL {
                ratings.push(Rating {
                    worker_id: "w1".into(),
                    hit_id: "h1".into(),
                    conversation_id: cid.clone(),
                    system_id: s.clone(),
                    criterion: c,
                    raw_value: 50.0,
                });
            }
        }
        EvaluationRun {
            run_id: "r".into(),
            hits: vec![hit],
            conversations,
            ratings,
            feedback: vec![],
        }
    }

    #[test]
    fn well_formed_run_validates() {
        assert!(validate_run(&small_run()).is_empty());
    }

    #[test]
    fn out_of_range_rating_is_named() {
        let mut run = small_run();
        run.ratings[3].raw_value = 101.0;
        let v = validate_run(&run);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("rating #3"), "{}", v[0]);
    }

    #[test]
    fn five_slot_hit_is_named() {
        let mut run = small_run();
        run.hits[0].slots.remove(4);
        run.conversations.retain(|c| c.slot_index < 4 || c.slot_index == 5);
        run.ratings.retain(|r| r.conversation_id.as_str() != "h1-4");
        // re-point the degraded conversation at the shortened slot list
        run.hits[0].degraded_slot = 4;
        for c in &mut run.conversations {
            if c.slot_index == 5 {
                c.slot_index = 4;
            }
        }
        let v = validate_run(&run);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("hit h1"), "{}", v[0]);
    }

    #[test]
    fn completed_short_conversation_is_flagged() {
        let mut run = small_run();
        run.conversations[0].utterances.truncate(17);
        let v = validate_run(&run);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("9 user inputs"));
    }

    #[test]
    fn ice_breaker_topic_must_lead() {
        let mut run = small_run();
        run.conversations[1].mode = ConversationMode::IceBreaker {
            statement: "i like to ski".into(),
        };
        assert_eq!(validate_run(&run).len(), 1);
        run.conversations[1].topic_history[0].topic = "i like to ski".into();
        assert!(validate_run(&run).is_empty());
    }
}
