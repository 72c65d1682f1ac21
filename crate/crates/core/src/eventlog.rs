//! Append-only JSON-lines event log and its replay into an [`EvaluationRun`].
//!
//! Both the live service and the simulator write this format, so every analysis
//! runs off the same replay code.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{
    Conversation, ConversationId, ConversationMode, Criterion, EvaluationRun, Feedback, Hit, Rating,
    Speaker, SystemId, TopicEntry, TopicOpinion, Utterance, WorkerId,
};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt record at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("record seq {seq} out of order (previous seq {previous})")]
    OutOfOrder { seq: u64, previous: u64 },
    #[error("record seq {seq}: {message}")]
    Inconsistent { seq: u64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    FreeTopic,
    IceBreaker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Event {
    SessionStarted {
        session_id: String,
        worker_id: WorkerId,
        mode: SessionMode,
        hit: Hit,
    },
    ConversationStarted {
        session_id: String,
        slot: usize,
        conversation_id: ConversationId,
        system_id: SystemId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ice_breaker: Option<String>,
    },
    TopicSet {
        session_id: String,
        slot: usize,
        topic: String,
    },
    TopicChanged {
        session_id: String,
        slot: usize,
        topic: String,
    },
    Utterance {
        session_id: String,
        slot: usize,
        speaker: Speaker,
        text: String,
    },
    RatingsSubmitted {
        session_id: String,
        slot: usize,
        ratings: BTreeMap<Criterion, f64>,
    },
    TopicOpinion {
        session_id: String,
        slot: usize,
        opinion: TopicOpinion,
    },
    Feedback {
        session_id: String,
        text: String,
    },
    QcResult {
        worker_id: WorkerId,
        p_value: f64,
        passed: bool,
        degraded_count: usize,
        genuine_count: usize,
    },
    SessionCompleted {
        session_id: String,
    },
}

impl Event {
    pub fn session_id(&self) -> Option<&str> {
        match self {
            Event::SessionStarted { session_id, .. }
            | Event::ConversationStarted { session_id, .. }
            | Event::TopicSet { session_id, .. }
            | Event::TopicChanged { session_id, .. }
            | Event::Utterance { session_id, .. }
            | Event::RatingsSubmitted { session_id, .. }
            | Event::TopicOpinion { session_id, .. }
            | Event::Feedback { session_id, .. }
            | Event::SessionCompleted { session_id } => Some(session_id),
            Event::QcResult { .. } => None,
        }
    }
}

/// One line of the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: i64,
    #[serde(flatten)]
    pub event: Event,
}

impl EventRecord {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("event records always serialize");
        s.push('\n');
        s
    }
}

/// Serialized form of a sequence of records, exactly as written to disk.
pub fn to_log_text(records: &[EventRecord]) -> String {
    records.iter().map(EventRecord::to_line).collect()
}

fn digest_id(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("run-{hex}")
}

pub fn parse_log(text: &str) -> Result<Vec<EventRecord>, LogError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: EventRecord = serde_json::from_str(line).map_err(|e| LogError::Corrupt {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

pub fn read_log(path: &Path) -> Result<(Vec<EventRecord>, String), LogError> {
    let text = std::fs::read_to_string(path).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let records = parse_log(&text)?;
    Ok((records, text))
}

/// Reads and replays a log file. The run id is derived from the file contents.
pub fn export_run(path: &Path) -> Result<EvaluationRun, LogError> {
    let (records, text) = read_log(path)?;
    replay_with_id(&records, digest_id(text.as_bytes()))
}

/// Replays records into a run whose id is derived from their serialized form.
pub fn replay(records: &[EventRecord]) -> Result<EvaluationRun, LogError> {
    replay_with_id(records, digest_id(to_log_text(records).as_bytes()))
}

struct SessionReplay {
    worker_id: WorkerId,
    hit: Hit,
    /// conversation index in the run, per slot
    slots: HashMap<usize, usize>,
}

fn replay_with_id(records: &[EventRecord], run_id: String) -> Result<EvaluationRun, LogError> {
    let mut run = EvaluationRun {
        run_id,
        ..Default::default()
    };
    let mut sessions: HashMap<String, SessionReplay> = HashMap::new();
    let mut previous: Option<u64> = None;

    for rec in records {
        if let Some(prev) = previous {
            if rec.seq <= prev {
                return Err(LogError::OutOfOrder {
                    seq: rec.seq,
                    previous: prev,
                });
            }
        }
        previous = Some(rec.seq);
        let seq = rec.seq;
        let bad = |message: String| LogError::Inconsistent { seq, message };

        if let Event::SessionStarted {
            session_id,
            worker_id,
            hit,
            ..
        } = &rec.event
        {
            if sessions.contains_key(session_id) {
                return Err(bad(format!("session {session_id} started twice")));
            }
            sessions.insert(
                session_id.clone(),
                SessionReplay {
                    worker_id: worker_id.clone(),
                    hit: hit.clone(),
                    slots: HashMap::new(),
                },
            );
            run.hits.push(hit.clone());
            continue;
        }
        let Some(sid) = rec.event.session_id() else {
            continue; // qc_result: recomputed by analysis
        };
        let session = sessions
            .get_mut(sid)
            .ok_or_else(|| bad(format!("unknown session {sid}")))?;

        let conversation = |session: &SessionReplay, slot: usize| -> Result<usize, LogError> {
            session.slots.get(&slot).copied().ok_or_else(|| LogError::Inconsistent {
                seq,
                message: format!("session {sid} slot {slot} has no conversation"),
            })
        };

        match &rec.event {
            Event::SessionStarted { .. } | Event::QcResult { .. } => unreachable!(),
            Event::ConversationStarted {
                slot,
                conversation_id,
                system_id,
                ice_breaker,
                ..
            } => {
                if session.slots.contains_key(slot) {
                    return Err(bad(format!("session {sid} slot {slot} started twice")));
                }
                session.slots.insert(*slot, run.conversations.len());
                run.conversations.push(Conversation {
                    conversation_id: conversation_id.clone(),
                    hit_id: session.hit.hit_id.clone(),
                    system_id: system_id.clone(),
                    worker_id: session.worker_id.clone(),
                    slot_index: *slot,
                    mode: match ice_breaker {
                        Some(statement) => ConversationMode::IceBreaker {
                            statement: statement.clone(),
                        },
                        None => ConversationMode::FreeTopic,
                    },
                    // the prescribed statement is the opening topic
                    topic_history: ice_breaker
                        .iter()
                        .map(|statement| TopicEntry {
                            topic: statement.clone(),
                            timestamp: rec.timestamp,
                        })
                        .collect(),
                    utterances: Vec::new(),
                    topic_opinion: None,
                    completed: false,
                });
            }
            Event::TopicSet { slot, topic, .. } | Event::TopicChanged { slot, topic, .. } => {
                let idx = conversation(session, *slot)?;
                run.conversations[idx].topic_history.push(TopicEntry {
                    topic: topic.clone(),
                    timestamp: rec.timestamp,
                });
            }
            Event::Utterance {
                slot, speaker, text, ..
            } => {
                let idx = conversation(session, *slot)?;
                run.conversations[idx].utterances.push(Utterance {
                    speaker: *speaker,
                    text: text.clone(),
                    timestamp: rec.timestamp,
                });
            }
            Event::RatingsSubmitted { slot, ratings, .. } => {
                let idx = conversation(session, *slot)?;
                let conv = &mut run.conversations[idx];
                if conv.completed {
                    return Err(bad(format!("session {sid} slot {slot} rated twice")));
                }
                conv.completed = true;
                for (&criterion, &raw_value) in ratings {
                    run.ratings.push(Rating {
                        worker_id: conv.worker_id.clone(),
                        hit_id: conv.hit_id.clone(),
                        conversation_id: conv.conversation_id.clone(),
                        system_id: conv.system_id.clone(),
                        criterion,
                        raw_value,
                    });
                }
            }
            Event::TopicOpinion { slot, opinion, .. } => {
                let idx = conversation(session, *slot)?;
                run.conversations[idx].topic_opinion = Some(*opinion);
            }
            Event::Feedback { text, .. } => run.feedback.push(Feedback {
                worker_id: session.worker_id.clone(),
                text: text.clone(),
            }),
            Event::SessionCompleted { .. } => {}
        }
    }
    Ok(run)
}

/// Append-only writer that assigns strictly increasing sequence numbers and flushes
/// every record before returning.
pub struct EventLogWriter {
    file: File,
    path: String,
    next_seq: u64,
}

impl EventLogWriter {
    /// Opens `path` for appending, continuing after the last sequence number already in it.
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let io_err = |source| LogError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut next_seq = 0;
        if path.exists() {
            let f = File::open(path).map_err(io_err)?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: EventRecord = serde_json::from_str(&line).map_err(|e| LogError::Corrupt {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                next_seq = rec.seq + 1;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        Ok(Self {
            file,
            path: path.display().to_string(),
            next_seq,
        })
    }

    pub fn append(&mut self, timestamp: i64, event: Event) -> Result<EventRecord, LogError> {
        let rec = EventRecord {
            seq: self.next_seq,
            timestamp,
            event,
        };
        self.file
            .write_all(rec.to_line().as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| LogError::Io {
                path: self.path.clone(),
                source,
            })?;
        self.next_seq += 1;
        Ok(rec)
    }
}

pub fn write_log(path: &Path, records: &[EventRecord]) -> Result<(), LogError> {
    std::fs::write(path, to_log_text(records)).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(seq: u64, event: Event) -> EventRecord {
        EventRecord {
            seq,
            timestamp: 1000 + seq as i64,
            event,
        }
    }

    fn hit() -> Hit {
        Hit {
            hit_id: "h1".into(),
            worker_id: "w1".into(),
            slots: ["a", "b", "c", "d", "e", "q"].map(SystemId::from).to_vec(),
            degraded_slot: 5,
        }
    }

    #[test]
    fn record_wire_format() {
        let r = rec(
            3,
            Event::TopicSet {
                session_id: "s1".into(),
                slot: 0,
                topic: "dogs".into(),
            },
        );
        let line = r.to_line();
        assert_eq!(
            line,
            "{\"seq\":3,\"timestamp\":1003,\"type\":\"topic_set\",\"payload\":{\"session_id\":\"s1\",\"slot\":0,\"topic\":\"dogs\"}}\n"
        );
        assert_eq!(parse_log(&line).unwrap(), vec![r]);
    }

    #[test]
    fn empty_log_is_empty_run() {
        let run = replay(&[]).unwrap();
        assert!(run.is_empty());
    }

    #[test]
    fn out_of_order_is_named() {
        let records = vec![
            rec(
                0,
                Event::SessionStarted {
                    session_id: "s1".into(),
                    worker_id: "w1".into(),
                    mode: SessionMode::FreeTopic,
                    hit: hit(),
                },
            ),
            rec(5, Event::SessionCompleted { session_id: "s1".into() }),
            rec(4, Event::SessionCompleted { session_id: "s1".into() }),
        ];
        let err = replay(&records).unwrap_err();
        assert!(matches!(err, LogError::OutOfOrder { seq: 4, previous: 5 }), "{err}");
    }

    #[test]
    fn unknown_session_is_named() {
        let records = vec![rec(7, Event::SessionCompleted { session_id: "nope".into() })];
        let err = replay(&records).unwrap_err();
        assert!(err.to_string().contains("seq 7"), "{err}");
    }

    #[test]
    fn corrupt_line_is_named() {
        let err = parse_log("{\"seq\":0}\nnot json\n").unwrap_err();
        assert!(matches!(err, LogError::Corrupt { line: 1, .. }), "{err}");
    }

    #[test]
    fn partial_session_is_incomplete() {
        let records = vec![
            rec(
                0,
                Event::SessionStarted {
                    session_id: "s1".into(),
                    worker_id: "w1".into(),
                    mode: SessionMode::FreeTopic,
                    hit: hit(),
                },
            ),
            rec(
                1,
                Event::ConversationStarted {
                    session_id: "s1".into(),
                    slot: 0,
                    conversation_id: "s1-0".into(),
                    system_id: "a".into(),
                    ice_breaker: None,
                },
            ),
            rec(
                2,
                Event::Utterance {
                    session_id: "s1".into(),
                    slot: 0,
                    speaker: Speaker::User,
                    text: "hello".into(),
                },
            ),
        ];
        let run = replay(&records).unwrap();
        assert_eq!(run.conversations.len(), 1);
        assert!(!run.conversations[0].completed);
        assert!(run.validate().is_empty(), "{:?}", run.validate());
    }

    #[test]
    fn writer_continues_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let mut w = EventLogWriter::open(&path).unwrap();
        w.append(1, Event::SessionCompleted { session_id: "x".into() }).unwrap();
        w.append(2, Event::SessionCompleted { session_id: "x".into() }).unwrap();
        drop(w);
        let mut w = EventLogWriter::open(&path).unwrap();
        let r = w.append(3, Event::SessionCompleted { session_id: "x".into() }).unwrap();
        assert_eq!(r.seq, 2);
        let (records, _) = read_log(&path).unwrap();
        assert_eq!(records.iter().map(|r| r.seq).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
