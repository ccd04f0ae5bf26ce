//! Memory records, QA pairs, edit commands and sessions.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::generation::AnswerTemplate;

pub type MemoryId = String;

/// Seconds since the Unix epoch, UTC. Serialized as an ISO-8601 string.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub i64);

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid timestamp {0:?}: expected ISO-8601 such as 2024-05-12T01:40:00Z")]
pub struct TimestampError(pub String);

impl Timestamp {
    pub const fn from_secs(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub const fn secs(self) -> i64 {
        self.0
    }

    pub fn parse_iso(s: &str) -> Result<Self, TimestampError> {
        DateTime::parse_from_rfc3339(s)
            .map(|dt| Timestamp(dt.timestamp()))
            .map_err(|_| TimestampError(s.to_string()))
    }

    pub fn to_iso(self) -> String {
        match DateTime::<Utc>::from_timestamp(self.0, 0) {
            Some(dt) => dt.to_rfc3339_opts(SecondsFormat::Secs, true),
            None => format!("@{}", self.0),
        }
    }

    /// Calendar date `YYYY-MM-DD`.
    pub fn date_string(self) -> String {
        match DateTime::<Utc>::from_timestamp(self.0, 0) {
            Some(dt) => dt.format("%Y-%m-%d").to_string(),
            None => format!("@{}", self.0),
        }
    }

    /// `HH:MM on YYYY-MM-DD`, the phrasing used in memory texts.
    pub fn clock_on_date(self) -> String {
        match DateTime::<Utc>::from_timestamp(self.0, 0) {
            Some(dt) => dt.format("%H:%M on %Y-%m-%d").to_string(),
            None => format!("@{}", self.0),
        }
    }

    pub const fn plus_days(self, days: i64) -> Self {
        Timestamp(self.0 + days * SECONDS_PER_DAY)
    }

    pub const fn plus_secs(self, secs: i64) -> Self {
        Timestamp(self.0 + secs)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_iso())
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_iso())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Timestamp::parse_iso(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Triple { head: head.into(), relation: relation.into(), tail: tail.into() }
    }
}

/// One stored memory: a sentence plus the triple extracted from it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub id: MemoryId,
    pub text: String,
    pub triple: Triple,
    pub created_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    /// Absent means the memory never expires.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_until: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subclass_hint: Option<String>,
}

impl MemoryRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>, triple: Triple, created_at: Timestamp) -> Self {
        MemoryRecord {
            id: id.into(),
            text: text.into(),
            triple,
            created_at,
            location: None,
            valid_until: None,
            subclass_hint: None,
        }
    }

    pub fn with_hint(mut self, subclass: impl Into<String>) -> Self {
        self.subclass_hint = Some(subclass.into());
        self
    }

    pub fn with_expiry(mut self, valid_until: Timestamp) -> Self {
        self.valid_until = Some(valid_until);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    EmptyId,
    EmptyHead,
    EmptyRelation,
    EmptyTail,
    ExpiryPrecedesCreation,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Violation::EmptyId => "id empty",
            Violation::EmptyHead => "head entity empty",
            Violation::EmptyRelation => "relation empty",
            Violation::EmptyTail => "tail entity empty",
            Violation::ExpiryPrecedesCreation => "expiry precedes creation",
        })
    }
}

/// Collects every invariant violation of a record; empty iff the record is valid.
pub fn validate_record(record: &MemoryRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.id.trim().is_empty() {
        out.push(Violation::EmptyId);
    }
    if record.triple.head.trim().is_empty() {
        out.push(Violation::EmptyHead);
    }
    if record.triple.relation.trim().is_empty() {
        out.push(Violation::EmptyRelation);
    }
    if record.triple.tail.trim().is_empty() {
        out.push(Violation::EmptyTail);
    }
    if let Some(until) = record.valid_until {
        if until < record.created_at {
            out.push(Violation::ExpiryPrecedesCreation);
        }
    }
    out
}

/// A question with its reference answer and the memories needed to answer it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
    pub required_memory_ids: Vec<MemoryId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_entity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_relation: Option<String>,
    /// Slot structure of `answer`; present for generated corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<AnswerTemplate>,
}

impl QaPair {
    pub fn new(question: impl Into<String>, answer: impl Into<String>, required: Vec<MemoryId>) -> Self {
        QaPair {
            question: question.into(),
            answer: answer.into(),
            required_memory_ids: required,
            q_entity: None,
            q_relation: None,
            template: None,
        }
    }

    pub fn with_anchors(mut self, entity: impl Into<String>, relation: impl Into<String>) -> Self {
        self.q_entity = Some(entity.into());
        self.q_relation = Some(relation.into());
        self
    }

    pub fn requires(&self, id: &str) -> bool {
        self.required_memory_ids.iter().any(|r| r == id)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EditKind {
    Insertion,
    Deletion,
    Replacement,
}

impl fmt::Display for EditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EditKind::Insertion => "Insertion",
            EditKind::Deletion => "Deletion",
            EditKind::Replacement => "Replacement",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCommand {
    pub kind: EditKind,
    pub payload: MemoryRecord,
    pub effective_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EditCommandError {
    #[error("deletion payload {0} carries no valid_until")]
    DeletionWithoutExpiry(MemoryId),
    #[error("payload {id} is invalid: {violations:?}")]
    InvalidPayload { id: MemoryId, violations: Vec<Violation> },
}

impl EditCommand {
    pub fn new(kind: EditKind, payload: MemoryRecord, effective_at: Timestamp) -> Result<Self, EditCommandError> {
        let cmd = EditCommand { kind, payload, effective_at };
        cmd.validate()?;
        Ok(cmd)
    }

    /// Construction-time checks. Whether a replaced relation exists is only
    /// known against a graph, so that check happens when the edit is applied.
    pub fn validate(&self) -> Result<(), EditCommandError> {
        let violations = validate_record(&self.payload);
        if !violations.is_empty() {
            return Err(EditCommandError::InvalidPayload { id: self.payload.id.clone(), violations });
        }
        if self.kind == EditKind::Deletion && self.payload.valid_until.is_none() {
            return Err(EditCommandError::DeletionWithoutExpiry(self.payload.id.clone()));
        }
        Ok(())
    }
}

/// One user's memories (chronological) and the QA pairs over them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub user_id: String,
    pub memories: Vec<MemoryRecord>,
    pub qa_pairs: Vec<QaPair>,
}

impl Session {
    /// Builds a session, ordering memories by `created_at` then id.
    pub fn new(user_id: impl Into<String>, mut memories: Vec<MemoryRecord>, qa_pairs: Vec<QaPair>) -> Self {
        sort_chronologically(&mut memories);
        Session { user_id: user_id.into(), memories, qa_pairs }
    }

    pub fn memory(&self, id: &str) -> Option<&MemoryRecord> {
        self.memories.iter().find(|m| m.id == id)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = BTreeSet::new();
        for m in &self.memories {
            let violations = validate_record(m);
            if !violations.is_empty() {
                return Err(CorpusError::InvalidMemory { id: m.id.clone(), violations });
            }
            if !seen.insert(m.id.as_str()) {
                return Err(CorpusError::DuplicateId(m.id.clone()));
            }
        }
        if self.memories.windows(2).any(|w| (w[0].created_at, &w[0].id) > (w[1].created_at, &w[1].id)) {
            return Err(CorpusError::Unordered(self.user_id.clone()));
        }
        for qa in &self.qa_pairs {
            if qa.required_memory_ids.is_empty() {
                return Err(CorpusError::EmptyRequiredSet(qa.question.clone()));
            }
            if let Some(missing) = qa.required_memory_ids.iter().find(|id| !seen.contains(id.as_str())) {
                return Err(CorpusError::DanglingMemory { question: qa.question.clone(), id: missing.clone() });
            }
        }
        Ok(())
    }
}

pub fn sort_chronologically(memories: &mut [MemoryRecord]) {
    memories.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("memory {id} is invalid: {violations:?}")]
    InvalidMemory { id: MemoryId, violations: Vec<Violation> },
    #[error("duplicate memory id {0}")]
    DuplicateId(MemoryId),
    #[error("memories of {0} are not in chronological order")]
    Unordered(String),
    #[error("question {0:?} has an empty required-memory set")]
    EmptyRequiredSet(String),
    #[error("question {question:?} requires unknown memory {id}")]
    DanglingMemory { question: String, id: MemoryId },
}

/// Validates a whole corpus; ids must be unique across every session.
pub fn validate_corpus(sessions: &[Session]) -> Result<(), CorpusError> {
    let mut seen = BTreeSet::new();
    for s in sessions {
        s.validate()?;
        for m in &s.memories {
            if !seen.insert(m.id.as_str()) {
                return Err(CorpusError::DuplicateId(m.id.clone()));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ts(s: &str) -> Timestamp {
        Timestamp::parse_iso(s).unwrap()
    }

    fn m2() -> MemoryRecord {
        MemoryRecord::new(
            "M2",
            "I booked the EK349 flight.",
            Triple::new("I", "booked", "EK349 flight"),
            ts("2024-04-20T09:00:00Z"),
        )
    }

    #[test]
    fn well_formed_record_has_no_violations() {
        assert!(validate_record(&m2()).is_empty());
    }

    #[test]
    fn empty_relation_is_reported() {
        let mut r = m2();
        r.triple.relation = " ".into();
        let v = validate_record(&r);
        assert_eq!(v, vec![Violation::EmptyRelation]);
        assert_eq!(v[0].to_string(), "relation empty");
    }

    #[test]
    fn expiry_before_creation_is_reported() {
        let r = m2().with_expiry(ts("2024-04-01T00:00:00Z"));
        let v = validate_record(&r);
        assert_eq!(v, vec![Violation::ExpiryPrecedesCreation]);
        assert_eq!(v[0].to_string(), "expiry precedes creation");
    }

    #[test]
    fn timestamp_iso_round_trip() {
        let t = ts("2024-05-12T01:40:00Z");
        assert_eq!(t.to_iso(), "2024-05-12T01:40:00Z");
        assert_eq!(t.clock_on_date(), "01:40 on 2024-05-12");
        assert_eq!(t.date_string(), "2024-05-12");
        assert!(Timestamp::parse_iso("May 12").is_err());
    }

    #[test]
    fn session_orders_by_time_then_id() {
        let t = ts("2024-04-20T09:00:00Z");
        let a = MemoryRecord::new("b", "x", Triple::new("h", "r", "t"), t);
        let b = MemoryRecord::new("a", "y", Triple::new("h", "r", "t"), t);
        let c = MemoryRecord::new("c", "z", Triple::new("h", "r", "t"), t.plus_secs(-1));
        let s = Session::new("u", vec![a, b, c], vec![]);
        let ids: Vec<_> = s.memories.iter().map(|m| m.id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
        s.validate().unwrap();
    }

    #[test]
    fn dangling_requirement_is_an_integrity_error() {
        let qa = QaPair::new("q", "a", vec!["M_99".into()]);
        let s = Session::new("u", vec![m2()], vec![qa]);
        assert_eq!(
            s.validate(),
            Err(CorpusError::DanglingMemory { question: "q".into(), id: "M_99".into() })
        );
    }

    #[test]
    fn deletion_requires_expiry() {
        let err = EditCommand::new(EditKind::Deletion, m2(), ts("2024-05-01T00:00:00Z")).unwrap_err();
        assert_eq!(err, EditCommandError::DeletionWithoutExpiry("M2".into()));
        let ok = EditCommand::new(
            EditKind::Deletion,
            m2().with_expiry(ts("2024-05-14T00:00:00Z")),
            ts("2024-05-01T00:00:00Z"),
        );
        assert!(ok.is_ok());
    }
}
