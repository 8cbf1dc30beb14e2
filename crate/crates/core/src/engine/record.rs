//! Persisted engine records: held messages, guide annotations, scores, incidents.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::GuidancePayload;
use crate::domain::{InterceptId, RoomId, Seq, UserId};

/// A message is screened at most this many times before it is force-delivered.
pub const MAX_INTERCEPTIONS: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterceptState {
    Held,
    Skipped,
    RevisedPending,
    Delivered,
    ForcedDelivered,
}

impl InterceptState {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            InterceptState::Delivered | InterceptState::ForcedDelivered
        )
    }

    pub fn can_become(self, next: InterceptState) -> bool {
        use InterceptState::*;
        matches!(
            (self, next),
            (Held, Skipped)
                | (Held, RevisedPending)
                | (RevisedPending, Delivered)
                | (RevisedPending, Held)
                | (RevisedPending, ForcedDelivered)
                | (Skipped, Delivered)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("illegal interception transition {from:?} -> {to:?}")]
pub struct TransitionError {
    pub from: InterceptState,
    pub to: InterceptState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterceptionRecord {
    pub intercept_id: InterceptId,
    pub room_id: RoomId,
    pub sender: UserId,
    pub original_body: String,
    pub payload: GuidancePayload,
    pub state: InterceptState,
    pub interception_count: u8,
    pub revision_bodies: Vec<String>,
    /// Every state entered, starting with `Held`.
    pub trail: Vec<InterceptState>,
    pub rewarded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivered_seq: Option<Seq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_msg_id: Option<String>,
    pub created_at: DateTime<Utc>,
}

impl InterceptionRecord {
    pub fn held(
        intercept_id: InterceptId,
        room_id: RoomId,
        sender: UserId,
        original_body: String,
        payload: GuidancePayload,
        client_msg_id: Option<String>,
        created_at: DateTime<Utc>,
    ) -> Self {
        Self {
            intercept_id,
            room_id,
            sender,
            original_body,
            payload,
            state: InterceptState::Held,
            interception_count: 1,
            revision_bodies: Vec::new(),
            trail: vec![InterceptState::Held],
            rewarded: false,
            delivered_seq: None,
            client_msg_id,
            created_at,
        }
    }

    pub fn transition(&mut self, next: InterceptState) -> Result<(), TransitionError> {
        if !self.state.can_become(next) {
            return Err(TransitionError {
                from: self.state,
                to: next,
            });
        }
        self.state = next;
        self.trail.push(next);
        Ok(())
    }

    /// The body the partner received, once terminal.
    pub fn delivered_body(&self) -> Option<&str> {
        if !self.state.is_terminal() {
            return None;
        }
        if self.trail.contains(&InterceptState::Skipped) {
            Some(&self.original_body)
        } else {
            self.revision_bodies.last().map(String::as_str)
        }
    }
}

/// A guide result kept in its requester's private lane.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub owner: UserId,
    /// Position in the owner's lane, starting at 1.
    pub lane_seq: Seq,
    /// Latest delivered message seq when the guide was produced.
    pub after_seq: Seq,
    pub text: String,
    pub window_size: usize,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub owner: UserId,
    pub points: u32,
    /// Interceptions already rewarded; at most one point each.
    pub rewarded: Vec<InterceptId>,
}

impl ScoreRecord {
    pub fn new(owner: UserId) -> Self {
        Self {
            owner,
            points: 0,
            rewarded: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncidentKind {
    /// Delivered without a verdict because the classifier was unavailable.
    FailOpen,
    /// A room was hard-deleted.
    Purge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Incident {
    pub kind: IncidentKind,
    pub room_id: RoomId,
    pub at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<Seq>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}
