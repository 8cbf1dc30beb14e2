//! Wire envelopes. Every frame is a JSON object with a version `v` and a
//! `type` tag from a closed set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::GuidancePayload;
use crate::domain::{ChatMessage, InterceptId};
use crate::engine::{Annotation, EventKind, PipelineEvent};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("malformed envelope: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(String),
    #[error("unknown envelope type {0:?}")]
    UnknownType(String),
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::Malformed(_) => "malformed",
            ProtocolError::UnsupportedVersion(_) => "unsupported_version",
            ProtocolError::UnknownType(_) => "unknown_type",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Send {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_msg_id: Option<String>,
        body: String,
    },
    Skip {
        intercept_id: InterceptId,
    },
    Revise {
        intercept_id: InterceptId,
        body: String,
    },
    GuideRequest {},
}

impl ClientMessage {
    pub const TYPES: [&'static str; 4] = ["send", "skip", "revise", "guide_request"];

    pub fn client_msg_id(&self) -> Option<&str> {
        match self {
            ClientMessage::Send { client_msg_id, .. } => client_msg_id.as_deref(),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("client message serializes");
        v["v"] = PROTOCOL_VERSION.into();
        v.to_string()
    }
}

/// Decode one client frame, distinguishing version, type and shape errors.
pub fn parse_client(raw: &str) -> Result<ClientMessage, ProtocolError> {
    let mut value: serde_json::Value =
        serde_json::from_str(raw).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| ProtocolError::Malformed("expected an object".into()))?;
    match obj.remove("v") {
        Some(v) if v.as_u64() == Some(u64::from(PROTOCOL_VERSION)) => {}
        Some(v) => return Err(ProtocolError::UnsupportedVersion(v.to_string())),
        None => return Err(ProtocolError::UnsupportedVersion("missing".into())),
    }
    let ty = obj
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| ProtocolError::Malformed("missing type".into()))?;
    if !ClientMessage::TYPES.contains(&ty) {
        return Err(ProtocolError::UnknownType(ty.to_string()));
    }
    serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    PeerMessage {
        message: ChatMessage,
    },
    EchoDelivered {
        message: ChatMessage,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_msg_id: Option<String>,
    },
    Intercepted {
        intercept_id: InterceptId,
        payload: GuidancePayload,
        attempt: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_msg_id: Option<String>,
    },
    GuideResult {
        annotation: Annotation,
    },
    Reward {
        intercept_id: InterceptId,
        delta: u32,
        new_total: u32,
    },
    ErrorNotice {
        code: String,
        message: String,
        retryable: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_msg_id: Option<String>,
    },
}

impl ServerMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            ServerMessage::PeerMessage { .. } => "peer_message",
            ServerMessage::EchoDelivered { .. } => "echo_delivered",
            ServerMessage::Intercepted { .. } => "intercepted",
            ServerMessage::GuideResult { .. } => "guide_result",
            ServerMessage::Reward { .. } => "reward",
            ServerMessage::ErrorNotice { .. } => "error_notice",
        }
    }

    /// Intervention content meant only for the acting user.
    pub fn is_intervention(&self) -> bool {
        matches!(
            self,
            ServerMessage::Intercepted { .. }
                | ServerMessage::GuideResult { .. }
                | ServerMessage::Reward { .. }
        )
    }

    pub fn error(code: &str, message: impl Into<String>, retryable: bool) -> Self {
        ServerMessage::ErrorNotice {
            code: code.to_string(),
            message: message.into(),
            retryable,
            client_msg_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerEnvelope {
    pub v: u32,
    #[serde(flatten)]
    pub msg: ServerMessage,
}

impl ServerEnvelope {
    pub fn new(msg: ServerMessage) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            msg,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server envelope serializes")
    }

    pub fn parse(raw: &str) -> Result<Self, ProtocolError> {
        let env: Self =
            serde_json::from_str(raw).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        if env.v != PROTOCOL_VERSION {
            return Err(ProtocolError::UnsupportedVersion(env.v.to_string()));
        }
        Ok(env)
    }
}

/// Server messages for one engine event as seen by `recipient`, who must be
/// in the event's audience.
pub fn message_for(event: &PipelineEvent, recipient_is_actor: bool) -> ServerMessage {
    match &event.kind {
        EventKind::Delivered {
            message,
            client_msg_id,
        } if recipient_is_actor => ServerMessage::EchoDelivered {
            message: message.clone(),
            client_msg_id: client_msg_id.clone(),
        },
        EventKind::Delivered { message, .. } => ServerMessage::PeerMessage {
            message: message.clone(),
        },
        EventKind::Intercepted {
            intercept_id,
            payload,
            attempt,
            client_msg_id,
            ..
        } => ServerMessage::Intercepted {
            intercept_id: intercept_id.clone(),
            payload: payload.clone(),
            attempt: *attempt,
            client_msg_id: client_msg_id.clone(),
        },
        EventKind::GuideResult { annotation } => ServerMessage::GuideResult {
            annotation: annotation.clone(),
        },
        EventKind::Reward {
            intercept_id,
            delta,
            new_total,
            ..
        } => ServerMessage::Reward {
            intercept_id: intercept_id.clone(),
            delta: *delta,
            new_total: *new_total,
        },
    }
}
