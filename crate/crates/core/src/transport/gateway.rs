//! Login, history and envelope routing on top of the engine, plus the hub
//! that fans engine events out to live connections.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::mpsc;

use super::protocol::{
    message_for, parse_client, ClientMessage, ProtocolError, ServerEnvelope, ServerMessage,
};
use crate::classifier::DEFAULT_LANGUAGE;
use crate::domain::{CapabilitySet, DomainError, InterventionMode, RoomId, Seq, UserId};
use crate::engine::{Audience, Decision, Engine, EngineError, EventSink, PipelineEvent};
use crate::persistence::{HistoryPage, HISTORY_PAGE};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("session is stale or unknown")]
    StaleSession,
    #[error("session belongs to another room")]
    WrongRoom,
    #[error("username {0:?} is connected already")]
    Connected(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::StaleSession => "stale_session",
            GatewayError::WrongRoom => "wrong_room",
            GatewayError::Connected(_) => "collision",
            GatewayError::Domain(DomainError::InvalidRoomId(_)) => "invalid_room",
            GatewayError::Domain(DomainError::UnknownMode(_)) => "unknown_mode",
            GatewayError::Protocol(e) => e.code(),
            GatewayError::Engine(e) => e.code(),
        }
    }

    pub fn retryable(&self) -> bool {
        matches!(self, GatewayError::Engine(e) if e.retryable())
    }

    pub fn notice(&self, client_msg_id: Option<String>) -> ServerEnvelope {
        ServerEnvelope::new(ServerMessage::ErrorNotice {
            code: self.code().to_string(),
            message: self.to_string(),
            retryable: self.retryable(),
            client_msg_id,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginRequest {
    pub username: String,
    pub room_id: String,
    pub mode: InterventionMode,
    #[serde(default)]
    pub partner_gender: String,
    /// Template language for a new room; ignored when joining.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginResponse {
    pub session_token: String,
    pub room_id: RoomId,
    pub user_id: UserId,
    pub mode: InterventionMode,
    pub capabilities: CapabilitySet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner: Option<UserId>,
    /// First page; follow `history.next_after_seq` via the history endpoint.
    pub history: HistoryPage,
    pub score: u32,
}

/// One envelope bound for one user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outbound {
    pub to: UserId,
    pub envelope: ServerEnvelope,
}

/// Map an event to envelopes for `members`, honoring its audience.
pub fn outbound_for(event: &PipelineEvent, members: &[UserId]) -> Vec<Outbound> {
    let actor = event.actor();
    let to = |user: &UserId| Outbound {
        to: user.clone(),
        envelope: ServerEnvelope::new(message_for(event, user == actor)),
    };
    match event.audience() {
        Audience::Only(user) => vec![to(&user)],
        Audience::Both => {
            let mut out = vec![to(actor)];
            out.extend(members.iter().filter(|m| *m != actor).map(to));
            out
        }
    }
}

pub type ConnId = u64;

#[derive(Debug)]
struct Conn {
    room: RoomId,
    user: UserId,
    tx: mpsc::UnboundedSender<ServerEnvelope>,
}

/// Live connections, each with an ordered unbounded outbound queue.
#[derive(Debug, Default)]
pub struct Hub {
    next: AtomicU64,
    conns: Mutex<HashMap<ConnId, Conn>>,
}

impl Hub {
    pub fn new() -> Self {
        Self::default()
    }

    fn conns(&self) -> std::sync::MutexGuard<'_, HashMap<ConnId, Conn>> {
        self.conns.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn register(
        &self,
        room: RoomId,
        user: UserId,
    ) -> (ConnId, mpsc::UnboundedReceiver<ServerEnvelope>) {
        let (tx, rx) = mpsc::unbounded_channel();
        let id = self.next.fetch_add(1, Ordering::Relaxed);
        self.conns().insert(id, Conn { room, user, tx });
        (id, rx)
    }

    pub fn unregister(&self, id: ConnId) {
        self.conns().remove(&id);
    }

    pub fn is_connected(&self, room: &RoomId, user: &UserId) -> bool {
        self.conns()
            .values()
            .any(|c| &c.room == room && &c.user == user && !c.tx.is_closed())
    }

    /// Queue `env` on every connection `user` has in `room`.
    pub fn push(&self, room: &RoomId, user: &UserId, env: &ServerEnvelope) {
        for c in self
            .conns()
            .values()
            .filter(|c| &c.room == room && &c.user == user)
        {
            let _ = c.tx.send(env.clone());
        }
    }

    pub fn push_conn(&self, id: ConnId, env: ServerEnvelope) {
        if let Some(c) = self.conns().get(&id) {
            let _ = c.tx.send(env);
        }
    }
}

impl EventSink for Hub {
    fn emit(&self, event: &PipelineEvent) {
        let conns = self.conns();
        let mut members: Vec<UserId> = conns
            .values()
            .filter(|c| c.room == event.room_id)
            .map(|c| c.user.clone())
            .collect();
        members.sort();
        members.dedup();
        for out in outbound_for(event, &members) {
            for c in conns
                .values()
                .filter(|c| c.room == event.room_id && c.user == out.to)
            {
                let _ = c.tx.send(out.envelope.clone());
            }
        }
    }
}

#[derive(Debug, Clone)]
struct SessionEntry {
    room: RoomId,
    user: UserId,
}

#[derive(Debug, Default)]
struct Sessions {
    by_token: HashMap<String, SessionEntry>,
    current: HashMap<(RoomId, UserId), String>,
}

pub struct Gateway {
    engine: Arc<Engine>,
    hub: Arc<Hub>,
    sessions: Mutex<Sessions>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("engine", &self.engine)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    /// `hub` should be the engine's event sink so that events reach live
    /// connections in commit order.
    pub fn new(engine: Arc<Engine>, hub: Arc<Hub>) -> Self {
        Self {
            engine,
            hub,
            sessions: Mutex::new(Sessions::default()),
        }
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn hub(&self) -> &Arc<Hub> {
        &self.hub
    }

    fn sessions(&self) -> std::sync::MutexGuard<'_, Sessions> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// The room and user behind a token; superseded tokens are stale.
    pub fn session(&self, token: &str) -> Result<(RoomId, UserId), GatewayError> {
        self.sessions()
            .by_token
            .get(token)
            .map(|s| (s.room.clone(), s.user.clone()))
            .ok_or(GatewayError::StaleSession)
    }

    pub async fn handle_login(&self, req: &LoginRequest) -> Result<LoginResponse, GatewayError> {
        let room = RoomId::parse(&req.room_id)?;
        let lang = req.language.as_deref().unwrap_or(DEFAULT_LANGUAGE);
        let joined = self
            .engine
            .join(&room, req.mode, &req.username, &req.partner_gender, lang)
            .await?;
        if joined.resumed && self.hub.is_connected(&room, &joined.user) {
            return Err(GatewayError::Connected(joined.user.to_string()));
        }
        let token = uuid::Uuid::new_v4().simple().to_string();
        {
            let mut s = self.sessions();
            let key = (room.clone(), joined.user.clone());
            if let Some(old) = s.current.insert(key, token.clone()) {
                s.by_token.remove(&old);
            }
            s.by_token.insert(
                token.clone(),
                SessionEntry {
                    room: room.clone(),
                    user: joined.user.clone(),
                },
            );
        }
        let history = self.engine.history(&room, &joined.user, 0, HISTORY_PAGE)?;
        let score = self.engine.score(&room, &joined.user).await?;
        Ok(LoginResponse {
            session_token: token,
            partner: joined
                .session
                .partner_of(&joined.user)
                .map(|p| p.user_id.clone()),
            mode: joined.session.mode,
            capabilities: joined.session.capabilities(),
            room_id: room,
            user_id: joined.user,
            history,
            score,
        })
    }

    pub fn history(
        &self,
        token: &str,
        room: &str,
        after_seq: Seq,
        limit: usize,
    ) -> Result<HistoryPage, GatewayError> {
        let (own_room, user) = self.session(token)?;
        if own_room.as_str() != room {
            return Err(GatewayError::WrongRoom);
        }
        Ok(self.engine.history(&own_room, &user, after_seq, limit)?)
    }

    /// Apply one client frame. Returns every envelope it produced, event
    /// envelopes for both members included; failures become an
    /// `error_notice` to the caller. Only an unknown token is an `Err`.
    pub async fn route_client_envelope(
        &self,
        token: &str,
        raw: &str,
    ) -> Result<Vec<Outbound>, GatewayError> {
        let (room, user) = self.session(token)?;
        let msg = match parse_client(raw) {
            Ok(m) => m,
            Err(e) => {
                return Ok(vec![Outbound {
                    to: user,
                    envelope: GatewayError::from(e).notice(None),
                }])
            }
        };
        let client_msg_id = msg.client_msg_id().map(str::to_string);
        let result = match msg {
            ClientMessage::Send {
                client_msg_id,
                body,
            } => self.engine.submit(&room, &user, &body, client_msg_id).await,
            ClientMessage::Skip { intercept_id } => {
                self.engine
                    .resolve(&room, &user, &intercept_id, Decision::Skip)
                    .await
            }
            ClientMessage::Revise { intercept_id, body } => {
                self.engine
                    .resolve(&room, &user, &intercept_id, Decision::Revise(body))
                    .await
            }
            ClientMessage::GuideRequest {} => self.engine.request_guide(&room, &user).await,
        };
        match result {
            Ok(events) => {
                let session = self.engine.session(&room).await?;
                let members: Vec<UserId> =
                    session.members.iter().map(|m| m.user_id.clone()).collect();
                Ok(events
                    .iter()
                    .flat_map(|e| outbound_for(e, &members))
                    .collect())
            }
            Err(e) => Ok(vec![Outbound {
                to: user,
                envelope: GatewayError::from(e).notice(client_msg_id),
            }]),
        }
    }
}
