//! Hold-classify-release pipeline, guide requests and reinforcement scoring.
//!
//! Each room is guarded by its own async mutex, so transitions for one room
//! run one at a time while rooms proceed independently. Classifier calls
//! happen with the lock released; the verdict is applied as a second locked
//! transition. Every transition commits to the store before memory changes
//! and before any event reaches the [`EventSink`].

pub mod record;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::{Arc, Mutex as StdMutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Mutex;

pub use record::{
    Annotation, Incident, IncidentKind, InterceptState, InterceptionRecord, ScoreRecord,
    TransitionError, MAX_INTERCEPTIONS,
};

use crate::classifier::{
    ClassificationOutcome, Classifier, ClassifyError, GuidancePayload, PromptVars, Verdict,
    GUIDE_WINDOW,
};
use crate::domain::{
    validate_username, ChatMessage, Clock, InterceptId, InterventionMode, MessageOrigin, RoomId,
    RoomSession, Seq, SystemClock, UserId, UserProfile, UsernameError,
};
use crate::persistence::{self, Batch, Store, StoreError, StoreRecord};

const NO_PARTNER: &str = "your partner";
const NO_GENDER: &str = "unspecified";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown room {0}")]
    UnknownRoom(String),
    #[error("{0} is not a member of this room")]
    NotAMember(String),
    #[error("message body is empty")]
    EmptyBody,
    #[error("revision is empty")]
    EmptyRevision,
    #[error("unknown interception {0}")]
    UnknownIntercept(String),
    #[error("interception {0} is already resolved")]
    AlreadyResolved(String),
    #[error("guide is not available in mode {0}")]
    GuideUnavailableForMode(InterventionMode),
    #[error("nothing to analyze yet")]
    EmptyWindow,
    #[error("guide backend timed out")]
    BackendTimeout,
    #[error("guide unavailable: {0}")]
    GuideFailed(String),
    #[error("room {room} runs in mode {existing}, not {requested}")]
    ModeConflict {
        room: String,
        existing: InterventionMode,
        requested: InterventionMode,
    },
    #[error("room is full")]
    RoomFull,
    #[error(transparent)]
    Username(#[from] UsernameError),
    #[error(transparent)]
    Storage(#[from] StoreError),
}

impl EngineError {
    /// Stable machine-readable code for error notices.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::UnknownRoom(_) => "unknown_room",
            EngineError::NotAMember(_) => "not_a_member",
            EngineError::EmptyBody => "empty_body",
            EngineError::EmptyRevision => "empty_revision",
            EngineError::UnknownIntercept(_) => "unknown_intercept",
            EngineError::AlreadyResolved(_) => "already_resolved",
            EngineError::GuideUnavailableForMode(_) => "guide_unavailable_for_mode",
            EngineError::EmptyWindow => "empty_window",
            EngineError::BackendTimeout => "backend_timeout",
            EngineError::GuideFailed(_) => "guide_failed",
            EngineError::ModeConflict { .. } => "mode_conflict",
            EngineError::RoomFull => "room_full",
            EngineError::Username(UsernameError::Collision(_)) => "collision",
            EngineError::Username(_) => "invalid_username",
            EngineError::Storage(_) => "storage_failure",
        }
    }

    pub fn retryable(&self) -> bool {
        matches!(
            self,
            EngineError::BackendTimeout | EngineError::GuideFailed(_) | EngineError::Storage(_)
        )
    }
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Delivered {
        message: ChatMessage,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_msg_id: Option<String>,
    },
    Intercepted {
        sender: UserId,
        intercept_id: InterceptId,
        payload: GuidancePayload,
        /// 1 for the first hold, 2 after a flagged revision.
        attempt: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_msg_id: Option<String>,
    },
    GuideResult {
        annotation: Annotation,
    },
    Reward {
        owner: UserId,
        intercept_id: InterceptId,
        delta: u32,
        new_total: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Audience {
    Both,
    Only(UserId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineEvent {
    pub room_id: RoomId,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl PipelineEvent {
    /// The user whose action produced the event.
    pub fn actor(&self) -> &UserId {
        match &self.kind {
            EventKind::Delivered { message, .. } => &message.sender,
            EventKind::Intercepted { sender, .. } => sender,
            EventKind::GuideResult { annotation } => &annotation.owner,
            EventKind::Reward { owner, .. } => owner,
        }
    }

    /// Deliveries go to both members; everything else only to the actor.
    pub fn audience(&self) -> Audience {
        match &self.kind {
            EventKind::Delivered { .. } => Audience::Both,
            _ => Audience::Only(self.actor().clone()),
        }
    }

    pub fn is_intervention(&self) -> bool {
        !matches!(self.kind, EventKind::Delivered { .. })
    }
}

/// Receives events in commit order, while the room lock is held.
pub trait EventSink: Send + Sync {
    fn emit(&self, event: &PipelineEvent);
}

#[derive(Debug, Default)]
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&self, _event: &PipelineEvent) {}
}

/// Records everything emitted; handy in tests and the simulator.
#[derive(Debug, Default)]
pub struct RecordingSink {
    events: StdMutex<Vec<PipelineEvent>>,
}

impl RecordingSink {
    pub fn take(&self) -> Vec<PipelineEvent> {
        std::mem::take(&mut *self.events.lock().unwrap_or_else(|p| p.into_inner()))
    }
}

impl EventSink for RecordingSink {
    fn emit(&self, event: &PipelineEvent) {
        self.events
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(event.clone());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "body", rename_all = "snake_case")]
pub enum Decision {
    Skip,
    Revise(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinOutcome {
    pub session: RoomSession,
    pub user: UserId,
    /// The name matched an existing member, who is resumed.
    pub resumed: bool,
}

#[derive(Debug)]
struct RoomState {
    session: RoomSession,
    recent: VecDeque<ChatMessage>,
    intercepts: BTreeMap<InterceptId, InterceptionRecord>,
    next_intercept: u64,
    scores: HashMap<UserId, ScoreRecord>,
    lanes: HashMap<UserId, Seq>,
    incidents: u64,
    seen: HashSet<(UserId, String)>,
}

impl RoomState {
    fn fresh(session: RoomSession) -> Self {
        Self {
            session,
            recent: VecDeque::with_capacity(GUIDE_WINDOW + 1),
            intercepts: BTreeMap::new(),
            next_intercept: 1,
            scores: HashMap::new(),
            lanes: HashMap::new(),
            incidents: 0,
            seen: HashSet::new(),
        }
    }

    fn load(store: &dyn Store, session: RoomSession) -> Result<Self> {
        let room = session.room_id.clone();
        let mut st = Self::fresh(session);
        let messages = persistence::load_messages(store, &room)?;
        st.recent
            .extend(messages.into_iter().rev().take(GUIDE_WINDOW).rev());
        for rec in persistence::load_interceptions(store, &room)? {
            st.intercepts.insert(rec.intercept_id.clone(), rec);
        }
        st.next_intercept = st.intercepts.len() as u64 + 1;
        for score in persistence::load_scores(store, &room)? {
            st.scores.insert(score.owner.clone(), score);
        }
        for ann in persistence::load_annotations(store, &room)? {
            let lane = st.lanes.entry(ann.owner.clone()).or_default();
            *lane = (*lane).max(ann.lane_seq);
        }
        st.incidents = persistence::load_incidents(store, room.as_str())?.len() as u64;
        Ok(st)
    }

    fn member(&self, user: &UserId) -> Result<&UserProfile> {
        self.session
            .member(user)
            .ok_or_else(|| EngineError::NotAMember(user.to_string()))
    }

    fn vars(&self, user: &UserId) -> PromptVars {
        let gender = self
            .session
            .member(user)
            .map(|p| p.partner_gender.trim())
            .unwrap_or_default();
        let partner = self
            .session
            .partner_of(user)
            .map(|p| p.user_id.as_str())
            .unwrap_or(NO_PARTNER);
        PromptVars::new(
            user.as_str(),
            partner,
            if gender.is_empty() { NO_GENDER } else { gender },
        )
    }

    fn latest_seq(&self) -> Seq {
        self.session.next_seq - 1
    }

    fn intercept_mut(
        &mut self,
        actor: &UserId,
        id: &InterceptId,
    ) -> Result<&mut InterceptionRecord> {
        match self.intercepts.get_mut(id) {
            Some(rec) if &rec.sender == actor => Ok(rec),
            _ => Err(EngineError::UnknownIntercept(id.to_string())),
        }
    }
}

/// A delivery staged for commit; applied to memory only after the commit.
struct Staged {
    message: ChatMessage,
    session: RoomSession,
}

pub struct Engine {
    store: Arc<dyn Store>,
    classifier: Classifier,
    clock: Arc<dyn Clock>,
    sink: Arc<dyn EventSink>,
    rooms: StdMutex<HashMap<RoomId, Arc<Mutex<RoomState>>>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("classifier", &self.classifier)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(store: Arc<dyn Store>, classifier: Classifier) -> Self {
        Self {
            store,
            classifier,
            clock: Arc::new(SystemClock),
            sink: Arc::new(NullSink),
            rooms: StdMutex::new(HashMap::new()),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_sink(mut self, sink: Arc<dyn EventSink>) -> Self {
        self.sink = sink;
        self
    }

    pub fn store(&self) -> &Arc<dyn Store> {
        &self.store
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    fn rooms(&self) -> std::sync::MutexGuard<'_, HashMap<RoomId, Arc<Mutex<RoomState>>>> {
        self.rooms.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn room(&self, id: &RoomId) -> Result<Arc<Mutex<RoomState>>> {
        let mut rooms = self.rooms();
        if let Some(r) = rooms.get(id) {
            return Ok(r.clone());
        }
        let session = persistence::load_room(&*self.store, id)?
            .ok_or_else(|| EngineError::UnknownRoom(id.to_string()))?;
        let st = Arc::new(Mutex::new(RoomState::load(&*self.store, session)?));
        rooms.insert(id.clone(), st.clone());
        Ok(st)
    }

    fn room_or_create(
        &self,
        id: &RoomId,
        mode: InterventionMode,
        language: &str,
    ) -> Result<Arc<Mutex<RoomState>>> {
        match self.room(id) {
            Err(EngineError::UnknownRoom(_)) => {}
            other => return other,
        }
        let mut rooms = self.rooms();
        if let Some(r) = rooms.get(id) {
            return Ok(r.clone());
        }
        let session = RoomSession::new(id.clone(), mode, language);
        self.store
            .commit(Batch::new().put(StoreRecord::room(&session)))?;
        let st = Arc::new(Mutex::new(RoomState::fresh(session)));
        rooms.insert(id.clone(), st.clone());
        Ok(st)
    }

    /// Drop cached room state so the next access reloads from the store.
    pub fn evict(&self, id: &RoomId) {
        self.rooms().remove(id);
    }

    /// Create or join a room. A name equal to an existing member's resumes
    /// that member.
    pub async fn join(
        &self,
        room: &RoomId,
        mode: InterventionMode,
        username: &str,
        partner_gender: &str,
        language: &str,
    ) -> Result<JoinOutcome> {
        let user = validate_username(username, [])?;
        let handle = self.room_or_create(room, mode, language)?;
        let mut st = handle.lock().await;
        if st.session.mode != mode {
            return Err(EngineError::ModeConflict {
                room: room.to_string(),
                existing: st.session.mode,
                requested: mode,
            });
        }
        if st.session.is_member(&user) {
            return Ok(JoinOutcome {
                session: st.session.clone(),
                user,
                resumed: true,
            });
        }
        if st.session.members.len() >= RoomSession::CAPACITY {
            return Err(EngineError::RoomFull);
        }
        let mut session = st.session.clone();
        session.members.push(UserProfile {
            user_id: user.clone(),
            partner_gender: partner_gender.trim().to_string(),
        });
        self.store
            .commit(Batch::new().put(StoreRecord::room(&session)))?;
        st.session = session.clone();
        Ok(JoinOutcome {
            session,
            user,
            resumed: false,
        })
    }

    pub async fn session(&self, room: &RoomId) -> Result<RoomSession> {
        Ok(self.room(room)?.lock().await.session.clone())
    }

    /// Screen and deliver or hold one outgoing message. A repeated
    /// `client_msg_id` from the same sender is ignored.
    pub async fn submit(
        &self,
        room: &RoomId,
        sender: &UserId,
        body: &str,
        client_msg_id: Option<String>,
    ) -> Result<Vec<PipelineEvent>> {
        let handle = self.room(room)?;
        let (mode, lang, vars) = {
            let mut st = handle.lock().await;
            st.member(sender)?;
            if body.trim().is_empty() {
                return Err(EngineError::EmptyBody);
            }
            if let Some(id) = &client_msg_id {
                if !st.seen.insert((sender.clone(), id.clone())) {
                    return Ok(Vec::new());
                }
            }
            if st.session.mode == InterventionMode::Baseline {
                return self.finish_submit(
                    &mut st,
                    sender,
                    body,
                    client_msg_id,
                    Ok(ClassificationOutcome::pass()),
                );
            }
            (
                st.session.mode,
                st.session.language.clone(),
                st.vars(sender),
            )
        };
        let verdict = self
            .classifier
            .classify_outgoing(&lang, mode, &vars, body)
            .await;
        let mut st = handle.lock().await;
        self.finish_submit(&mut st, sender, body, client_msg_id, verdict)
    }

    fn finish_submit(
        &self,
        st: &mut RoomState,
        sender: &UserId,
        body: &str,
        client_msg_id: Option<String>,
        verdict: Result<ClassificationOutcome, ClassifyError>,
    ) -> Result<Vec<PipelineEvent>> {
        let room = st.session.room_id.clone();
        let result = match verdict {
            Ok(ClassificationOutcome {
                verdict: Verdict::Pass,
                ..
            })
            | Ok(ClassificationOutcome { payload: None, .. }) => {
                let staged = self.stage(st, sender, body, MessageOrigin::Direct, None);
                self.commit_delivery(st, staged, Batch::new(), client_msg_id.clone())
            }
            Ok(ClassificationOutcome {
                payload: Some(payload),
                ..
            }) => {
                let id = InterceptId::new(format!("ix-{}", st.next_intercept));
                let rec = InterceptionRecord::held(
                    id.clone(),
                    room.clone(),
                    sender.clone(),
                    body.to_string(),
                    payload.clone(),
                    client_msg_id.clone(),
                    self.clock.now(),
                );
                self.store
                    .commit(Batch::new().put(StoreRecord::interception(&rec)))
                    .map_err(EngineError::from)
                    .map(|()| {
                        st.intercepts.insert(id.clone(), rec);
                        st.next_intercept += 1;
                        let kind = EventKind::Intercepted {
                            sender: sender.clone(),
                            intercept_id: id,
                            payload,
                            attempt: 1,
                            client_msg_id: client_msg_id.clone(),
                        };
                        vec![self.emit(&room, kind)]
                    })
            }
            Err(err) => {
                let staged = self.stage(st, sender, body, MessageOrigin::Direct, None);
                let extra = self.fail_open_incident(st, staged.message.seq, sender, &err);
                self.commit_delivery(st, staged, extra, client_msg_id.clone())
                    .inspect(|_| st.incidents += 1)
            }
        };
        if result.is_err() {
            if let Some(id) = client_msg_id {
                st.seen.remove(&(sender.clone(), id));
            }
        }
        result
    }

    fn fail_open_incident(
        &self,
        st: &RoomState,
        seq: Seq,
        sender: &UserId,
        err: &ClassifyError,
    ) -> Batch {
        tracing::warn!(room = %st.session.room_id, %sender, seq, error = %err, "classifier unavailable, delivering unscreened");
        let incident = Incident {
            kind: IncidentKind::FailOpen,
            room_id: st.session.room_id.clone(),
            at: self.clock.now(),
            seq: Some(seq),
            detail: err.to_string(),
        };
        Batch::new().put(StoreRecord::incident(
            st.session.room_id.as_str(),
            st.incidents + 1,
            &incident,
        ))
    }

    fn stage(
        &self,
        st: &RoomState,
        sender: &UserId,
        body: &str,
        origin: MessageOrigin,
        intercept_id: Option<InterceptId>,
    ) -> Staged {
        let mut session = st.session.clone();
        let message = ChatMessage {
            seq: session.next_seq,
            sender: sender.clone(),
            body: body.to_string(),
            sent_at: self.clock.now(),
            origin,
            intercept_id,
        };
        session.next_seq += 1;
        Staged { message, session }
    }

    fn commit_delivery(
        &self,
        st: &mut RoomState,
        staged: Staged,
        mut extra: Batch,
        client_msg_id: Option<String>,
    ) -> Result<Vec<PipelineEvent>> {
        let room = st.session.room_id.clone();
        extra.push(StoreRecord::message(&room, &staged.message));
        extra.push(StoreRecord::room(&staged.session));
        self.store.commit(extra)?;
        st.session = staged.session;
        st.recent.push_back(staged.message.clone());
        if st.recent.len() > GUIDE_WINDOW {
            st.recent.pop_front();
        }
        Ok(vec![self.emit(
            &room,
            EventKind::Delivered {
                message: staged.message,
                client_msg_id,
            },
        )])
    }

    fn emit(&self, room: &RoomId, kind: EventKind) -> PipelineEvent {
        let event = PipelineEvent {
            room_id: room.clone(),
            kind,
        };
        self.sink.emit(&event);
        event
    }

    /// Apply the sender's decision on a held message.
    pub async fn resolve(
        &self,
        room: &RoomId,
        actor: &UserId,
        intercept_id: &InterceptId,
        decision: Decision,
    ) -> Result<Vec<PipelineEvent>> {
        let handle = self.room(room)?;
        let (mode, lang, vars, new_body) = {
            let mut st = handle.lock().await;
            st.member(actor)?;
            let (mode, lang, vars) = (st.session.mode, st.session.language.clone(), st.vars(actor));
            let rec = st.intercept_mut(actor, intercept_id)?;
            if rec.state != InterceptState::Held {
                return Err(EngineError::AlreadyResolved(intercept_id.to_string()));
            }
            match decision {
                Decision::Skip => return self.skip(&mut st, actor, intercept_id),
                Decision::Revise(body) if body.trim().is_empty() => {
                    return Err(EngineError::EmptyRevision)
                }
                Decision::Revise(body) => {
                    // guards against a concurrent second decision while classifying
                    rec.state = InterceptState::RevisedPending;
                    (mode, lang, vars, body)
                }
            }
        };
        let verdict = self
            .classifier
            .classify_outgoing(&lang, mode, &vars, &new_body)
            .await;
        let mut st = handle.lock().await;
        let result = self.finish_revision(&mut st, actor, intercept_id, new_body, verdict);
        if result.is_err() {
            if let Ok(rec) = st.intercept_mut(actor, intercept_id) {
                rec.state = InterceptState::Held;
            }
        }
        result
    }

    fn skip(
        &self,
        st: &mut RoomState,
        actor: &UserId,
        id: &InterceptId,
    ) -> Result<Vec<PipelineEvent>> {
        let mut rec = st.intercept_mut(actor, id)?.clone();
        rec.transition(InterceptState::Skipped)
            .expect("held record can be skipped");
        let staged = self.stage(
            st,
            actor,
            &rec.original_body,
            MessageOrigin::SkippedOriginal,
            Some(id.clone()),
        );
        rec.transition(InterceptState::Delivered)
            .expect("skipped record can be delivered");
        rec.delivered_seq = Some(staged.message.seq);
        let client_msg_id = rec.client_msg_id.clone();
        let events = self.commit_delivery(
            st,
            staged,
            Batch::new().put(StoreRecord::interception(&rec)),
            client_msg_id,
        )?;
        st.intercepts.insert(id.clone(), rec);
        Ok(events)
    }

    fn finish_revision(
        &self,
        st: &mut RoomState,
        actor: &UserId,
        id: &InterceptId,
        new_body: String,
        verdict: Result<ClassificationOutcome, ClassifyError>,
    ) -> Result<Vec<PipelineEvent>> {
        let room = st.session.room_id.clone();
        let mut rec = st.intercept_mut(actor, id)?.clone();
        rec.state = InterceptState::Held;
        rec.transition(InterceptState::RevisedPending)
            .expect("held record can be revised");
        rec.revision_bodies.push(new_body.clone());
        let client_msg_id = rec.client_msg_id.clone();

        let (next, incident_err) = match &verdict {
            Ok(ClassificationOutcome {
                verdict: Verdict::Flagged,
                payload: Some(payload),
            }) => {
                if rec.interception_count < MAX_INTERCEPTIONS {
                    rec.transition(InterceptState::Held)
                        .expect("pending record can be re-held");
                    rec.interception_count += 1;
                    rec.payload = payload.clone();
                    self.store
                        .commit(Batch::new().put(StoreRecord::interception(&rec)))?;
                    let kind = EventKind::Intercepted {
                        sender: actor.clone(),
                        intercept_id: id.clone(),
                        payload: payload.clone(),
                        attempt: rec.interception_count,
                        client_msg_id,
                    };
                    st.intercepts.insert(id.clone(), rec);
                    return Ok(vec![self.emit(&room, kind)]);
                }
                (InterceptState::ForcedDelivered, None)
            }
            Ok(_) => (InterceptState::Delivered, None),
            Err(e) => (InterceptState::Delivered, Some(e)),
        };

        rec.transition(next)
            .expect("pending record can be delivered");
        let staged = self.stage(
            st,
            actor,
            &new_body,
            MessageOrigin::Revised,
            Some(id.clone()),
        );
        rec.delivered_seq = Some(staged.message.seq);
        let mut batch = match incident_err {
            Some(err) => self.fail_open_incident(st, staged.message.seq, actor, err),
            None => Batch::new(),
        };

        let earns_reward = incident_err.is_none()
            && next == InterceptState::Delivered
            && st.session.capabilities().reinforcement_enabled
            && new_body != rec.original_body
            && !rec.rewarded;
        let mut score = None;
        if earns_reward {
            rec.rewarded = true;
            let mut s = st
                .scores
                .get(actor)
                .cloned()
                .unwrap_or_else(|| ScoreRecord::new(actor.clone()));
            s.points += 1;
            s.rewarded.push(id.clone());
            batch.push(StoreRecord::score(&room, &s));
            score = Some(s);
        }
        batch.push(StoreRecord::interception(&rec));

        let mut events = self.commit_delivery(st, staged, batch, client_msg_id)?;
        if incident_err.is_some() {
            st.incidents += 1;
        }
        st.intercepts.insert(id.clone(), rec);
        if let Some(s) = score {
            let new_total = s.points;
            st.scores.insert(actor.clone(), s);
            let kind = EventKind::Reward {
                owner: actor.clone(),
                intercept_id: id.clone(),
                delta: 1,
                new_total,
            };
            events.push(self.emit(&room, kind));
        }
        Ok(events)
    }

    /// Analyze the newest delivered messages for `requester` and keep the
    /// result in their private lane.
    pub async fn request_guide(
        &self,
        room: &RoomId,
        requester: &UserId,
    ) -> Result<Vec<PipelineEvent>> {
        let handle = self.room(room)?;
        let (mode, lang, vars, window) = {
            let st = handle.lock().await;
            st.member(requester)?;
            if !st.session.capabilities().guide_enabled {
                return Err(EngineError::GuideUnavailableForMode(st.session.mode));
            }
            if st.recent.is_empty() {
                return Err(EngineError::EmptyWindow);
            }
            let window: Vec<ChatMessage> = st.recent.iter().cloned().collect();
            (
                st.session.mode,
                st.session.language.clone(),
                st.vars(requester),
                window,
            )
        };
        let analysis = self
            .classifier
            .generate_guide(&lang, mode, &window, &vars, requester)
            .await
            .map_err(|e| match e {
                ClassifyError::BackendTimeout => EngineError::BackendTimeout,
                ClassifyError::GuideUnavailableForMode(m) => {
                    EngineError::GuideUnavailableForMode(m)
                }
                other => EngineError::GuideFailed(other.to_string()),
            })?;
        let mut st = handle.lock().await;
        let lane_seq = st.lanes.get(requester).copied().unwrap_or(0) + 1;
        let annotation = Annotation {
            owner: requester.clone(),
            lane_seq,
            after_seq: window.last().map_or(st.latest_seq(), |m| m.seq),
            text: analysis.text,
            window_size: analysis.window_size,
            created_at: self.clock.now(),
        };
        self.store
            .commit(Batch::new().put(StoreRecord::annotation(room, &annotation)))?;
        st.lanes.insert(requester.clone(), lane_seq);
        Ok(vec![self.emit(room, EventKind::GuideResult { annotation })])
    }

    /// The newest delivered messages, at most [`GUIDE_WINDOW`], oldest first.
    pub async fn context_window(&self, room: &RoomId) -> Result<Vec<ChatMessage>> {
        Ok(self
            .room(room)?
            .lock()
            .await
            .recent
            .iter()
            .cloned()
            .collect())
    }

    pub async fn score(&self, room: &RoomId, owner: &UserId) -> Result<u32> {
        Ok(self
            .room(room)?
            .lock()
            .await
            .scores
            .get(owner)
            .map_or(0, |s| s.points))
    }

    pub async fn interception(
        &self,
        room: &RoomId,
        id: &InterceptId,
    ) -> Result<Option<InterceptionRecord>> {
        Ok(self.room(room)?.lock().await.intercepts.get(id).cloned())
    }

    /// Records still awaiting a decision from `user`.
    pub async fn pending_for(
        &self,
        room: &RoomId,
        user: &UserId,
    ) -> Result<Vec<InterceptionRecord>> {
        let st = self.room(room)?;
        let st = st.lock().await;
        Ok(st
            .intercepts
            .values()
            .filter(|r| &r.sender == user && !r.state.is_terminal())
            .cloned()
            .collect())
    }

    pub fn incidents(&self, room: &RoomId) -> Result<Vec<Incident>> {
        Ok(persistence::load_incidents(&*self.store, room.as_str())?)
    }

    pub fn history(
        &self,
        room: &RoomId,
        requester: &UserId,
        after_seq: Seq,
        limit: usize,
    ) -> Result<persistence::HistoryPage> {
        persistence::load_history(&*self.store, room, Some(requester), after_seq, limit).map_err(
            |e| match e {
                StoreError::UnknownRoom(r) => EngineError::UnknownRoom(r),
                other => EngineError::Storage(other),
            },
        )
    }
}
