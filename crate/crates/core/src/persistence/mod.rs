//! Durable storage of rooms, messages, annotations, interceptions, scores and incidents.
//!
//! Everything goes through [`Store::commit`], which applies a [`Batch`]
//! atomically: after a crash either every operation of a batch is visible
//! or none is.

mod file;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Duration as ChronoDuration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use file::{CrashPoint, FileStore, LOG_FILE};

use crate::domain::{ChatMessage, RoomId, RoomSession, Seq, UserId};
use crate::engine::record::{Annotation, Incident, IncidentKind, InterceptionRecord, ScoreRecord};

/// Largest page `load_history` returns.
pub const HISTORY_PAGE: usize = 200;
/// Room id under which store-wide incidents (purge tombstones) are filed.
pub const GLOBAL_SCOPE: &str = "";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    Failure(String),
    #[error("corrupt store at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("unknown room {0}")]
    UnknownRoom(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Room,
    Message,
    Annotation,
    Interception,
    Score,
    Incident,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordId {
    Seq(Seq),
    Name(String),
    Lane { owner: String, seq: Seq },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StoreKey {
    pub room: String,
    pub kind: RecordKind,
    pub id: RecordId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum RecordValue {
    Room(RoomSession),
    Message(ChatMessage),
    Annotation(Annotation),
    Interception(InterceptionRecord),
    Score(ScoreRecord),
    Incident(Incident),
}

impl RecordValue {
    pub fn kind(&self) -> RecordKind {
        match self {
            RecordValue::Room(_) => RecordKind::Room,
            RecordValue::Message(_) => RecordKind::Message,
            RecordValue::Annotation(_) => RecordKind::Annotation,
            RecordValue::Interception(_) => RecordKind::Interception,
            RecordValue::Score(_) => RecordKind::Score,
            RecordValue::Incident(_) => RecordKind::Incident,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub key: StoreKey,
    pub value: RecordValue,
}

impl StoreRecord {
    pub fn room(session: &RoomSession) -> Self {
        Self {
            key: room_key(&session.room_id),
            value: RecordValue::Room(session.clone()),
        }
    }

    pub fn message(room: &RoomId, msg: &ChatMessage) -> Self {
        Self {
            key: key(room.as_str(), RecordKind::Message, RecordId::Seq(msg.seq)),
            value: RecordValue::Message(msg.clone()),
        }
    }

    pub fn annotation(room: &RoomId, ann: &Annotation) -> Self {
        let id = RecordId::Lane {
            owner: ann.owner.to_string(),
            seq: ann.lane_seq,
        };
        Self {
            key: key(room.as_str(), RecordKind::Annotation, id),
            value: RecordValue::Annotation(ann.clone()),
        }
    }

    pub fn interception(rec: &InterceptionRecord) -> Self {
        let id = RecordId::Name(rec.intercept_id.to_string());
        Self {
            key: key(rec.room_id.as_str(), RecordKind::Interception, id),
            value: RecordValue::Interception(rec.clone()),
        }
    }

    pub fn score(room: &RoomId, score: &ScoreRecord) -> Self {
        let id = RecordId::Name(score.owner.to_string());
        Self {
            key: key(room.as_str(), RecordKind::Score, id),
            value: RecordValue::Score(score.clone()),
        }
    }

    /// `scope` is the room for room incidents or [`GLOBAL_SCOPE`].
    pub fn incident(scope: &str, n: u64, incident: &Incident) -> Self {
        Self {
            key: key(scope, RecordKind::Incident, RecordId::Seq(n)),
            value: RecordValue::Incident(incident.clone()),
        }
    }
}

fn key(room: &str, kind: RecordKind, id: RecordId) -> StoreKey {
    StoreKey {
        room: room.to_string(),
        kind,
        id,
    }
}

pub fn room_key(room: &RoomId) -> StoreKey {
    key(
        room.as_str(),
        RecordKind::Room,
        RecordId::Name(String::new()),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Op {
    Put(StoreRecord),
    Delete { key: StoreKey },
}

/// Operations applied all-or-nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub ops: Vec<Op>,
}

impl Batch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(mut self, rec: StoreRecord) -> Self {
        self.ops.push(Op::Put(rec));
        self
    }

    pub fn push(&mut self, rec: StoreRecord) {
        self.ops.push(Op::Put(rec));
    }

    pub fn delete(&mut self, key: StoreKey) {
        self.ops.push(Op::Delete { key });
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

pub trait Store: Send + Sync {
    fn commit(&self, batch: Batch) -> Result<(), StoreError>;

    fn get(&self, key: &StoreKey) -> Result<Option<StoreRecord>, StoreError>;

    /// Records of one kind in one room, in key order.
    fn scan(&self, room: &str, kind: RecordKind) -> Result<Vec<StoreRecord>, StoreError>;

    /// Every record filed under `room`, in key order.
    fn scan_room(&self, room: &str) -> Result<Vec<StoreRecord>, StoreError>;

    fn rooms(&self) -> Result<Vec<RoomId>, StoreError>;

    /// Drop superseded data from durable storage. Purges rely on this to
    /// remove deleted content physically.
    fn compact(&self) -> Result<(), StoreError> {
        Ok(())
    }
}

/// Ordered key space shared by the shipped stores.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub(crate) struct Index {
    map: BTreeMap<StoreKey, StoreRecord>,
}

impl Index {
    pub(crate) fn apply(&mut self, batch: &Batch) {
        for op in &batch.ops {
            match op {
                Op::Put(rec) => {
                    self.map.insert(rec.key.clone(), rec.clone());
                }
                Op::Delete { key } => {
                    self.map.remove(key);
                }
            }
        }
    }

    fn get(&self, key: &StoreKey) -> Option<StoreRecord> {
        self.map.get(key).cloned()
    }

    fn scan(&self, room: &str, kind: Option<RecordKind>) -> Vec<StoreRecord> {
        self.map
            .range(key(room, kind.unwrap_or(RecordKind::Room), RecordId::Seq(0))..)
            .take_while(|(k, _)| k.room == room && kind.is_none_or(|kind| k.kind == kind))
            .map(|(_, v)| v.clone())
            .collect()
    }

    fn rooms(&self) -> Vec<RoomId> {
        self.map
            .values()
            .filter_map(|r| match &r.value {
                RecordValue::Room(s) => Some(s.room_id.clone()),
                _ => None,
            })
            .collect()
    }

    pub(crate) fn records(&self) -> impl Iterator<Item = &StoreRecord> {
        self.map.values()
    }
}

/// In-process store for tests and ephemeral servers.
#[derive(Debug, Default)]
pub struct MemoryStore {
    index: Mutex<Index>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Store for MemoryStore {
    fn commit(&self, batch: Batch) -> Result<(), StoreError> {
        lock(&self.index).apply(&batch);
        Ok(())
    }

    fn get(&self, key: &StoreKey) -> Result<Option<StoreRecord>, StoreError> {
        Ok(lock(&self.index).get(key))
    }

    fn scan(&self, room: &str, kind: RecordKind) -> Result<Vec<StoreRecord>, StoreError> {
        Ok(lock(&self.index).scan(room, Some(kind)))
    }

    fn scan_room(&self, room: &str) -> Result<Vec<StoreRecord>, StoreError> {
        Ok(lock(&self.index).scan(room, None))
    }

    fn rooms(&self) -> Result<Vec<RoomId>, StoreError> {
        Ok(lock(&self.index).rooms())
    }
}

/// Wraps a store and rejects commits while the fault switch is on.
#[derive(Debug)]
pub struct FaultyStore<S> {
    inner: S,
    failing: AtomicBool,
}

impl<S: Store> FaultyStore<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            failing: AtomicBool::new(false),
        }
    }

    pub fn set_failing(&self, on: bool) {
        self.failing.store(on, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: Store> Store for FaultyStore<S> {
    fn commit(&self, batch: Batch) -> Result<(), StoreError> {
        if self.failing.load(Ordering::SeqCst) {
            return Err(StoreError::Failure("injected fault".into()));
        }
        self.inner.commit(batch)
    }

    fn get(&self, key: &StoreKey) -> Result<Option<StoreRecord>, StoreError> {
        self.inner.get(key)
    }

    fn scan(&self, room: &str, kind: RecordKind) -> Result<Vec<StoreRecord>, StoreError> {
        self.inner.scan(room, kind)
    }

    fn scan_room(&self, room: &str) -> Result<Vec<StoreRecord>, StoreError> {
        self.inner.scan_room(room)
    }

    fn rooms(&self) -> Result<Vec<RoomId>, StoreError> {
        self.inner.rooms()
    }

    fn compact(&self) -> Result<(), StoreError> {
        self.inner.compact()
    }
}

impl<S: Store + ?Sized> Store for std::sync::Arc<S> {
    fn commit(&self, batch: Batch) -> Result<(), StoreError> {
        (**self).commit(batch)
    }

    fn get(&self, key: &StoreKey) -> Result<Option<StoreRecord>, StoreError> {
        (**self).get(key)
    }

    fn scan(&self, room: &str, kind: RecordKind) -> Result<Vec<StoreRecord>, StoreError> {
        (**self).scan(room, kind)
    }

    fn scan_room(&self, room: &str) -> Result<Vec<StoreRecord>, StoreError> {
        (**self).scan_room(room)
    }

    fn rooms(&self) -> Result<Vec<RoomId>, StoreError> {
        (**self).rooms()
    }

    fn compact(&self) -> Result<(), StoreError> {
        (**self).compact()
    }
}

pub fn load_room(store: &dyn Store, room: &RoomId) -> Result<Option<RoomSession>, StoreError> {
    Ok(store.get(&room_key(room))?.and_then(|r| match r.value {
        RecordValue::Room(s) => Some(s),
        _ => None,
    }))
}

macro_rules! scan_as {
    ($store:expr, $room:expr, $kind:ident) => {
        $store.scan($room, RecordKind::$kind).map(|recs| {
            recs.into_iter()
                .filter_map(|r| match r.value {
                    RecordValue::$kind(v) => Some(v),
                    _ => None,
                })
                .collect::<Vec<_>>()
        })
    };
}

pub fn load_messages(store: &dyn Store, room: &RoomId) -> Result<Vec<ChatMessage>, StoreError> {
    scan_as!(store, room.as_str(), Message)
}

pub fn load_interceptions(
    store: &dyn Store,
    room: &RoomId,
) -> Result<Vec<InterceptionRecord>, StoreError> {
    scan_as!(store, room.as_str(), Interception)
}

pub fn load_scores(store: &dyn Store, room: &RoomId) -> Result<Vec<ScoreRecord>, StoreError> {
    scan_as!(store, room.as_str(), Score)
}

pub fn load_annotations(store: &dyn Store, room: &RoomId) -> Result<Vec<Annotation>, StoreError> {
    scan_as!(store, room.as_str(), Annotation)
}

/// Incidents filed under `scope` (a room id or [`GLOBAL_SCOPE`]).
pub fn load_incidents(store: &dyn Store, scope: &str) -> Result<Vec<Incident>, StoreError> {
    scan_as!(store, scope, Incident)
}

pub fn load_score(
    store: &dyn Store,
    room: &RoomId,
    owner: &UserId,
) -> Result<ScoreRecord, StoreError> {
    let k = key(
        room.as_str(),
        RecordKind::Score,
        RecordId::Name(owner.to_string()),
    );
    Ok(match store.get(&k)?.map(|r| r.value) {
        Some(RecordValue::Score(s)) => s,
        _ => ScoreRecord::new(owner.clone()),
    })
}

/// One page of history as seen by one user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryPage {
    pub messages: Vec<ChatMessage>,
    /// The requester's own annotations anchored inside this page's seq range.
    pub annotations: Vec<Annotation>,
    /// `after_seq` for the next page, if more messages remain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_after_seq: Option<Seq>,
}

/// Delivered messages with `seq > after_seq`, at most `limit` (clamped to
/// `1..=HISTORY_PAGE`), plus `requester`'s annotations anchored in the page.
pub fn load_history(
    store: &dyn Store,
    room: &RoomId,
    requester: Option<&UserId>,
    after_seq: Seq,
    limit: usize,
) -> Result<HistoryPage, StoreError> {
    if load_room(store, room)?.is_none() {
        return Err(StoreError::UnknownRoom(room.to_string()));
    }
    let limit = limit.clamp(1, HISTORY_PAGE);
    let all = load_messages(store, room)?;
    let mut rest = all.into_iter().filter(|m| m.seq > after_seq);
    let messages: Vec<ChatMessage> = rest.by_ref().take(limit).collect();
    let more = rest.next().is_some();
    let hi = if more {
        messages.last().map(|m| m.seq)
    } else {
        None
    };
    let annotations = match requester {
        None => Vec::new(),
        Some(user) => load_annotations(store, room)?
            .into_iter()
            .filter(|a| &a.owner == user)
            .filter(|a| {
                (after_seq == 0 || a.after_seq > after_seq) && hi.is_none_or(|hi| a.after_seq <= hi)
            })
            .collect(),
    };
    Ok(HistoryPage {
        next_after_seq: hi,
        messages,
        annotations,
    })
}

/// Follow [`load_history`] pages from the start.
pub fn load_full_history(
    store: &dyn Store,
    room: &RoomId,
    requester: Option<&UserId>,
) -> Result<HistoryPage, StoreError> {
    let mut out = HistoryPage {
        messages: Vec::new(),
        annotations: Vec::new(),
        next_after_seq: None,
    };
    let mut after = 0;
    loop {
        let page = load_history(store, room, requester, after, HISTORY_PAGE)?;
        out.messages.extend(page.messages);
        out.annotations.extend(page.annotations);
        match page.next_after_seq {
            Some(next) => after = next,
            None => return Ok(out),
        }
    }
}

/// Write every record of `room` as one JSON object per line.
pub fn export_room(
    store: &dyn Store,
    room: &RoomId,
    out: &mut dyn Write,
) -> Result<usize, StoreError> {
    if load_room(store, room)?.is_none() {
        return Err(StoreError::UnknownRoom(room.to_string()));
    }
    let records = store.scan_room(room.as_str())?;
    for rec in &records {
        serde_json::to_writer(&mut *out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(records.len())
}

/// Load an export produced by [`export_room`] as one atomic batch.
pub fn import_records(store: &dyn Store, input: &mut dyn BufRead) -> Result<usize, StoreError> {
    let mut batch = Batch::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StoreRecord = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if rec.key.room == GLOBAL_SCOPE || rec.key.kind != rec.value.kind() {
            return Err(StoreError::Corrupt {
                line: i + 1,
                reason: "record does not belong to a room".into(),
            });
        }
        batch.push(rec);
    }
    let n = batch.ops.len();
    store.commit(batch)?;
    Ok(n)
}

/// Hard-delete a room and leave a tombstone naming only the room and time.
pub fn purge_room(
    store: &dyn Store,
    room: &RoomId,
    now: DateTime<Utc>,
) -> Result<usize, StoreError> {
    if load_room(store, room)?.is_none() {
        return Err(StoreError::UnknownRoom(room.to_string()));
    }
    let doomed = store.scan_room(room.as_str())?;
    let mut batch = Batch::new();
    for rec in &doomed {
        batch.delete(rec.key.clone());
    }
    let n = load_incidents(store, GLOBAL_SCOPE)?.len() as u64 + 1;
    let tombstone = Incident {
        kind: IncidentKind::Purge,
        room_id: room.clone(),
        at: now,
        seq: None,
        detail: String::new(),
    };
    batch.push(StoreRecord::incident(GLOBAL_SCOPE, n, &tombstone));
    store.commit(batch)?;
    store.compact()?;
    Ok(doomed.len())
}

/// Purge rooms whose newest message (or creation, if empty) is older than
/// `days`. Returns the purged room ids.
pub fn purge_expired(
    store: &dyn Store,
    days: u32,
    now: DateTime<Utc>,
) -> Result<Vec<RoomId>, StoreError> {
    let cutoff = now - ChronoDuration::days(i64::from(days));
    let mut purged = Vec::new();
    for room in store.rooms()? {
        let last = load_messages(store, &room)?.last().map(|m| m.sent_at);
        if last.is_some_and(|t| t < cutoff) {
            purge_room(store, &room, now)?;
            purged.push(room);
        }
    }
    Ok(purged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Clock, InterventionMode, MessageOrigin, StepClock, UserProfile};
    use proptest::prelude::*;

    fn room() -> RoomId {
        RoomId::parse("r1").unwrap()
    }

    fn seed(store: &dyn Store, n: u64) {
        let clock = StepClock::default();
        let mut session = RoomSession::new(room(), InterventionMode::NeutralGuide, "en");
        for name in ["Alice", "Bob"] {
            session.members.push(UserProfile {
                user_id: UserId::new_unchecked(name),
                partner_gender: "x".into(),
            });
        }
        let mut batch = Batch::new();
        for seq in 1..=n {
            let sender = UserId::new_unchecked(if seq % 2 == 1 { "Alice" } else { "Bob" });
            let msg = ChatMessage {
                seq,
                sender,
                body: format!("m{seq}"),
                sent_at: clock.now(),
                origin: MessageOrigin::Direct,
                intercept_id: None,
            };
            batch.push(StoreRecord::message(&room(), &msg));
        }
        session.next_seq = n + 1;
        batch.push(StoreRecord::room(&session));
        store.commit(batch).unwrap();
    }

    fn annotate(store: &dyn Store, owner: &str, lane_seq: Seq, after_seq: Seq) {
        let ann = Annotation {
            owner: UserId::new_unchecked(owner),
            lane_seq,
            after_seq,
            text: format!("{owner} note {lane_seq}"),
            window_size: 3,
            created_at: StepClock::default().now(),
        };
        store
            .commit(Batch::new().put(StoreRecord::annotation(&room(), &ann)))
            .unwrap();
    }

    #[test]
    fn history_slicing() {
        let s = MemoryStore::new();
        seed(&s, 5);
        let all = load_history(&s, &room(), None, 0, 200).unwrap();
        assert_eq!(
            all.messages.iter().map(|m| m.seq).collect::<Vec<_>>(),
            vec![1, 2, 3, 4, 5]
        );
        assert_eq!(all.next_after_seq, None);
        let one = load_history(&s, &room(), None, 3, 1).unwrap();
        assert_eq!(
            one.messages.iter().map(|m| m.seq).collect::<Vec<_>>(),
            vec![4]
        );
        assert_eq!(one.next_after_seq, Some(4));
        assert!(matches!(
            load_history(&s, &RoomId::parse("nope").unwrap(), None, 0, 10),
            Err(StoreError::UnknownRoom(_))
        ));
    }

    #[test]
    fn pages_cap_at_two_hundred() {
        let s = MemoryStore::new();
        seed(&s, 450);
        let page = load_history(&s, &room(), None, 0, 10_000).unwrap();
        assert_eq!(page.messages.len(), HISTORY_PAGE);
        let full = load_full_history(&s, &room(), None).unwrap();
        assert_eq!(full.messages.len(), 450);
        assert!(full.messages.windows(2).all(|w| w[1].seq == w[0].seq + 1));
    }

    #[test]
    fn export_purge_import_round_trip() {
        let s = MemoryStore::new();
        seed(&s, 12);
        annotate(&s, "Alice", 1, 4);
        let mut first = Vec::new();
        export_room(&s, &room(), &mut first).unwrap();
        purge_room(&s, &room(), StepClock::default().now()).unwrap();
        assert!(s.scan_room("r1").unwrap().is_empty());
        let tomb = load_incidents(&s, GLOBAL_SCOPE).unwrap();
        assert_eq!(tomb.len(), 1);
        assert_eq!(tomb[0].room_id, room());
        import_records(&s, &mut first.as_slice()).unwrap();
        let mut second = Vec::new();
        export_room(&s, &room(), &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn retention_purges_only_stale_rooms() {
        let s = MemoryStore::new();
        seed(&s, 3);
        let start = StepClock::default().now();
        assert!(purge_expired(&s, 30, start + ChronoDuration::days(2))
            .unwrap()
            .is_empty());
        assert_eq!(
            purge_expired(&s, 30, start + ChronoDuration::days(31)).unwrap(),
            vec![room()]
        );
    }

    #[test]
    fn faulty_store_rejects_commits() {
        let s = FaultyStore::new(MemoryStore::new());
        s.set_failing(true);
        assert!(matches!(
            s.commit(Batch::new()),
            Err(StoreError::Failure(_))
        ));
        s.set_failing(false);
        seed(&s, 1);
        assert_eq!(load_messages(&s, &room()).unwrap().len(), 1);
    }

    proptest! {
        #[test]
        fn annotations_stay_private(plan in prop::collection::vec((any::<bool>(), 0u64..20), 0..30), after in 0u64..20, limit in 1usize..25) {
            let s = MemoryStore::new();
            seed(&s, 20);
            let mut lanes = [0u64; 2];
            for (alice, anchor) in &plan {
                let who = usize::from(!*alice);
                lanes[who] += 1;
                annotate(&s, ["Alice", "Bob"][who], lanes[who], *anchor);
            }
            let bob = UserId::new_unchecked("Bob");
            let page = load_history(&s, &room(), Some(&bob), after, limit).unwrap();
            prop_assert!(page.annotations.iter().all(|a| a.owner == bob));
            let full = load_full_history(&s, &room(), Some(&bob)).unwrap();
            prop_assert_eq!(full.annotations.len() as u64, lanes[1]);
        }
    }
}
