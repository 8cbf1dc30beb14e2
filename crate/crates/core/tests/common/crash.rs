use std::collections::BTreeSet;
use std::fs;
use std::sync::Arc;

use parley::classifier::Classifier;
use parley::domain::{InterventionMode, RoomId, StepClock, UserId};
use parley::engine::{Decision, Engine, EventKind, RecordingSink};
use parley::persistence::{self, CrashPoint, FileStore, Store};

const ROOM: &str = "crash-room";

fn engine(store: Arc<dyn Store>, sink: Arc<RecordingSink>) -> Engine {
    Engine::new(store, Classifier::rule_oracle())
        .with_clock(Arc::new(StepClock::default()))
        .with_sink(sink)
}

/// Flagged-then-revised, a plain exchange, a skip and a guide. Stops at the
/// first error, as a crashed process would.
async fn scenario(e: &Engine) -> Result<(), parley::engine::EngineError> {
    let room = RoomId::parse(ROOM).unwrap();
    let a = e
        .join(
            &room,
            InterventionMode::EmpatheticGuide,
            "Alice",
            "male",
            "en",
        )
        .await?
        .user;
    let b = e
        .join(
            &room,
            InterventionMode::EmpatheticGuide,
            "Bob",
            "female",
            "en",
        )
        .await?
        .user;
    let held = |evs: &[parley::engine::PipelineEvent]| {
        evs.iter()
            .find_map(|ev| match &ev.kind {
                EventKind::Intercepted { intercept_id, .. } => Some(intercept_id.clone()),
                _ => None,
            })
            .expect("flagged")
    };
    let ix = held(
        &e.submit(&room, &a, "You never listen, you idiot", Some("a1".into()))
            .await?,
    );
    e.resolve(
        &room,
        &a,
        &ix,
        Decision::Revise("I feel unheard and would like us to talk".into()),
    )
    .await?;
    e.submit(
        &room,
        &b,
        "Okay, let's talk after dinner",
        Some("b1".into()),
    )
    .await?;
    let ix = held(
        &e.submit(&room, &b, "Shut up already", Some("b2".into()))
            .await?,
    );
    e.resolve(&room, &b, &ix, Decision::Skip).await?;
    let ix = held(
        &e.submit(&room, &a, "Whatever, you are pathetic", Some("a2".into()))
            .await?,
    );
    e.resolve(
        &room,
        &a,
        &ix,
        Decision::Revise("I am tired and need a pause".into()),
    )
    .await?;
    e.request_guide(&room, &a).await?;
    Ok(())
}

fn line_lengths(path: &std::path::Path) -> Vec<usize> {
    fs::read(path)
        .unwrap()
        .split_inclusive(|b| *b == b'\n')
        .map(<[u8]>::len)
        .collect()
}

/// Crash at every commit and several byte cuts within it, then check the
/// recovered store against what was emitted. Returns the number of cases.
pub async fn every_cut() -> usize {
    let reference = tempfile::tempdir().unwrap();
    let store = Arc::new(FileStore::open(reference.path()).unwrap());
    scenario(&engine(store.clone(), Arc::default()))
        .await
        .unwrap();
    let lengths = line_lengths(&store.log_path());
    assert!(lengths.len() >= 8, "{} commits", lengths.len());

    let room = RoomId::parse(ROOM).unwrap();
    let mut cases = 0;
    for (commit, &len) in lengths.iter().enumerate() {
        for keep in BTreeSet::from([0, 1, len / 2, len - 1, len]) {
            let dir = tempfile::tempdir().unwrap();
            let sink = Arc::new(RecordingSink::default());
            let crashing = FileStore::open(dir.path()).unwrap().with_crash(CrashPoint {
                commit,
                keep_bytes: keep,
            });
            assert!(scenario(&engine(Arc::new(crashing), sink.clone()))
                .await
                .is_err());
            let emitted = sink.take();

            let reopened: Arc<dyn Store> = Arc::new(FileStore::open(dir.path()).unwrap());
            let durable = line_lengths(&dir.path().join("store.log"));
            let whole = keep == len;
            assert_eq!(
                durable.len(),
                commit + usize::from(whole),
                "commit {commit} keep {keep}"
            );

            // every emitted event is backed by a durable record
            let messages = persistence::load_messages(&*reopened, &room).unwrap_or_default();
            let delivered: Vec<_> = emitted
                .iter()
                .filter_map(|ev| match &ev.kind {
                    EventKind::Delivered { message, .. } => Some(message.clone()),
                    _ => None,
                })
                .collect();
            if whole {
                assert!(messages.starts_with(&delivered));
            } else {
                assert_eq!(messages, delivered, "commit {commit} keep {keep}");
            }

            if persistence::load_room(&*reopened, &room).unwrap().is_none() {
                assert!(emitted.is_empty());
                cases += 1;
                continue;
            }
            let recovered = engine(reopened.clone(), Arc::default());
            let records = recovered
                .store()
                .scan(ROOM, persistence::RecordKind::Interception)
                .unwrap()
                .len();
            let interceptions = persistence::load_interceptions(&*reopened, &room).unwrap();
            assert_eq!(records, interceptions.len());
            for name in ["Alice", "Bob"] {
                let user = UserId::new_unchecked(name);
                let rewarded = interceptions
                    .iter()
                    .filter(|r| r.sender == user && r.rewarded)
                    .count();
                assert_eq!(
                    recovered.score(&room, &user).await.unwrap() as usize,
                    rewarded,
                    "commit {commit} keep {keep}"
                );
                for ev in &emitted {
                    if let EventKind::Reward {
                        owner, new_total, ..
                    } = &ev.kind
                    {
                        if *owner == user {
                            assert!(*new_total as usize <= rewarded);
                        }
                    }
                }
                let replay = recovered.history(&room, &user, 0, 200).unwrap();
                assert_eq!(replay.messages, messages);
                assert!(replay.annotations.iter().all(|a| a.owner == user));
            }
            for rec in &interceptions {
                if let Some(seq) = rec.delivered_seq {
                    let msg = messages
                        .iter()
                        .find(|m| m.seq == seq)
                        .expect("delivered record has its message");
                    assert_eq!(Some(msg.body.as_str()), rec.delivered_body());
                }
            }
            // the room keeps working after recovery
            let next = messages.last().map_or(1, |m| m.seq + 1);
            let alice = UserId::new_unchecked("Alice");
            if recovered.session(&room).await.unwrap().is_member(&alice) {
                let evs = recovered
                    .submit(&room, &alice, "Back again, hello", None)
                    .await
                    .unwrap();
                match &evs[0].kind {
                    EventKind::Delivered { message, .. } => assert_eq!(message.seq, next),
                    other => panic!("{other:?}"),
                }
            }
            cases += 1;
        }
    }
    assert!(cases >= lengths.len() * 4);
    cases
}
