//! A classifier that never answers: messages still go through after the
//! timeout and each miss is logged as an incident.

use std::sync::Arc;
use std::time::{Duration, Instant};

use parley::classifier::{Classifier, StubBackend};
use parley::domain::{InterventionMode, RoomId};
use parley::engine::Engine;
use parley::persistence::MemoryStore;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let classifier =
        Classifier::new(Arc::new(StubBackend::Hang)).with_timeout(Duration::from_millis(250));
    let engine = Engine::new(Arc::new(MemoryStore::new()), classifier);
    let room = RoomId::parse("outage")?;
    let alice = engine
        .join(
            &room,
            InterventionMode::BasicReminder,
            "Alice",
            "male",
            "en",
        )
        .await?
        .user;

    for body in ["You are useless", "sorry, that was harsh"] {
        let t = Instant::now();
        let events = engine.submit(&room, &alice, body, None).await?;
        println!("{body:?} -> {} event(s) in {:?}", events.len(), t.elapsed());
    }
    for inc in engine.incidents(&room)? {
        println!(
            "incident {:?} at seq {:?}: {}",
            inc.kind, inc.seq, inc.detail
        );
    }
    Ok(())
}
