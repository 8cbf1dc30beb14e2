//! Write a conversation to the file store, reopen it, and export the room.

use std::sync::Arc;

use parley::classifier::Classifier;
use parley::domain::{InterventionMode, RoomId};
use parley::engine::{Decision, Engine, EventKind};
use parley::persistence::{self, FileStore};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let dir = std::env::temp_dir().join(format!("parley-replay-{}", std::process::id()));
    let room = RoomId::parse("replay")?;
    {
        let engine = Engine::new(Arc::new(FileStore::open(&dir)?), Classifier::rule_oracle());
        let mode = InterventionMode::EmpatheticGuide;
        let alice = engine.join(&room, mode, "Alice", "male", "en").await?.user;
        let bob = engine.join(&room, mode, "Bob", "female", "en").await?.user;
        engine
            .submit(&room, &bob, "Hey, I'm not going", None)
            .await?;
        let evs = engine
            .submit(&room, &alice, "You must listen to me", None)
            .await?;
        if let EventKind::Intercepted { intercept_id, .. } = &evs[0].kind {
            engine
                .resolve(
                    &room,
                    &alice,
                    intercept_id,
                    Decision::Revise("I'd really like us to talk about it".into()),
                )
                .await?;
        }
    }

    // a fresh process sees the same room
    let store = Arc::new(FileStore::open(&dir)?);
    let engine = Engine::new(store.clone(), Classifier::rule_oracle());
    let alice = engine
        .join(
            &room,
            InterventionMode::EmpatheticGuide,
            "Alice",
            "male",
            "en",
        )
        .await?;
    println!(
        "resumed: {}, score {}",
        alice.resumed,
        engine.score(&room, &alice.user).await?
    );
    for m in engine.history(&room, &alice.user, 0, 200)?.messages {
        println!("#{} {}: {}", m.seq, m.sender, m.body);
    }

    let mut out = Vec::new();
    let n = persistence::export_room(&*store, &room, &mut out)?;
    println!("\nexported {n} records, {} bytes of NDJSON", out.len());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
