//! Ask for a guide after a longer exchange; only the last twenty messages
//! are analysed and the result is visible to the requester alone.

use std::sync::Arc;

use parley::classifier::Classifier;
use parley::domain::{InterventionMode, RoomId};
use parley::engine::Engine;
use parley::persistence::MemoryStore;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let engine = Engine::new(Arc::new(MemoryStore::new()), Classifier::rule_oracle());
    let room = RoomId::parse("guide-demo")?;
    let mode = InterventionMode::NeutralGuide;
    let alice = engine.join(&room, mode, "Alice", "male", "en").await?.user;
    let bob = engine.join(&room, mode, "Bob", "female", "en").await?.user;

    for i in 0..14 {
        engine
            .submit(
                &room,
                &alice,
                &format!("Did you see my note about the rent? ({i})"),
                None,
            )
            .await?;
        engine
            .submit(
                &room,
                &bob,
                "I'm so tired and feel down, work keeps piling up",
                None,
            )
            .await?;
    }
    let window = engine.context_window(&room).await?;
    println!(
        "window: seq {}..={}",
        window[0].seq,
        window[window.len() - 1].seq
    );

    engine.request_guide(&room, &alice).await?;
    let mine = engine.history(&room, &alice, 0, 200)?;
    let theirs = engine.history(&room, &bob, 0, 200)?;
    let note = &mine.annotations[0];
    println!(
        "guide for Alice after #{} ({} chars):\n{}",
        note.after_seq,
        note.text.chars().count(),
        note.text
    );
    println!("\nannotations Bob can see: {}", theirs.annotations.len());
    Ok(())
}
