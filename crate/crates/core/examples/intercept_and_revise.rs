//! Hold an aggressive message, revise it, and collect the private reward.

use std::sync::Arc;

use parley::classifier::Classifier;
use parley::domain::{InterventionMode, RoomId};
use parley::engine::{Decision, Engine, EventKind};
use parley::persistence::MemoryStore;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let engine = Engine::new(Arc::new(MemoryStore::new()), Classifier::rule_oracle());
    let room = RoomId::parse("demo")?;
    let mode = InterventionMode::EmpatheticGuide;
    let alice = engine.join(&room, mode, "Alice", "male", "en").await?.user;
    engine.join(&room, mode, "Bob", "female", "en").await?;

    let events = engine
        .submit(&room, &alice, "You are just selfish", None)
        .await?;
    let EventKind::Intercepted {
        intercept_id,
        payload,
        ..
    } = &events[0].kind
    else {
        anyhow::bail!("expected a hold");
    };
    println!("held {intercept_id}:\n{}\n", payload.display_text);

    let revised = "I felt left out last night. Could we plan the weekend together?";
    for ev in engine
        .resolve(
            &room,
            &alice,
            intercept_id,
            Decision::Revise(revised.into()),
        )
        .await?
    {
        match ev.kind {
            EventKind::Delivered { message, .. } => {
                println!("delivered #{}: {}", message.seq, message.body)
            }
            EventKind::Reward { new_total, .. } => println!("reward, Alice now has {new_total}"),
            other => println!("{other:?}"),
        }
    }
    Ok(())
}
