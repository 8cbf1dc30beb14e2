//! A two-party chat service that screens outgoing messages for verbal
//! aggression and, depending on the room's intervention mode, holds them
//! with revision guidance, offers an on-demand feelings/needs guide and
//! rewards successful rewrites.
//!
//! The statistics and study tooling live in the `parley-study` crate and
//! are re-exported as [`study`].

pub mod classifier;
pub mod config;
pub mod domain;
pub mod engine;
pub mod persistence;
pub mod sim;
pub mod transport;

pub use parley_study as study;

use std::sync::Arc;

/// Wire an engine, hub and gateway together so events reach live connections.
pub fn assemble(
    store: Arc<dyn persistence::Store>,
    classifier: classifier::Classifier,
    clock: Arc<dyn domain::Clock>,
) -> Arc<transport::Gateway> {
    let hub = Arc::new(transport::Hub::new());
    let engine = engine::Engine::new(store, classifier)
        .with_clock(clock)
        .with_sink(hub.clone());
    Arc::new(transport::Gateway::new(Arc::new(engine), hub))
}
