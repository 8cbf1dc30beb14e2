use std::sync::Arc;

use parley::classifier::Classifier;
use parley::domain::{InterventionMode, PromptStyle, StepClock};
use parley::persistence::MemoryStore;
use parley::sim::{self, SimConfig, SimReport};
use parley::transport::Gateway;

fn gateway() -> Arc<Gateway> {
    parley::assemble(
        Arc::new(MemoryStore::new()),
        Classifier::rule_oracle(),
        Arc::new(StepClock::default()),
    )
}

async fn run(mode: InterventionMode, seed: u64) -> (Arc<Gateway>, SimReport) {
    let gw = gateway();
    let cfg = SimConfig {
        mode,
        seed,
        messages: 200,
        ..SimConfig::default()
    };
    let report = sim::run(&gw, &cfg).await.unwrap();
    (gw, report)
}

#[tokio::test]
async fn same_seed_same_transcript() {
    let (_, a) = run(InterventionMode::EmpatheticGuide, 11).await;
    let (_, b) = run(InterventionMode::EmpatheticGuide, 11).await;
    assert_eq!(a.received, b.received);
    assert_eq!(a.stats, b.stats);
    let (_, c) = run(InterventionMode::EmpatheticGuide, 12).await;
    assert_ne!(a.received, c.received);
}

#[tokio::test]
async fn no_leaks_and_shared_order_in_every_mode() {
    for mode in InterventionMode::ALL {
        let (gw, report) = run(mode, 3).await;
        assert_eq!(report.leaks(gw.engine()).await.unwrap(), 0, "{mode:?}");
        let [a, b] = &report.users;
        let seqs = report.delivered_seqs(a);
        assert_eq!(seqs, report.delivered_seqs(b), "{mode:?}");
        assert!(
            seqs.windows(2).all(|w| w[1] == w[0] + 1),
            "{mode:?} gap in {seqs:?}"
        );
        assert_eq!(report.stats.error_notices, 0, "{mode:?}");

        let caps = mode.capabilities();
        if caps.prompt_style != PromptStyle::None {
            assert!(report.stats.intercepted > 0, "{mode:?}");
        } else {
            assert_eq!(report.stats.intercepted, 0);
            assert_eq!(seqs.len(), report.stats.sent);
        }
        if !caps.reinforcement_enabled {
            assert_eq!(report.stats.rewards, 0, "{mode:?}");
        }
        assert_eq!(report.stats.guides > 0, caps.guide_enabled, "{mode:?}");
    }
}
