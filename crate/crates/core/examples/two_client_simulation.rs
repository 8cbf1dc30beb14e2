//! Scripted two-client conversation in every mode, checking that no
//! intervention ever reaches the partner.

use std::sync::Arc;

use parley::classifier::Classifier;
use parley::domain::{InterventionMode, SystemClock};
use parley::persistence::MemoryStore;
use parley::sim::{self, SimConfig};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    for mode in InterventionMode::ALL {
        let gw = parley::assemble(
            Arc::new(MemoryStore::new()),
            Classifier::rule_oracle(),
            Arc::new(SystemClock),
        );
        let cfg = SimConfig {
            mode,
            ..SimConfig::default()
        };
        let report = sim::run(&gw, &cfg).await?;
        let s = &report.stats;
        println!(
            "{:<17} sent {} held {} skipped {} revised {} guides {} rewards {} leaks {}",
            mode.as_str(),
            s.sent,
            s.intercepted,
            s.skipped,
            s.revised,
            s.guides,
            s.rewards,
            report.leaks(gw.engine()).await?
        );
    }
    Ok(())
}
