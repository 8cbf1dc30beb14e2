//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

#[path = "common/crash.rs"]
mod crash;
#[path = "../../study/tests/oracle/mod.rs"]
mod oracle;

use std::collections::HashMap;
use std::future::Future;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use parley::classifier::{
    BackendError, BackendKind, Classifier, CompletionBackend, CompletionRequest, PromptVars,
    StubBackend, Task, FLAG_SENTINEL, GUIDE_MAX_CHARS, GUIDE_WINDOW, PASS_SENTINEL,
};
use parley::domain::{InterventionMode, PromptStyle, RoomId, StepClock, UserId};
use parley::engine::{
    Decision, Engine, EngineError, EventKind, IncidentKind, InterceptState, PipelineEvent,
    RecordingSink, MAX_INTERCEPTIONS,
};
use parley::persistence::MemoryStore;
use parley::sim::{self, SimConfig};
use parley::study::stats::{cronbach_alpha, friedman_test, wilcoxon_signed_rank};
use parley::study::topics::{select_balanced_topics, Band, TopicScore};
use parley::study::Condition;

const DESTRUCTIVE: &[&str] = &[
    "You are just selfish",
    "You are useless",
    "You must listen to me",
    "whatever",
    "let it be",
    "Your temper is so awful; who would want to be in a relationship with you?",
    "Alright, stop being unreasonable",
];

const NORMAL: &[&str] = &[
    "Hey, I'm not going",
    "Babe, don't be mad, it's my fault",
    "I'm not going away, I just want to stick with you",
    "I'm so tired and feel down",
    "You'll be the death of me one day, hmph!",
];

fn engine(classifier: Classifier) -> (Engine, Arc<RecordingSink>) {
    let sink = Arc::new(RecordingSink::default());
    let e = Engine::new(Arc::new(MemoryStore::new()), classifier)
        .with_clock(Arc::new(StepClock::default()))
        .with_sink(sink.clone());
    (e, sink)
}

async fn pair(e: &Engine, room: &str, mode: InterventionMode) -> (RoomId, UserId, UserId) {
    let room = RoomId::parse(room).unwrap();
    let a = e
        .join(&room, mode, "Alice", "male", "en")
        .await
        .unwrap()
        .user;
    let b = e
        .join(&room, mode, "Bob", "female", "en")
        .await
        .unwrap()
        .user;
    (room, a, b)
}

fn intercepted(evs: &[PipelineEvent]) -> Option<parley::domain::InterceptId> {
    evs.iter().find_map(|ev| match &ev.kind {
        EventKind::Intercepted { intercept_id, .. } => Some(intercept_id.clone()),
        _ => None,
    })
}

fn delivered(evs: &[PipelineEvent]) -> bool {
    evs.iter()
        .any(|ev| matches!(ev.kind, EventKind::Delivered { .. }))
}

fn rewards(evs: &[PipelineEvent]) -> usize {
    evs.iter()
        .filter(|ev| matches!(ev.kind, EventKind::Reward { .. }))
        .count()
}

async fn corpus_fidelity() -> String {
    let started = Instant::now();
    let (e, _) = engine(Classifier::rule_oracle());
    let (room, a, _) = pair(&e, "corpus", InterventionMode::EmpatheticGuide).await;
    let mut misses = 0;
    for body in DESTRUCTIVE {
        let evs = e.submit(&room, &a, body, None).await.unwrap();
        misses += usize::from(intercepted(&evs).is_none() || delivered(&evs));
    }
    let mut false_holds = 0;
    for body in NORMAL {
        let evs = e.submit(&room, &a, body, None).await.unwrap();
        false_holds += usize::from(!delivered(&evs));
    }
    let took = started.elapsed();
    assert_eq!((misses, false_holds), (0, 0));
    assert!(took < Duration::from_secs(1), "{took:?}");
    format!(
        "{} destructive held, {} normal delivered, {took:.0?}",
        DESTRUCTIVE.len(),
        NORMAL.len()
    )
}

async fn asymmetry() -> String {
    let started = Instant::now();
    let mut total = 0;
    for mode in InterventionMode::ALL {
        let cfg = SimConfig {
            room: format!("asym-{}", mode.as_str()),
            mode,
            messages: 500,
            aggressive_ratio: 0.2,
            ..SimConfig::default()
        };
        let run = || async {
            let gw = parley::assemble(
                Arc::new(MemoryStore::new()),
                Classifier::rule_oracle(),
                Arc::new(StepClock::default()),
            );
            let report = sim::run(&gw, &cfg).await.unwrap();
            let leaks = report.leaks(gw.engine()).await.unwrap();
            (report, leaks)
        };
        let (first, leaks) = run().await;
        let (second, _) = run().await;
        assert_eq!(leaks, 0, "{mode:?}");
        assert_eq!(
            first.received, second.received,
            "{mode:?} not deterministic"
        );
        assert!(first.stats.sent >= 500);
        let interventions = first
            .received
            .values()
            .flatten()
            .filter(|env| env.msg.is_intervention())
            .count();
        if mode != InterventionMode::Baseline {
            assert!(interventions > 0, "{mode:?} produced no interventions");
        }
        total += first.stats.sent;
    }
    let took = started.elapsed();
    assert!(took < Duration::from_secs(30), "{took:?}");
    format!("{total} messages over 4 modes, 0 leaks, {took:.0?}")
}

/// Flags by prefix: "always:" on every screening, "once:" only the first
/// time a body is seen.
#[derive(Default)]
struct Scripted {
    seen: Mutex<HashMap<String, usize>>,
}

#[async_trait]
impl CompletionBackend for Scripted {
    fn kind(&self) -> BackendKind {
        BackendKind::Stub
    }

    async fn complete(&self, req: CompletionRequest) -> Result<String, BackendError> {
        let Task::Classify { mode } = req.task else {
            return Ok("Try naming the feeling first.".into());
        };
        let n = {
            let mut seen = self.seen.lock().unwrap();
            let c = seen.entry(req.content.clone()).or_default();
            *c += 1;
            *c
        };
        let flag =
            req.content.starts_with("always:") || (req.content.starts_with("once:") && n == 1);
        Ok(match (flag, mode.capabilities().prompt_style) {
            (false, _) => PASS_SENTINEL.into(),
            (true, PromptStyle::FixedReminder) => FLAG_SENTINEL.into(),
            (true, _) => "You sound hurt. Consider saying what you need.".into(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Path {
    Skip,
    RevisePass,
    RevisePassUnchanged,
    ReviseFlagRevisePass,
    ReviseFlagReviseFlag,
}

async fn state_machine() -> String {
    use InterceptState::*;
    let allowed = [
        (Held, Skipped),
        (Held, RevisedPending),
        (Skipped, Delivered),
        (RevisedPending, Held),
        (RevisedPending, Delivered),
        (RevisedPending, ForcedDelivered),
    ];
    let all = [Held, Skipped, RevisedPending, Delivered, ForcedDelivered];
    for from in all {
        for to in all {
            assert_eq!(
                from.can_become(to),
                allowed.contains(&(from, to)),
                "{from:?} -> {to:?}"
            );
        }
    }

    let paths = [
        Path::Skip,
        Path::RevisePass,
        Path::RevisePassUnchanged,
        Path::ReviseFlagRevisePass,
        Path::ReviseFlagReviseFlag,
    ];
    let mut checked = 0;
    for mode in InterventionMode::ALL {
        for (i, path) in paths.into_iter().enumerate() {
            let (e, _) = engine(Classifier::new(Arc::new(Scripted::default())));
            let (room, a, _) = pair(&e, &format!("sm-{}-{i}", mode.as_str()), mode).await;
            let original = match path {
                Path::RevisePassUnchanged => "once:you never help",
                _ => "always:you never help",
            };
            let evs = e.submit(&room, &a, original, None).await.unwrap();
            let Some(id) = intercepted(&evs) else {
                assert_eq!(mode, InterventionMode::Baseline);
                assert!(delivered(&evs));
                checked += 1;
                continue;
            };
            let steps: &[Decision] = match path {
                Path::Skip => &[Decision::Skip],
                Path::RevisePass => &[Decision::Revise("I feel alone with the chores".into())],
                Path::RevisePassUnchanged => &[Decision::Revise(original.into())],
                Path::ReviseFlagRevisePass => &[
                    Decision::Revise("always:still harsh".into()),
                    Decision::Revise("I need a hand tonight".into()),
                ],
                Path::ReviseFlagReviseFlag => &[
                    Decision::Revise("always:still harsh".into()),
                    Decision::Revise("always:harsher".into()),
                ],
            };
            let mut reward_events = 0;
            for d in steps {
                let evs = e.resolve(&room, &a, &id, d.clone()).await.unwrap();
                reward_events += rewards(&evs);
                let rec = e.interception(&room, &id).await.unwrap().unwrap();
                assert!(rec.interception_count <= MAX_INTERCEPTIONS);
            }
            let rec = e.interception(&room, &id).await.unwrap().unwrap();
            assert!(
                rec.state.is_terminal(),
                "{mode:?} {path:?} ended in {:?}",
                rec.state
            );
            let expected_trail: &[InterceptState] = match path {
                Path::Skip => &[Held, Skipped, Delivered],
                Path::RevisePass | Path::RevisePassUnchanged => &[Held, RevisedPending, Delivered],
                Path::ReviseFlagRevisePass => {
                    &[Held, RevisedPending, Held, RevisedPending, Delivered]
                }
                Path::ReviseFlagReviseFlag => {
                    &[Held, RevisedPending, Held, RevisedPending, ForcedDelivered]
                }
            };
            assert_eq!(rec.trail, expected_trail, "{mode:?} {path:?}");
            assert!(matches!(
                e.resolve(&room, &a, &id, Decision::Skip).await,
                Err(EngineError::AlreadyResolved(_))
            ));
            let should_reward = mode == InterventionMode::EmpatheticGuide
                && matches!(path, Path::RevisePass | Path::ReviseFlagRevisePass);
            assert_eq!(
                reward_events,
                usize::from(should_reward),
                "{mode:?} {path:?}"
            );
            assert_eq!(rec.rewarded, should_reward);
            assert_eq!(e.score(&room, &a).await.unwrap(), u32::from(should_reward));
            checked += 1;
        }
    }
    format!("{checked} mode/path runs, transition table exhaustive")
}

async fn window_and_cap() -> String {
    for n in [0usize, 7, 20, 21, 100] {
        let (e, _) = engine(Classifier::rule_oracle());
        let (room, a, b) = pair(&e, &format!("win-{n}"), InterventionMode::Baseline).await;
        for i in 0..n {
            let who = if i % 2 == 0 { &a } else { &b };
            e.submit(&room, who, &format!("message number {i}"), None)
                .await
                .unwrap();
        }
        let window = e.context_window(&room).await.unwrap();
        let want = n.min(GUIDE_WINDOW);
        assert_eq!(window.len(), want, "room of {n}");
        let seqs: Vec<u64> = window.iter().map(|m| m.seq).collect();
        let expect: Vec<u64> = ((n - want) as u64 + 1..=n as u64).collect();
        assert_eq!(seqs, expect);
    }

    let adversarial = [
        "x".repeat(10_000),
        "This keeps going and going. ".repeat(400)[..10_000].to_string(),
        "情绪".repeat(5_000),
        "1. heading\n- bullet that never ends ".repeat(300)[..10_000].to_string(),
        "\u{1F600}".repeat(10_000),
        format!("{}.", "word ".repeat(1_999)),
    ];
    let window: Vec<_> = (0..25)
        .map(|i| parley::domain::ChatMessage {
            seq: i + 1,
            sender: UserId::new_unchecked(if i % 2 == 0 { "Alice" } else { "Bob" }),
            body: format!("line {i}"),
            sent_at: chrono::DateTime::UNIX_EPOCH,
            origin: parley::domain::MessageOrigin::Direct,
            intercept_id: None,
        })
        .collect();
    let vars = PromptVars::new("Alice", "Bob", "female");
    for text in &adversarial {
        let c = Classifier::new(Arc::new(StubBackend::Reply(text.clone())));
        let g = c
            .generate_guide(
                "en",
                InterventionMode::EmpatheticGuide,
                &window,
                &vars,
                &UserId::new_unchecked("Alice"),
            )
            .await
            .unwrap();
        assert_eq!(g.window_size, GUIDE_WINDOW);
        let len = g.text.chars().count();
        assert!(len > 0 && len <= GUIDE_MAX_CHARS, "{len}");
    }
    format!(
        "window sizes 0/7/20/21/100 ok, {} adversarial outputs capped",
        adversarial.len()
    )
}

async fn topic_calibration() -> String {
    let scores: Vec<TopicScore> = [12.11, 12.36, 12.31, 12.36, 5.0, 20.0]
        .iter()
        .enumerate()
        .map(|(i, &f)| TopicScore {
            topic_id: format!("t{i}"),
            final_score: f,
        })
        .collect();
    let a = select_balanced_topics(&scores, &Condition::ALL, Band { lo: 8.0, hi: 16.0 }).unwrap();
    let mut ids: Vec<_> = a.picks.iter().map(|p| p.topic_id.as_str()).collect();
    ids.sort_unstable();
    assert_eq!(ids, ["t0", "t1", "t2", "t3"]);
    assert!(
        a.max_pairwise_diff <= 0.25 + 1e-9,
        "{}",
        a.max_pairwise_diff
    );
    format!("picked {ids:?}, max diff {:.2}", a.max_pairwise_diff)
}

async fn stats_oracle() -> String {
    let mut rng = oracle::Lcg(20_240_601);
    let mut worst_f: f64 = 0.0;
    for _ in 0..1000 {
        let n = 2 + rng.below(9) as usize;
        let m = rng.matrix(n, 4);
        let got = friedman_test(&m).unwrap().statistic;
        let diff = (got - oracle::friedman_chi2(&m)).abs();
        assert!(diff < 1e-9, "{m:?}");
        worst_f = worst_f.max(diff);
    }
    let mut worst_w: f64 = 0.0;
    for _ in 0..200 {
        let n = 1 + rng.below(12) as usize;
        let a: Vec<f64> = (0..n).map(|_| rng.likert()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.likert()).collect();
        let got = wilcoxon_signed_rank(&a, &b).unwrap().p_value;
        let diff = (got - oracle::wilcoxon_p(&a, &b)).abs();
        assert!(diff < 1e-12, "{a:?} {b:?}");
        worst_w = worst_w.max(diff);
    }
    let mut alphas = 0;
    while alphas < 200 {
        let rows = 3 + rng.below(8) as usize;
        let cols = 2 + rng.below(5) as usize;
        let m = rng.matrix(rows, cols);
        if let Ok(got) = cronbach_alpha(&m) {
            assert!((got - oracle::cronbach_alpha(&m)).abs() < 1e-9, "{m:?}");
            alphas += 1;
        }
    }
    let dup: Vec<Vec<f64>> = (0..8)
        .map(|_| {
            let v = rng.likert();
            vec![v, v, v, v]
        })
        .chain([vec![1.0; 4], vec![7.0; 4]])
        .collect();
    assert_eq!(cronbach_alpha(&dup).unwrap(), 1.0);
    format!("friedman max err {worst_f:.1e}, wilcoxon max err {worst_w:.1e}, {alphas} alphas, duplicated = 1.0")
}

async fn persistence() -> String {
    let cases = crash::every_cut().await;
    format!("{cases} crash points recovered consistently")
}

async fn fail_open() -> String {
    let timeout = Duration::from_millis(100);
    let c = Classifier::new(Arc::new(StubBackend::Hang)).with_timeout(timeout);
    let (e, sink) = engine(c);
    let mut worst = Duration::ZERO;
    let mut sent = 0;
    for mode in [
        InterventionMode::BasicReminder,
        InterventionMode::NeutralGuide,
        InterventionMode::EmpatheticGuide,
    ] {
        let (room, a, b) = pair(&e, &format!("fo-{}", mode.as_str()), mode).await;
        for i in 0..10 {
            let who = if i % 2 == 0 { &a } else { &b };
            let started = Instant::now();
            let evs = e.submit(&room, who, "You are useless", None).await.unwrap();
            worst = worst.max(started.elapsed());
            assert!(delivered(&evs) && intercepted(&evs).is_none());
            sent += 1;
        }
        let incidents = e.incidents(&room).unwrap();
        assert_eq!(
            incidents
                .iter()
                .filter(|i| i.kind == IncidentKind::FailOpen)
                .count(),
            10,
            "{mode:?}"
        );
    }
    let events = sink.take();
    assert_eq!(
        events
            .iter()
            .filter(|ev| matches!(ev.kind, EventKind::Delivered { .. }))
            .count(),
        sent
    );
    assert!(worst < timeout + Duration::from_millis(100), "{worst:?}");
    format!("{sent} delivered, {sent} incidents, worst latency {worst:.0?}")
}

async fn check<F, Fut>(name: &str, f: F) -> bool
where
    F: FnOnce() -> Fut,
    Fut: Future<Output = String> + Send + 'static,
{
    match tokio::spawn(f()).await {
        Ok(detail) => {
            println!("PASS  {name}: {detail}");
            true
        }
        Err(e) => {
            let msg = match e.try_into_panic() {
                Ok(p) => p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default(),
                Err(e) => e.to_string(),
            };
            println!("FAIL  {name}: {msg}");
            false
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    std::panic::set_hook(Box::new(|_| {}));
    let results = [
        check("corpus fidelity", corpus_fidelity).await,
        check("asymmetry", asymmetry).await,
        check("state machine", state_machine).await,
        check("window and cap", window_and_cap).await,
        check("topic calibration", topic_calibration).await,
        check("statistics oracle", stats_oracle).await,
        check("persistence durability", persistence).await,
        check("fail-open", fail_open).await,
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
