//! Scripted two-client conversations driven through the gateway, standing
//! in for real browsers.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::sync::mpsc::UnboundedReceiver;

use crate::domain::{InterceptId, InterventionMode, RoomId, UserId};
use crate::engine::Engine;
use crate::transport::{
    ClientMessage, ConnId, Gateway, GatewayError, LoginRequest, ServerEnvelope, ServerMessage,
};

/// Lines the rule oracle flags.
pub const AGGRESSIVE_LINES: &[&str] = &[
    "You are just selfish",
    "You are useless",
    "You must listen to me",
    "let's just break up",
    "Your temper is so awful; who would want to be in a relationship with you?",
    "Alright, stop being unreasonable",
    "whatever",
    "You're so lazy, you never help",
    "Shut up and listen for once",
    "Maybe we should just get a divorce",
];

/// Everyday lines the rule oracle lets through.
pub const NORMAL_LINES: &[&str] = &[
    "Hey, I'm not going",
    "Babe, don't be mad, it's my fault",
    "I'm not going away, I just want to stick with you",
    "I'm so tired and feel down",
    "You'll be the death of me one day, hmph!",
    "Can we talk about the weekend plans?",
    "I felt ignored when you were on your phone at dinner",
    "I need some help with the dishes tonight",
    "Thanks for picking up the groceries",
    "I miss spending time together",
    "Work was exhausting today",
    "Could we agree on a budget for the trip?",
];

/// Calm rewrites used when a simulated user revises.
pub const CALM_REVISIONS: &[&str] = &[
    "I feel hurt right now and I need us to listen to each other",
    "When plans change last minute I feel anxious. Could we decide together?",
    "I'm frustrated and I need some support. Can we talk tonight?",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Skip,
    ReviseCalm,
    /// Revise to another flagged line, exercising re-interception.
    ReviseHarsh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub room: String,
    pub mode: InterventionMode,
    pub messages: usize,
    pub aggressive_ratio: f64,
    /// Request a guide every this many messages in guide-enabled modes; 0 never.
    pub guide_every: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            room: "sim".into(),
            mode: InterventionMode::EmpatheticGuide,
            messages: 500,
            aggressive_ratio: 0.2,
            guide_every: 25,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimStats {
    pub sent: usize,
    pub aggressive_sent: usize,
    pub intercepted: usize,
    pub skipped: usize,
    pub revised: usize,
    pub guides: usize,
    pub rewards: usize,
    pub error_notices: usize,
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub room: RoomId,
    pub users: [UserId; 2],
    /// Every envelope each client received, in arrival order.
    pub received: BTreeMap<UserId, Vec<ServerEnvelope>>,
    pub stats: SimStats,
}

impl SimReport {
    /// Intervention envelopes that reached someone other than their actor.
    pub async fn leaks(&self, engine: &Engine) -> Result<usize, GatewayError> {
        let mut n = 0;
        for (user, envs) in &self.received {
            for env in envs {
                let owner = match &env.msg {
                    ServerMessage::Intercepted { intercept_id, .. }
                    | ServerMessage::Reward { intercept_id, .. } => engine
                        .interception(&self.room, intercept_id)
                        .await?
                        .map(|r| r.sender),
                    ServerMessage::GuideResult { annotation } => Some(annotation.owner.clone()),
                    _ => continue,
                };
                if owner.as_ref() != Some(user) {
                    n += 1;
                }
            }
        }
        Ok(n)
    }

    /// Delivered seqs observed by `user`, from echoes and peer messages.
    pub fn delivered_seqs(&self, user: &UserId) -> Vec<u64> {
        self.received
            .get(user)
            .into_iter()
            .flatten()
            .filter_map(|e| match &e.msg {
                ServerMessage::EchoDelivered { message, .. }
                | ServerMessage::PeerMessage { message } => Some(message.seq),
                _ => None,
            })
            .collect()
    }
}

struct Client {
    user: UserId,
    token: String,
    conn: ConnId,
    rx: UnboundedReceiver<ServerEnvelope>,
    log: Vec<ServerEnvelope>,
}

impl Client {
    /// Move queued envelopes into the log; return interceptions among them.
    fn drain(&mut self) -> Vec<InterceptId> {
        let mut held = Vec::new();
        while let Ok(env) = self.rx.try_recv() {
            if let ServerMessage::Intercepted { intercept_id, .. } = &env.msg {
                held.push(intercept_id.clone());
            }
            self.log.push(env);
        }
        held
    }
}

async fn send(gw: &Gateway, client: &Client, msg: &ClientMessage) -> Result<usize, GatewayError> {
    // errors come back as notices; the hub already queued event envelopes
    let outs = gw
        .route_client_envelope(&client.token, &msg.to_json())
        .await?;
    let notices: Vec<_> = outs
        .into_iter()
        .filter(|o| matches!(o.envelope.msg, ServerMessage::ErrorNotice { .. }))
        .collect();
    let n = notices.len();
    for o in notices {
        gw.hub().push_conn(client.conn, o.envelope);
    }
    Ok(n)
}

/// Run one scripted conversation. Requires the gateway's hub to be the
/// engine's event sink.
pub async fn run(gw: &Gateway, cfg: &SimConfig) -> Result<SimReport, GatewayError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut clients = Vec::with_capacity(2);
    for (name, gender) in [("Alice", "male"), ("Bob", "female")] {
        let req = LoginRequest {
            username: name.into(),
            room_id: cfg.room.clone(),
            mode: cfg.mode,
            partner_gender: gender.into(),
            language: None,
        };
        let resp = gw.handle_login(&req).await?;
        let (conn, rx) = gw
            .hub()
            .register(resp.room_id.clone(), resp.user_id.clone());
        clients.push(Client {
            user: resp.user_id,
            token: resp.session_token,
            conn,
            rx,
            log: Vec::new(),
        });
    }
    let room = RoomId::parse(&cfg.room)?;
    let guides = cfg.mode.capabilities().guide_enabled && cfg.guide_every > 0;
    let mut stats = SimStats::default();

    for i in 0..cfg.messages {
        let who = rng.gen_range(0..2);
        let aggressive = rng.gen_bool(cfg.aggressive_ratio);
        let pool = if aggressive {
            AGGRESSIVE_LINES
        } else {
            NORMAL_LINES
        };
        let body = pool.choose(&mut rng).expect("nonempty pool").to_string();
        stats.sent += 1;
        stats.aggressive_sent += usize::from(aggressive);
        let msg = ClientMessage::Send {
            client_msg_id: Some(format!("{}-{i}", clients[who].user)),
            body,
        };
        stats.error_notices += send(gw, &clients[who], &msg).await?;

        let mut held = clients[who].drain();
        clients[1 - who].drain();
        while let Some(id) = held.pop() {
            stats.intercepted += 1;
            let choice = *[
                Resolution::Skip,
                Resolution::ReviseCalm,
                Resolution::ReviseHarsh,
            ]
            .choose(&mut rng)
            .unwrap();
            let msg = match choice {
                Resolution::Skip => {
                    stats.skipped += 1;
                    ClientMessage::Skip { intercept_id: id }
                }
                Resolution::ReviseCalm | Resolution::ReviseHarsh => {
                    stats.revised += 1;
                    let pool = if choice == Resolution::ReviseCalm {
                        CALM_REVISIONS
                    } else {
                        AGGRESSIVE_LINES
                    };
                    ClientMessage::Revise {
                        intercept_id: id,
                        body: pool.choose(&mut rng).unwrap().to_string(),
                    }
                }
            };
            stats.error_notices += send(gw, &clients[who], &msg).await?;
            held.extend(clients[who].drain());
            clients[1 - who].drain();
        }

        if guides && (i + 1) % cfg.guide_every == 0 {
            let asker = rng.gen_range(0..2);
            stats.error_notices +=
                send(gw, &clients[asker], &ClientMessage::GuideRequest {}).await?;
            stats.guides += 1;
        }
        for c in &mut clients {
            c.drain();
        }
    }

    for c in &clients {
        gw.hub().unregister(c.conn);
    }
    stats.rewards = clients
        .iter()
        .flat_map(|c| &c.log)
        .filter(|e| matches!(e.msg, ServerMessage::Reward { .. }))
        .count();
    let users = [clients[0].user.clone(), clients[1].user.clone()];
    let received = clients.into_iter().map(|c| (c.user, c.log)).collect();
    Ok(SimReport {
        room,
        users,
        received,
        stats,
    })
}
