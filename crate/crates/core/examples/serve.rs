//! Start the HTTP/WebSocket server on an ephemeral port with an in-memory
//! store, log two users in over HTTP, then shut down.

use std::sync::Arc;

use parley::classifier::Classifier;
use parley::domain::{InterventionMode, SystemClock};
use parley::persistence::MemoryStore;
use parley::transport::{serve, Liveness, LoginRequest, LoginResponse};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let gw = parley::assemble(
        Arc::new(MemoryStore::new()),
        Classifier::rule_oracle(),
        Arc::new(SystemClock),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve(listener, gw, Liveness::default(), async {
        stopped.await.ok();
    }));
    println!("listening on {addr}");

    let http = reqwest::Client::new();
    for name in ["Alice", "Bob"] {
        let req = LoginRequest {
            username: name.into(),
            room_id: "lobby".into(),
            mode: InterventionMode::NeutralGuide,
            partner_gender: "unspecified".into(),
            language: None,
        };
        let resp: LoginResponse = http
            .post(format!("http://{addr}/login"))
            .json(&req)
            .send()
            .await?
            .json()
            .await?;
        println!(
            "{name}: token {}.., capabilities {:?}",
            &resp.session_token[..8],
            resp.capabilities
        );
        println!("  connect with ws://{addr}/ws?token={}", resp.session_token);
    }

    stop.send(()).ok();
    server.await??;
    Ok(())
}
