//! HTTP and WebSocket front end.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::time::Instant;

use super::gateway::{Gateway, GatewayError, LoginRequest};
use super::protocol::{ServerEnvelope, ServerMessage};
use crate::domain::Seq;
use crate::engine::EngineError;
use crate::persistence::HISTORY_PAGE;

/// Ping cadence and how long a silent client is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Liveness {
    pub heartbeat: Duration,
    pub idle: Duration,
}

impl Default for Liveness {
    fn default() -> Self {
        Self {
            heartbeat: Duration::from_secs(20),
            idle: Duration::from_secs(60),
        }
    }
}

#[derive(Clone)]
struct App {
    gateway: Arc<Gateway>,
    liveness: Liveness,
}

pub fn router(gateway: Arc<Gateway>, liveness: Liveness) -> Router {
    Router::new()
        .route("/login", post(login))
        .route("/history", get(history))
        .route("/ws", get(ws))
        .with_state(App { gateway, liveness })
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    gateway: Arc<Gateway>,
    liveness: Liveness,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(gateway, liveness))
        .with_graceful_shutdown(shutdown)
        .await
}

fn status_of(err: &GatewayError) -> StatusCode {
    match err {
        GatewayError::StaleSession => StatusCode::UNAUTHORIZED,
        GatewayError::WrongRoom => StatusCode::FORBIDDEN,
        GatewayError::Connected(_) => StatusCode::CONFLICT,
        GatewayError::Domain(_) | GatewayError::Protocol(_) => StatusCode::BAD_REQUEST,
        GatewayError::Engine(e) => match e {
            EngineError::UnknownRoom(_) => StatusCode::NOT_FOUND,
            EngineError::RoomFull | EngineError::ModeConflict { .. } => StatusCode::CONFLICT,
            EngineError::Username(crate::domain::UsernameError::Collision(_)) => {
                StatusCode::CONFLICT
            }
            EngineError::Username(_) => StatusCode::BAD_REQUEST,
            EngineError::Storage(_) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::BAD_REQUEST,
        },
    }
}

fn error_response(err: GatewayError) -> Response {
    (status_of(&err), Json(err.notice(None))).into_response()
}

async fn login(State(app): State<App>, Json(req): Json<LoginRequest>) -> Response {
    match app.gateway.handle_login(&req).await {
        Ok(resp) => Json(resp).into_response(),
        Err(e) => error_response(e),
    }
}

#[derive(Debug, Deserialize)]
struct HistoryQuery {
    room: String,
    #[serde(default)]
    after_seq: Seq,
    limit: Option<usize>,
    token: Option<String>,
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_string())
}

async fn history(
    State(app): State<App>,
    headers: HeaderMap,
    Query(q): Query<HistoryQuery>,
) -> Response {
    let Some(token) = bearer(&headers).or(q.token) else {
        return error_response(GatewayError::StaleSession);
    };
    match app.gateway.history(
        &token,
        &q.room,
        q.after_seq,
        q.limit.unwrap_or(HISTORY_PAGE),
    ) {
        Ok(page) => Json(page).into_response(),
        Err(e) => error_response(e),
    }
}

#[derive(Debug, Deserialize)]
struct WsQuery {
    token: String,
}

async fn ws(
    State(app): State<App>,
    Query(q): Query<WsQuery>,
    upgrade: WebSocketUpgrade,
) -> Response {
    if let Err(e) = app.gateway.session(&q.token) {
        return error_response(e);
    }
    upgrade.on_upgrade(move |socket| connection(socket, app, q.token))
}

async fn connection(socket: WebSocket, app: App, token: String) {
    let Ok((room, user)) = app.gateway.session(&token) else {
        return;
    };
    let hub = app.gateway.hub().clone();
    let (conn, mut outbound) = hub.register(room.clone(), user.clone());
    tracing::debug!(%room, %user, conn, "connected");
    let (mut sink, mut stream) = socket.split();
    let (seen_tx, seen_rx) = watch::channel(Instant::now());
    let (stop_tx, mut stop_rx) = watch::channel(false);
    let liveness = app.liveness;

    let writer = tokio::spawn(async move {
        let mut ticker = tokio::time::interval(liveness.heartbeat);
        ticker.tick().await;
        loop {
            tokio::select! {
                env = outbound.recv() => {
                    let Some(env) = env else { break };
                    if sink.send(Message::Text(env.to_json())).await.is_err() {
                        break;
                    }
                }
                _ = ticker.tick() => {
                    if seen_rx.borrow().elapsed() >= liveness.idle {
                        let _ = sink.send(Message::Close(None)).await;
                        break;
                    }
                    if sink.send(Message::Ping(Vec::new())).await.is_err() {
                        break;
                    }
                }
            }
        }
        let _ = stop_tx.send(true);
    });

    loop {
        let frame = tokio::select! {
            frame = stream.next() => frame,
            _ = stop_rx.changed() => break,
        };
        let text = match frame {
            Some(Ok(Message::Text(text))) => text,
            Some(Ok(Message::Binary(_))) => {
                hub.push_conn(
                    conn,
                    ServerEnvelope::new(ServerMessage::error(
                        "malformed",
                        "binary frames are not accepted",
                        false,
                    )),
                );
                continue;
            }
            Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
            Some(Ok(_)) => {
                let _ = seen_tx.send(Instant::now());
                continue;
            }
        };
        let _ = seen_tx.send(Instant::now());
        match app.gateway.route_client_envelope(&token, &text).await {
            // events already reached every connection through the hub
            Ok(outs) => outs
                .into_iter()
                .filter(|o| matches!(o.envelope.msg, ServerMessage::ErrorNotice { .. }))
                .for_each(|o| hub.push_conn(conn, o.envelope)),
            Err(e) => {
                hub.push_conn(conn, e.notice(None));
                break;
            }
        }
    }
    hub.unregister(conn);
    // let queued envelopes drain before the writer notices the closed queue
    let _ = writer.await;
    tracing::debug!(%room, %user, conn, "disconnected");
}
