//! HTTP and websocket front end.
//!
//! * `GET /ws` worker socket; the first frame must be `join`.
//! * `GET /healthz` hub counters.
//! * `GET /sessions` and `GET /sessions/{id}` read-only session views.
//! * `POST /images` JSONL body of `{image_id, caption, image_url}` lines.

use std::io;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::mpsc::unbounded_channel;

use crate::hub::Hub;
use crate::protocol::{parse_client_frame, ClientFrame, ServerEnvelope, ServerFrame};
use crate::session::ImageItem;

/// How long a fresh socket may stay silent before its `join`.
const JOIN_TIMEOUT: Duration = Duration::from_secs(30);
pub const SWEEP_INTERVAL: Duration = Duration::from_secs(5);

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/healthz", get(healthz))
        .route("/sessions", get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/images", post(post_images))
        .with_state(hub)
}

/// Serves until the listener fails, sweeping idle workers in the background.
pub async fn serve(listener: TcpListener, hub: Arc<Hub>) -> io::Result<()> {
    let sweeper = hub.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(SWEEP_INTERVAL);
        loop {
            tick.tick().await;
            sweeper.sweep();
        }
    });
    axum::serve(listener, router(hub)).await
}

async fn healthz(State(hub): State<Arc<Hub>>) -> Json<crate::hub::HubStatus> {
    Json(hub.status())
}

async fn list_sessions(State(hub): State<Arc<Hub>>) -> Json<Vec<String>> {
    Json(hub.session_ids())
}

async fn get_session(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> Response {
    match hub.session(&id) {
        Some(s) => Json(s).into_response(),
        None => (StatusCode::NOT_FOUND, Json(json!({"error": "unknown session"}))).into_response(),
    }
}

fn bad_request(msg: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": msg }))).into_response()
}

async fn post_images(State(hub): State<Arc<Hub>>, body: Bytes) -> Response {
    let Ok(text) = std::str::from_utf8(&body) else {
        return bad_request("body is not UTF-8".into());
    };
    let mut images = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ImageItem>(line) {
            Ok(item) => images.push(item),
            Err(e) => return bad_request(format!("line {}: {e}", i + 1)),
        }
    }
    match hub.add_images(images) {
        Ok(added) => Json(json!({ "added": added })).into_response(),
        Err(e) => bad_request(e.to_string()),
    }
}

async fn ws_upgrade(State(hub): State<Arc<Hub>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| worker_socket(hub, socket))
}

fn text_frame(env: &ServerEnvelope) -> Message {
    Message::Text(env.to_line().into())
}

async fn reject(mut socket: WebSocket, code: &str) {
    let env = ServerEnvelope { seq: 1, frame: ServerFrame::Error { code: code.into() } };
    let _ = socket.send(text_frame(&env)).await;
    let _ = socket.close().await;
}

async fn worker_socket(hub: Arc<Hub>, mut socket: WebSocket) {
    let worker_id = match tokio::time::timeout(JOIN_TIMEOUT, socket.recv()).await {
        Ok(Some(Ok(Message::Text(t)))) => match parse_client_frame(t.as_str()) {
            Ok(env) => match env.frame {
                ClientFrame::Join { worker_id } if !worker_id.trim().is_empty() => worker_id,
                _ => return reject(socket, "join_required").await,
            },
            Err(_) => return reject(socket, "bad_frame").await,
        },
        _ => return reject(socket, "join_required").await,
    };

    let (tx, mut rx) = unbounded_channel::<ServerEnvelope>();
    let conn_id = match hub.connect(&worker_id, tx) {
        Ok(id) => id,
        Err(e) => return reject(socket, e.code()).await,
    };
    let (mut sink, mut stream) = socket.split();
    let writer = tokio::spawn(async move {
        while let Some(env) = rx.recv().await {
            if sink.send(text_frame(&env)).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    if let Err(e) = hub.join(&worker_id) {
        hub.notify(&worker_id, ServerFrame::Error { code: e.code().into() });
    }
    while let Some(Ok(msg)) = stream.next().await {
        let result = match msg {
            Message::Text(t) => match parse_client_frame(t.as_str()) {
                Ok(env) => match env.frame {
                    // The id is bound to the socket; a later join re-queues
                    // the same worker.
                    ClientFrame::Join { .. } => hub.join(&worker_id),
                    ClientFrame::Message { text } => hub.message(&worker_id, &text),
                    ClientFrame::Heartbeat => hub.heartbeat(&worker_id),
                    ClientFrame::Leave => break,
                },
                Err(_) => {
                    hub.notify(&worker_id, ServerFrame::Error { code: "bad_frame".into() });
                    Ok(())
                }
            },
            Message::Ping(_) | Message::Pong(_) => hub.heartbeat(&worker_id),
            Message::Close(_) => break,
            Message::Binary(_) => {
                hub.notify(&worker_id, ServerFrame::Error { code: "bad_frame".into() });
                Ok(())
            }
        };
        match result {
            Ok(()) => {}
            // Swept for inactivity: this socket no longer speaks for the worker.
            Err(crate::hub::HubError::NotConnected) => break,
            Err(e) => hub.notify(&worker_id, ServerFrame::Error { code: e.code().into() }),
        }
    }
    hub.close_connection(&worker_id, conn_id);
    // Dropping the hub's sender ends the writer once queued frames are out.
    let _ = writer.await;
}
