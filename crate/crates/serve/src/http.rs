//! Routes and handlers.

use std::io::Cursor;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use image::ImageFormat;
use serde::Serialize;
use serde_json::json;

use crate::live::{LiveSession, Outbox, ServerMessage};
use epof_core::FrameSource;

use crate::{AppState, Video};

/// Outgoing messages buffered per session before the oldest are dropped.
const OUTBOX_CAPACITY: usize = 64;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/videos", get(list_videos))
        .route("/videos/{id}/manifest", get(manifest))
        .route("/videos/{id}/frames/{idx}", get(frame))
        .route("/videos/{id}/grains", get(grains))
        .route("/videos/{id}/live", get(live))
        .with_state(state)
}

fn not_found(what: impl Into<String>) -> Response {
    (StatusCode::NOT_FOUND, Json(json!({ "error": what.into() }))).into_response()
}

fn lookup(state: &AppState, id: &str) -> Result<Arc<Video>, Box<Response>> {
    state.video(id).ok_or_else(|| Box::new(not_found(format!("unknown video {id:?}"))))
}

#[derive(Serialize)]
struct VideoListing {
    id: String,
    n_frames: usize,
    fps: f64,
    n_windows: usize,
}

async fn list_videos(State(state): State<AppState>) -> Json<Vec<VideoListing>> {
    Json(
        state
            .videos()
            .map(|v| VideoListing {
                id: v.id.clone(),
                n_frames: v.matrix.n_frames(),
                fps: v.fps,
                n_windows: v.grid.len(),
            })
            .collect(),
    )
}

async fn manifest(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    match lookup(&state, &id) {
        Ok(v) => Json(v.summary()).into_response(),
        Err(r) => *r,
    }
}

async fn grains(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let v = match lookup(&state, &id) {
        Ok(v) => v,
        Err(r) => return *r,
    };
    let g = &v.grains;
    Json(json!({
        "seed": g.config().seed,
        "count": g.len(),
        "radius_deg": g.radius_deg(),
        "checksum": g.checksum(),
        "centers": g.centers(),
    }))
    .into_response()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FrameFormat {
    Png,
    Jpeg,
}

/// Quality value the `Accept` header gives to `mime`.
fn accept_q(accept: &str, mime: &str) -> f32 {
    let (kind, _) = mime.split_once('/').unwrap_or((mime, ""));
    let mut best: Option<(u8, f32)> = None;
    for part in accept.split(',') {
        let mut fields = part.split(';').map(str::trim);
        let range = fields.next().unwrap_or("");
        let q = fields
            .filter_map(|f| f.strip_prefix("q="))
            .find_map(|q| q.parse::<f32>().ok())
            .unwrap_or(1.0);
        let specificity = if range.eq_ignore_ascii_case(mime) {
            2
        } else if range == format!("{kind}/*") {
            1
        } else if range == "*/*" {
            0
        } else {
            continue;
        };
        if best.is_none_or(|(s, _)| specificity > s) {
            best = Some((specificity, q));
        }
    }
    best.map_or(0.0, |(_, q)| q)
}

fn negotiate(headers: &HeaderMap) -> Option<FrameFormat> {
    let Some(accept) = headers.get(header::ACCEPT).and_then(|v| v.to_str().ok()) else {
        return Some(FrameFormat::Png);
    };
    let (png, jpeg) = (accept_q(accept, "image/png"), accept_q(accept, "image/jpeg"));
    if png <= 0.0 && jpeg <= 0.0 {
        None
    } else if jpeg > png {
        Some(FrameFormat::Jpeg)
    } else {
        Some(FrameFormat::Png)
    }
}

async fn frame(State(state): State<AppState>, Path((id, idx)): Path<(String, usize)>, headers: HeaderMap) -> Response {
    let v = match lookup(&state, &id) {
        Ok(v) => v,
        Err(r) => return *r,
    };
    let Some(frames) = v.frames.as_ref() else {
        return not_found(format!("video {id:?} has no frames"));
    };
    if idx >= frames.len() {
        return not_found(format!("frame {idx} out of range (video has {} frames)", frames.len()));
    }
    let Some(format) = negotiate(&headers) else {
        return (StatusCode::NOT_ACCEPTABLE, Json(json!({ "error": "frames are available as image/png or image/jpeg" })))
            .into_response();
    };
    let tag = match format {
        FrameFormat::Png => "png",
        FrameFormat::Jpeg => "jpeg",
    };
    let etag = format!("\"{}-{idx}-{tag}\"", &v.digest[..v.digest.len().min(16)]);
    let mut resp_headers = HeaderMap::new();
    resp_headers.insert(header::ETAG, HeaderValue::from_str(&etag).expect("ascii etag"));
    resp_headers.insert(header::CACHE_CONTROL, HeaderValue::from_static("public, max-age=31536000, immutable"));
    resp_headers.insert(header::VARY, HeaderValue::from_static("accept"));
    let matches = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|h| h.to_str().ok())
        .is_some_and(|h| h.split(',').any(|t| t.trim() == etag || t.trim() == "*"));
    if matches {
        return (StatusCode::NOT_MODIFIED, resp_headers).into_response();
    }

    let frames = frames.clone();
    let body = tokio::task::spawn_blocking(move || -> Result<Vec<u8>, String> {
        match format {
            FrameFormat::Png => frames.frame_bytes(idx).map_err(|e| e.to_string()),
            FrameFormat::Jpeg => {
                let img = frames.frame(idx).map_err(|e| e.to_string())?.into_image();
                let mut out = Cursor::new(Vec::new());
                img.write_to(&mut out, ImageFormat::Jpeg).map_err(|e| e.to_string())?;
                Ok(out.into_inner())
            }
        }
    })
    .await;
    match body {
        Ok(Ok(bytes)) => {
            let mime = match format {
                FrameFormat::Png => "image/png",
                FrameFormat::Jpeg => "image/jpeg",
            };
            resp_headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(mime));
            (StatusCode::OK, resp_headers, bytes).into_response()
        }
        Ok(Err(e)) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": e }))).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": e.to_string() }))).into_response(),
    }
}

async fn live(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ws: Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> Response {
    let v = match lookup(&state, &id) {
        Ok(v) => v,
        Err(r) => return *r,
    };
    let ws = match ws {
        Ok(ws) => ws,
        Err(rejection) => return rejection.into_response(),
    };
    let session = LiveSession::new(state.session_id(), v, Instant::now());
    ws.on_upgrade(move |socket| run_session(socket, session))
}

/// Reads client messages in order and replies through a bounded outbox, so
/// a slow reader loses old states instead of stalling the session.
async fn run_session(socket: WebSocket, mut session: LiveSession) {
    let (mut sink, mut stream) = socket.split();
    let outbox = Outbox::new(OUTBOX_CAPACITY);

    let writer = {
        let outbox = outbox.clone();
        tokio::spawn(async move {
            loop {
                for msg in outbox.drain() {
                    if sink.send(Message::Text(msg.into())).await.is_err() {
                        return;
                    }
                }
                if outbox.is_closed() && outbox.is_empty() {
                    let _ = sink.close().await;
                    return;
                }
                outbox.wait().await;
            }
        })
    };

    while let Some(Ok(msg)) = stream.next().await {
        let reply = match msg {
            Message::Text(text) => session.handle_text(text.as_str(), Instant::now()),
            Message::Binary(_) => ServerMessage::Error {
                reason: "expected a JSON text message".into(),
            },
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => continue,
        };
        outbox.push(serde_json::to_string(&reply).expect("message serializes"));
    }
    outbox.close();
    let _ = writer.await;
}
