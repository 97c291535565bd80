//! Session service for the map demo.
//!
//! `POST /sessions` `{"user":"u1"}` creates a session and answers
//! `{"id":"s1","user":"u1"}`. Inputs go to `POST /sessions/{id}/input` as
//! one of `{"say":text}`, `{"click":"x,y"}`, `{"answer":text}`,
//! `{"remark":text}` or `{"pause":seconds}`; the reply lists the frames the
//! input produced. `GET /sessions/{id}/events` upgrades to a WebSocket
//! that replays every frame of the session and then follows it live.
//! `POST /sessions/{id}/reset` takes `{"scope":"system"}` or
//! `{"scope":"user"}`. `GET`/`PUT /sessions/{id}/kb` export and import the
//! knowledge base as text. `DELETE /sessions/{id}` saves the knowledge base
//! to the KB directory as `<user>.kb` and ends the session.
//!
//! Frames are text messages `{"seq":n,"type":t,"payload":p}`, `seq` dense
//! from 1 per session. For `trace-event`, `output` and `user-query` the
//! payload is the wire record of the delivered message; `trace-event`
//! prefixes it with the step and a tab, as in trace logs. For `map-state`
//! it is `center=x,y zoom=z`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex as StdMutex};

use aaosa_core::harness::{Session, SessionConfig, SessionEvent};
use aaosa_core::mapdemo::names;
use aaosa_core::runtime::RuntimeError;
use aaosa_core::wire::encode_message;
use aaosa_core::{Content, Performative, Point, ResetScope, UserId};
use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameKind {
    TraceEvent,
    Output,
    UserQuery,
    MapState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub seq: u64,
    #[serde(rename = "type")]
    pub kind: FrameKind,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Input {
    Say(String),
    Click(String),
    Answer(String),
    Remark(String),
    Pause(f64),
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub user: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub user: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Ack {
    pub frames: Vec<Frame>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "scope", rename_all = "lowercase")]
pub enum ResetRequest {
    System,
    User,
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Conflict(String),
    BadRequest(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, msg) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (code, Json(serde_json::json!({ "error": msg }))).into_response()
    }
}

impl From<RuntimeError> for ApiError {
    fn from(e: RuntimeError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

struct Live {
    session: Session,
    frames: Vec<Frame>,
    /// Trace entries already turned into frames.
    framed: usize,
    pending_query: bool,
}

impl Live {
    fn push(&mut self, tx: &broadcast::Sender<Frame>, kind: FrameKind, payload: String) -> Frame {
        let f = Frame {
            seq: self.frames.len() as u64 + 1,
            kind,
            payload,
        };
        self.frames.push(f.clone());
        // No subscribers is fine; history keeps the frame.
        let _ = tx.send(f.clone());
        f
    }

    /// Frames for everything delivered since the last call, in trace order,
    /// then the map if `events` report a change.
    fn publish(&mut self, tx: &broadcast::Sender<Frame>, events: &[SessionEvent]) -> Vec<Frame> {
        let mut out = Vec::new();
        let fresh: Vec<_> = self.session.runtime().trace()[self.framed..].to_vec();
        self.framed += fresh.len();
        for e in fresh {
            let line = e.to_line().expect("delivered messages encode");
            out.push(self.push(tx, FrameKind::TraceEvent, line));
            let m = &e.message;
            let to = m.recipients[0].as_str();
            let kind = match (&m.performative, &m.content) {
                (Performative::UserQuery, _) if to == names::TEXT_INPUT => Some(FrameKind::UserQuery),
                (Performative::Output, Content::Output { .. }) if to != names::FEEDBACK => {
                    Some(FrameKind::Output)
                }
                _ => None,
            };
            if let Some(kind) = kind {
                if kind == FrameKind::UserQuery {
                    self.pending_query = true;
                }
                let rec = encode_message(m).expect("delivered messages encode");
                out.push(self.push(tx, kind, rec.trim_end().to_string()));
            }
        }
        for ev in events {
            if let SessionEvent::Map { center, zoom } = ev {
                out.push(self.push(tx, FrameKind::MapState, format!("center={center} zoom={zoom}")));
            }
        }
        out
    }
}

struct SessionHandle {
    user: UserId,
    live: Mutex<Live>,
    tx: broadcast::Sender<Frame>,
}

#[derive(Clone)]
pub struct Gateway {
    inner: Arc<Inner>,
}

struct Inner {
    kb_dir: PathBuf,
    sessions: StdMutex<HashMap<String, Arc<SessionHandle>>>,
    next_id: StdMutex<u64>,
}

impl Gateway {
    pub fn new(kb_dir: impl Into<PathBuf>) -> Self {
        Self {
            inner: Arc::new(Inner {
                kb_dir: kb_dir.into(),
                sessions: StdMutex::new(HashMap::new()),
                next_id: StdMutex::new(0),
            }),
        }
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/sessions", post(create_session))
            .route("/sessions/{id}", axum::routing::delete(close_session))
            .route("/sessions/{id}/input", post(post_input))
            .route("/sessions/{id}/events", get(subscribe))
            .route("/sessions/{id}/reset", post(reset))
            .route("/sessions/{id}/kb", get(export_kb).put(import_kb))
            .with_state(self.clone())
    }

    fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.inner
            .sessions
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no session {id}")))
    }

    fn kb_path(&self, user: &UserId) -> PathBuf {
        self.inner.kb_dir.join(format!("{user}.kb"))
    }
}

async fn create_session(
    State(gw): State<Gateway>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let user = UserId::new(req.user).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let mut session = Session::new(SessionConfig {
        user: user.clone(),
        ..Default::default()
    })?;
    let kb = gw.kb_path(&user);
    if kb.exists() {
        let text = std::fs::read_to_string(&kb).map_err(|e| ApiError::Internal(e.to_string()))?;
        session
            .load_kb_str(&text)
            .map_err(|e| ApiError::Internal(format!("{}: {e}", kb.display())))?;
    }
    let (tx, _) = broadcast::channel(1024);
    let mut live = Live {
        session,
        frames: Vec::new(),
        framed: 0,
        pending_query: false,
    };
    live.publish(&tx, &[]);
    let id = {
        let mut n = gw.inner.next_id.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        format!("s{n}")
    };
    let handle = Arc::new(SessionHandle {
        user: user.clone(),
        live: Mutex::new(live),
        tx,
    });
    gw.inner
        .sessions
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .insert(id.clone(), handle);
    tracing::info!(%id, %user, "session created");
    Ok((
        StatusCode::CREATED,
        Json(Created {
            id,
            user: user.to_string(),
        }),
    ))
}

async fn post_input(
    State(gw): State<Gateway>,
    Path(id): Path<String>,
    Json(input): Json<Input>,
) -> Result<Json<Ack>, ApiError> {
    let h = gw.session(&id)?;
    let mut live = h.live.lock().await;
    let s = &mut live.session;
    let events = match &input {
        Input::Say(t) => s.say(t)?,
        Input::Click(p) => {
            let p: Point = p.parse().map_err(|e: aaosa_core::types::TypeError| ApiError::BadRequest(e.to_string()))?;
            s.click(p)?
        }
        Input::Answer(t) => {
            if !live.pending_query {
                return Err(ApiError::Conflict("no question is pending".into()));
            }
            live.pending_query = false;
            live.session.answer(t)?
        }
        Input::Remark(t) => s.remark(t)?,
        Input::Pause(secs) => {
            if !secs.is_finite() || *secs < 0.0 {
                return Err(ApiError::BadRequest(format!("pause {secs}")));
            }
            s.pause(*secs)?
        }
    };
    let frames = live.publish(&h.tx, &events);
    Ok(Json(Ack { frames }))
}

async fn subscribe(
    State(gw): State<Gateway>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let h = gw.session(&id)?;
    // Snapshot and subscription under one lock: no frame is missed or
    // repeated between history and the live feed.
    let (history, rx) = {
        let live = h.live.lock().await;
        (live.frames.clone(), h.tx.subscribe())
    };
    Ok(ws.on_upgrade(move |socket| stream(socket, history, rx)))
}

async fn stream(mut socket: WebSocket, history: Vec<Frame>, mut rx: broadcast::Receiver<Frame>) {
    let text = |f: &Frame| WsMessage::Text(serde_json::to_string(f).expect("frames serialize").into());
    for f in &history {
        if socket.send(text(f)).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            frame = rx.recv() => match frame {
                Ok(f) => {
                    if socket.send(text(&f)).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::warn!(skipped = n, "subscriber fell behind; closing");
                    let _ = socket.send(WsMessage::Close(None)).await;
                    return;
                }
                Err(broadcast::error::RecvError::Closed) => {
                    let _ = socket.send(WsMessage::Close(None)).await;
                    return;
                }
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(WsMessage::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

async fn reset(
    State(gw): State<Gateway>,
    Path(id): Path<String>,
    Json(req): Json<ResetRequest>,
) -> Result<StatusCode, ApiError> {
    let h = gw.session(&id)?;
    let scope = match req {
        ResetRequest::System => ResetScope::System,
        ResetRequest::User => ResetScope::User(h.user.clone()),
    };
    h.live.lock().await.session.reset(&scope);
    Ok(StatusCode::NO_CONTENT)
}

async fn export_kb(State(gw): State<Gateway>, Path(id): Path<String>) -> Result<String, ApiError> {
    let h = gw.session(&id)?;
    let kb = h.live.lock().await.session.kb_string();
    Ok(kb)
}

async fn import_kb(
    State(gw): State<Gateway>,
    Path(id): Path<String>,
    body: String,
) -> Result<StatusCode, ApiError> {
    let h = gw.session(&id)?;
    h.live
        .lock()
        .await
        .session
        .load_kb_str(&body)
        .map_err(|e| ApiError::BadRequest(e.to_string()))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn close_session(State(gw): State<Gateway>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let h = gw.session(&id)?;
    let kb = h.live.lock().await.session.kb_string();
    let path = gw.kb_path(&h.user);
    std::fs::create_dir_all(&gw.inner.kb_dir).map_err(|e| ApiError::Internal(e.to_string()))?;
    std::fs::write(&path, kb).map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))?;
    gw.inner
        .sessions
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .remove(&id);
    tracing::info!(%id, "session closed");
    Ok(StatusCode::NO_CONTENT)
}
