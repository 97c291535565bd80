use std::path::PathBuf;

use aaosa_core::harness::run_script_file;
use aaosa_gateway::{Ack, Created, Frame, FrameKind, Gateway};
use futures_util::StreamExt;
use reqwest::{Client, StatusCode};
use serde_json::json;
use tokio_tungstenite::tungstenite::Message as WsMessage;

struct Server {
    base: String,
    ws: String,
    client: Client,
    _kb: tempfile::TempDir,
    kb_dir: PathBuf,
}

async fn serve() -> Server {
    let kb = tempfile::tempdir().unwrap();
    let kb_dir = kb.path().join("kb");
    let app = Gateway::new(&kb_dir).router();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Server {
        base: format!("http://{addr}"),
        ws: format!("ws://{addr}"),
        client: Client::new(),
        _kb: kb,
        kb_dir,
    }
}

impl Server {
    async fn create(&self, user: &str) -> String {
        let r = self
            .client
            .post(format!("{}/sessions", self.base))
            .json(&json!({ "user": user }))
            .send()
            .await
            .unwrap();
        assert_eq!(r.status(), StatusCode::CREATED);
        r.json::<Created>().await.unwrap().id
    }

    async fn input(&self, id: &str, body: serde_json::Value) -> (StatusCode, Option<Vec<Frame>>) {
        let r = self
            .client
            .post(format!("{}/sessions/{id}/input", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        let code = r.status();
        let frames = if code.is_success() {
            Some(r.json::<Ack>().await.unwrap().frames)
        } else {
            None
        };
        (code, frames)
    }

    async fn ok(&self, id: &str, body: serde_json::Value) -> Vec<Frame> {
        let (code, frames) = self.input(id, body).await;
        assert_eq!(code, StatusCode::OK);
        frames.unwrap()
    }

    async fn subscribe(
        &self,
        id: &str,
    ) -> tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>> {
        tokio_tungstenite::connect_async(format!("{}/sessions/{id}/events", self.ws))
            .await
            .unwrap()
            .0
    }
}

fn of(frames: &[Frame], kind: FrameKind) -> Vec<&str> {
    frames
        .iter()
        .filter(|f| f.kind == kind)
        .map(|f| f.payload.as_str())
        .collect()
}

async fn next_frames<S>(ws: &mut S, n: usize) -> Vec<Frame>
where
    S: StreamExt<Item = Result<WsMessage, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    let mut out = Vec::new();
    while out.len() < n {
        match ws.next().await.unwrap().unwrap() {
            WsMessage::Text(t) => out.push(serde_json::from_str(&t).unwrap()),
            other => panic!("unexpected {other:?}"),
        }
    }
    out
}

#[tokio::test]
async fn ambiguous_command_is_asked_then_applied() {
    let s = serve().await;
    let id = s.create("u1").await;
    let frames = s.ok(&id, json!({ "say": "move it closer" })).await;
    let q = of(&frames, FrameKind::UserQuery);
    assert_eq!(q.len(), 1);
    assert!(q[0].contains("question=Do you mean magnification or shifting?"));

    let frames = s.ok(&id, json!({ "answer": "Magnification" })).await;
    let outs = of(&frames, FrameKind::Output);
    assert_eq!(outs.len(), 1);
    assert!(outs[0].contains("payload=zoom in"));
    assert_eq!(of(&frames, FrameKind::MapState), vec!["center=16,16 zoom=2"]);

    let (code, _) = s.input(&id, json!({ "answer": "Magnification" })).await;
    assert_eq!(code, StatusCode::CONFLICT);
}

#[tokio::test]
async fn unknown_sessions_and_bad_inputs_are_rejected() {
    let s = serve().await;
    let (code, _) = s.input("s99", json!({ "say": "zoom in" })).await;
    assert_eq!(code, StatusCode::NOT_FOUND);
    let err = tokio_tungstenite::connect_async(format!("{}/sessions/s99/events", s.ws)).await;
    match err {
        Err(tokio_tungstenite::tungstenite::Error::Http(r)) => assert_eq!(r.status(), 404),
        other => panic!("expected a 404 handshake, got {other:?}"),
    }
    let id = s.create("u1").await;
    let (code, _) = s.input(&id, json!({ "click": "here" })).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    let (code, _) = s.input(&id, json!({ "answer": "yes" })).await;
    assert_eq!(code, StatusCode::CONFLICT);
    let r = s
        .client
        .post(format!("{}/sessions", s.base))
        .json(&json!({ "user": "bad user" }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn subscribers_see_the_same_frames_in_order() {
    let s = serve().await;
    let id = s.create("u1").await;
    let mut early = s.subscribe(&id).await;
    let setup = next_frames(&mut early, 16).await;
    assert!(setup.iter().all(|f| f.kind == FrameKind::TraceEvent));

    let mut acked = s.ok(&id, json!({ "say": "move it closer" })).await;
    acked.extend(s.ok(&id, json!({ "answer": "magnification" })).await);
    let live = next_frames(&mut early, acked.len()).await;
    assert_eq!(live, acked);

    let mut late = s.subscribe(&id).await;
    let replay = next_frames(&mut late, setup.len() + acked.len()).await;
    assert_eq!(replay[..16], setup[..]);
    assert_eq!(replay[16..], acked[..]);
    let seqs: Vec<u64> = replay.iter().map(|f| f.seq).collect();
    assert_eq!(seqs, (1..=replay.len() as u64).collect::<Vec<_>>());
}

#[tokio::test]
async fn sessions_are_isolated() {
    let s = serve().await;
    let a = s.create("u1").await;
    let b = s.create("u1").await;
    assert_ne!(a, b);
    let mut watch_b = s.subscribe(&b).await;
    let setup = next_frames(&mut watch_b, 16).await;

    s.ok(&a, json!({ "say": "move it closer" })).await;
    let frames = s.ok(&a, json!({ "answer": "magnification" })).await;
    assert_eq!(of(&frames, FrameKind::MapState), vec!["center=16,16 zoom=2"]);

    // Session b has learned nothing and its map has not moved.
    let frames = s.ok(&b, json!({ "say": "move it closer" })).await;
    assert_eq!(of(&frames, FrameKind::UserQuery).len(), 1);
    let frames_b = next_frames(&mut watch_b, frames.len()).await;
    assert_eq!(frames_b, frames);
    assert_eq!(frames_b[0].seq, setup.len() as u64 + 1);
}

#[tokio::test]
async fn gateway_trace_equals_harness_trace() {
    let s = serve().await;
    let id = s.create("u1").await;
    s.ok(&id, json!({ "say": "move it closer" })).await;
    s.ok(&id, json!({ "answer": "Magnification" })).await;
    let mut ws = s.subscribe(&id).await;
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/ambiguous_zoom.script");
    let (report, log) = run_script_file(&script).unwrap();
    assert!(report.passed());
    let n_lines = log.lines().count();
    let mut lines = Vec::new();
    while lines.len() < n_lines {
        let f = next_frames(&mut ws, 1).await.remove(0);
        if f.kind == FrameKind::TraceEvent {
            lines.push(f.payload);
        }
    }
    assert_eq!(lines.join("\n") + "\n", log);
}

#[tokio::test]
async fn knowledge_persists_across_sessions_and_resets() {
    let s = serve().await;
    let id = s.create("u1").await;
    s.ok(&id, json!({ "say": "move it closer" })).await;
    s.ok(&id, json!({ "answer": "magnification" })).await;
    s.ok(&id, json!({ "pause": 6 })).await;
    let kb = s
        .client
        .get(format!("{}/sessions/{id}/kb", s.base))
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    assert!(kb.contains("move it closer"));

    let r = s.client.delete(format!("{}/sessions/{id}", s.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NO_CONTENT);
    assert!(s.kb_dir.join("u1.kb").exists());
    let (code, _) = s.input(&id, json!({ "say": "zoom in" })).await;
    assert_eq!(code, StatusCode::NOT_FOUND);

    let again = s.create("u1").await;
    let frames = s.ok(&again, json!({ "say": "move it closer" })).await;
    assert!(of(&frames, FrameKind::UserQuery).is_empty());
    assert!(of(&frames, FrameKind::Output)[0].contains("payload=zoom in"));

    let other = s.create("u2").await;
    let frames = s.ok(&other, json!({ "say": "move it closer" })).await;
    assert_eq!(of(&frames, FrameKind::UserQuery).len(), 1);

    let r = s
        .client
        .post(format!("{}/sessions/{again}/reset", s.base))
        .json(&json!({ "scope": "user" }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::NO_CONTENT);
    s.ok(&again, json!({ "pause": 6 })).await;
    let frames = s.ok(&again, json!({ "say": "move it closer" })).await;
    assert_eq!(of(&frames, FrameKind::UserQuery).len(), 1);

    let fresh = s.create("u3").await;
    let r = s
        .client
        .put(format!("{}/sessions/{fresh}/kb", s.base))
        .body(kb.replace("\tu1\t", "\tu3\t"))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::NO_CONTENT);
    let frames = s.ok(&fresh, json!({ "say": "move it closer" })).await;
    assert!(of(&frames, FrameKind::UserQuery).is_empty());
    let r = s
        .client
        .put(format!("{}/sessions/{fresh}/kb", s.base))
        .body("garbage line")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn deictic_request_completes_with_a_click() {
    let s = serve().await;
    let id = s.create("u1").await;
    let frames = s.ok(&id, json!({ "say": "what's this" })).await;
    assert!(of(&frames, FrameKind::Output).is_empty());
    let frames = s.ok(&id, json!({ "click": "12,8" })).await;
    let outs = of(&frames, FrameKind::Output);
    assert_eq!(outs.len(), 1);
    assert!(outs[0].contains("payload=Hotel Alpha: "));
    let frames = s.ok(&id, json!({ "remark": "that's wrong" })).await;
    assert!(of(&frames, FrameKind::TraceEvent).iter().any(|l| l.contains("\"REWARD\"")));
}
