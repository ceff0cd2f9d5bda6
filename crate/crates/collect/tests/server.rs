use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

use dialogbench_collect::server::{router, serve};
use dialogbench_collect::{FileStore, Hub, HubConfig, MemoryStore, SystemClock};

fn hub() -> Arc<Hub> {
    Arc::new(Hub::new(HubConfig::default(), Arc::new(MemoryStore::default()), Arc::new(SystemClock)))
}

async fn call(hub: &Arc<Hub>, req: Request<Body>) -> (StatusCode, Value) {
    let resp = router(hub.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), 1 << 20).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn post_images(body: &str) -> Request<Body> {
    Request::post("/images").body(Body::from(body.to_string())).unwrap()
}

#[tokio::test]
async fn http_endpoints() {
    let hub = hub();
    let body = "{\"image_id\":\"a1\",\"caption\":\"a dog\",\"image_url\":\"https://x/a1.jpg\"}\n\n\
                {\"image_id\":\"a2\",\"caption\":\"a cat\",\"image_url\":null}\n";
    let (status, v) = call(&hub, post_images(body)).await;
    assert_eq!((status, v), (StatusCode::OK, json!({"added": 2})));
    let (_, v) = call(&hub, post_images(body)).await;
    assert_eq!(v, json!({"added": 0}));

    let (status, v) = call(&hub, post_images("{\"image_id\":\"../x\",\"caption\":\"c\"}")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");
    let (status, v) = call(&hub, post_images("{\"image_id\":\"ok\"}\nnot json")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().starts_with("line 1"), "{v}");

    let (status, v) = call(&hub, Request::get("/healthz").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["images"]["unserved"], 2);
    assert_eq!(v["store_errors"], 0);

    let (status, _) = call(&hub, Request::get("/sessions/s000000").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (_, v) = call(&hub, Request::get("/sessions").body(Body::empty()).unwrap()).await;
    assert_eq!(v, json!([]));
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn open(addr: &str) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

async fn recv(ws: &mut Ws) -> Value {
    loop {
        let msg =
            tokio::time::timeout(Duration::from_secs(5), ws.next()).await.expect("frame in time").unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

async fn start(hub: Arc<Hub>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    tokio::spawn(serve(listener, hub));
    addr
}

#[tokio::test]
async fn websocket_dialog_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(FileStore::open(dir.path()).unwrap());
    let hub = Arc::new(Hub::new(HubConfig { seed: 9, ..HubConfig::default() }, store.clone(), Arc::new(SystemClock)));
    hub.add_images(vec![dialogbench_collect::ImageItem {
        image_id: "pic".into(),
        caption: "two people on a bench".into(),
        image_url: Some("https://img.test/pic.jpg".into()),
    }])
    .unwrap();
    let addr = start(hub.clone()).await;

    let mut a = open(&addr).await;
    send(&mut a, json!({"seq": 1, "type": "join", "worker_id": "alice"})).await;
    let mut b = open(&addr).await;
    send(&mut b, json!({"seq": 1, "type": "join", "worker_id": "bob"})).await;
    let (fa, fb) = (recv(&mut a).await, recv(&mut b).await);
    assert_eq!((fa["type"].as_str(), fb["type"].as_str()), (Some("paired"), Some("paired")));
    assert_eq!(fa["seq"], 1);
    let (mut q, mut ans, qf, af) = if fa["role"] == "questioner" { (a, b, fa, fb) } else { (b, a, fb, fa) };
    assert!(qf.get("image_url").is_none(), "{qf}");
    assert_eq!(af["image_url"], "https://img.test/pic.jpg");
    assert_eq!(qf["caption"], "two people on a bench");

    // Answering first is refused.
    send(&mut ans, json!({"type": "message", "text": "hello"})).await;
    assert_eq!(recv(&mut ans).await["type"], "turn_rejected");

    for round in 1..=10 {
        send(&mut q, json!({"type": "message", "text": format!("question {round}?")})).await;
        let echo = recv(&mut q).await;
        let got = recv(&mut ans).await;
        assert_eq!((echo["type"].as_str(), got["round"].as_u64()), (Some("message"), Some(round)));
        assert_eq!(got["from_role"], "questioner");
        send(&mut ans, json!({"type": "message", "text": format!("answer {round}")})).await;
        assert_eq!(recv(&mut q).await["text"], format!("answer {round}"));
        let _ = recv(&mut ans).await;
    }
    assert_eq!(recv(&mut q).await["type"], "session_complete");
    assert_eq!(recv(&mut ans).await["type"], "session_complete");

    let dialogs = dialogbench_collect::store::read_dialogs(dir.path()).unwrap();
    assert_eq!(dialogs.len(), 1);
    assert_eq!(dialogs[0].rounds[9].answer, "answer 10");
    let events = store.read_events("s000000").unwrap();
    assert!(events.windows(2).all(|w| w[1].seq == w[0].seq + 1));
}

#[tokio::test]
async fn websocket_requires_join_and_unique_ids() {
    let hub = hub();
    let addr = start(hub.clone()).await;
    let mut ws = open(&addr).await;
    send(&mut ws, json!({"type": "heartbeat"})).await;
    assert_eq!(recv(&mut ws).await, json!({"seq": 1, "type": "error", "code": "join_required"}));

    let mut first = open(&addr).await;
    send(&mut first, json!({"type": "join", "worker_id": "dup"})).await;
    // Let the first join register before the duplicate arrives.
    for _ in 0..50 {
        if hub.status().waiting == 1 {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    let mut second = open(&addr).await;
    send(&mut second, json!({"type": "join", "worker_id": "dup"})).await;
    assert_eq!(recv(&mut second).await["code"], "already_connected");

    send(&mut first, json!({"type": "message", "text": "anyone?"})).await;
    assert_eq!(recv(&mut first).await["code"], "not_in_session");
    send(&mut first, json!({"type": "bogus"})).await;
    assert_eq!(recv(&mut first).await["code"], "bad_frame");
}

#[tokio::test]
async fn partner_drop_turns_into_solo_prompt() {
    let hub = hub();
    hub.add_images(dialogbench_collect::sim::sample_images(1)).unwrap();
    let addr = start(hub.clone()).await;
    let mut a = open(&addr).await;
    send(&mut a, json!({"type": "join", "worker_id": "a"})).await;
    let mut b = open(&addr).await;
    send(&mut b, json!({"type": "join", "worker_id": "b"})).await;
    let fa = recv(&mut a).await;
    let _ = recv(&mut b).await;
    let role = fa["role"].as_str().unwrap().to_string();
    send(&mut b, json!({"type": "leave"})).await;
    assert_eq!(recv(&mut a).await["type"], "partner_disconnected");
    let prompt = recv(&mut a).await;
    assert_eq!(prompt["type"], "solo_prompt");
    for i in 1..=10 {
        send(&mut a, json!({"type": "message", "text": format!("solo {i}")})).await;
        let echo = recv(&mut a).await;
        assert_eq!((echo["from_role"].as_str(), echo["round"].as_u64()), (Some(role.as_str()), Some(i)));
    }
    assert_eq!(recv(&mut a).await["type"], "session_complete");
    let st = hub.status();
    assert_eq!((st.sessions_discarded, st.images.unserved), (1, 1));
}
