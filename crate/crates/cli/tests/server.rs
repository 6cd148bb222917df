mod common;

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use mathgcl_cli::server::{router, ServeState};

fn state() -> Arc<ServeState> {
    Arc::new(ServeState::load(common::shared_artifacts(), 10).unwrap())
}

fn encode(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

async fn get(state: &Arc<ServeState>, uri: &str) -> (StatusCode, Value) {
    let resp = router(state.clone()).oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{uri}: {e}: {}", String::from_utf8_lossy(&bytes))))
}

#[tokio::test]
async fn health_is_ok() {
    let (status, body) = get(&state(), "/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, serde_json::json!({ "status": "ok" }));
}

#[tokio::test]
async fn search_returns_the_indexed_formula_first() {
    let s = state();
    let corpus = common::small_corpus();
    let ids: Vec<&str> = corpus.iter().map(|e| e.id.as_str()).collect();
    for layout in ["slt", "opt"] {
        for model in ["baseline", "graphcl", "bgrl"] {
            for target in corpus.iter().step_by(3) {
                let uri = format!("/search?q={}&k=7&layout={layout}&model={model}", encode(&target.latex));
                let (status, body) = get(&s, &uri).await;
                assert_eq!(status, StatusCode::OK, "{uri}");
                assert_eq!(body["query"], target.latex.as_str());
                let results = body["results"].as_array().unwrap();
                assert_eq!(results.len(), 7);
                assert_eq!(results[0]["id"], target.id.as_str(), "{uri}");
                assert_eq!(results[0]["latex"], target.latex.as_str());
                assert!((results[0]["score"].as_f64().unwrap() - 1.0).abs() < 1e-6);
                let scores: Vec<f64> = results.iter().map(|r| r["score"].as_f64().unwrap()).collect();
                assert!(scores.windows(2).all(|w| w[0] >= w[1]));
                assert!(results.iter().all(|r| ids.contains(&r["id"].as_str().unwrap())));
            }
        }
    }
}

#[tokio::test]
async fn search_defaults_to_ten_results_and_caps_k() {
    let s = state();
    let (status, body) = get(&s, "/search?q=x%2B1").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["results"].as_array().unwrap().len(), 10);
    assert_eq!((body["layout"].as_str(), body["model"].as_str()), (Some("opt"), Some("graphcl")));
    let (_, body) = get(&s, "/search?q=x&k=1000").await;
    assert_eq!(body["results"].as_array().unwrap().len(), 20);
}

#[tokio::test]
async fn malformed_queries_are_400_with_stage_labels() {
    let s = state();
    let (status, body) = get(&s, &format!("/search?q={}", encode("a^{3"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["kind"], "UnbalancedDelimiter");
    assert_eq!(body["error"]["stage"], "parse");
    assert_eq!(body["error"]["offset"], 3);
    let (status, body) = get(&s, &format!("/search?q={}", encode("\\unknown{x}"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["kind"], "UnsupportedCommand");
    for uri in ["/search", "/search?q=", "/search?q=x&k=0", "/search?q=x&k=-3", "/search?q=x&k=ten"] {
        assert_eq!(get(&s, uri).await.0, StatusCode::BAD_REQUEST, "{uri}");
    }
    for uri in ["/search?q=x&model=mvgrl", "/search?q=x&layout=mathml", "/search?q=x&model=infograph"] {
        assert_eq!(get(&s, uri).await.0, StatusCode::NOT_FOUND, "{uri}");
    }
}

#[tokio::test]
async fn parse_previews_both_layouts() {
    let s = state();
    let (status, body) = get(&s, &format!("/parse?q={}", encode("a^3+b^2=0"))).await;
    assert_eq!(status, StatusCode::OK);
    let graphs = body["graphs"].as_array().unwrap();
    assert_eq!(graphs.len(), 2);
    assert_eq!(graphs[0]["layout"], "slt");
    assert_eq!(graphs[0]["nodes"].as_array().unwrap().len(), 7);
    assert_eq!(graphs[1]["nodes"][0], "U!eq");
    let (_, body) = get(&s, "/parse?q=x&layout=opt").await;
    assert_eq!(body["graphs"].as_array().unwrap().len(), 1);
    let (status, body) = get(&s, &format!("/parse?q={}", encode("\\frac{a}"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["stage"], "parse");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_requests_share_artifacts() {
    let s = state();
    let corpus = common::small_corpus();
    let mut tasks = Vec::new();
    for i in 0..32 {
        let s = s.clone();
        let e = corpus[i % corpus.len()].clone();
        tasks.push(tokio::spawn(async move {
            let (status, body) = get(&s, &format!("/search?q={}&k=3", encode(&e.latex))).await;
            assert_eq!(status, StatusCode::OK);
            (e.id, body["results"][0]["id"].as_str().unwrap().to_string())
        }));
    }
    for t in tasks {
        let (expected, got) = t.await.unwrap();
        assert_eq!(expected, got);
    }
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(10))).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut out = String::new();
    stream.read_to_string(&mut out).ok()?;
    Some(out)
}

#[test]
fn serve_subcommand_answers_over_tcp() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let artifacts = common::shared_artifacts();
    let _server = Server(
        Command::new(env!("CARGO_BIN_EXE_mathgcl"))
            .args(["serve", "--artifacts", artifacts.to_str().unwrap(), "--port", &port.to_string()])
            .env("MATHGCL_LOG", "warn")
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let mut health = None;
    for _ in 0..100 {
        health = http_get(port, "/health");
        if health.is_some() {
            break;
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    let health = health.expect("server came up");
    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    assert!(health.ends_with("{\"status\":\"ok\"}"));
    let bad = http_get(port, &format!("/search?q={}", encode("a^{3"))).unwrap();
    assert!(bad.starts_with("HTTP/1.1 400"), "{bad}");
    assert!(bad.contains("UnbalancedDelimiter"));
}
