//! In-process stand-in for a remote embedding service.
//!
//! `POST /embed` with `{"texts": [...]}` answers `{"vectors": [[...], ...]}`.
//! Texts found in the fixture table get their stored vector; anything else
//! gets [`hashed_vector`]. The first `fail_first` requests answer 503.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

pub const DIM: usize = 8;

/// Deterministic vector for texts outside the fixture table.
pub fn hashed_vector(text: &str) -> Vec<f32> {
    let sum: u64 = text.bytes().map(u64::from).sum();
    (0..DIM as u64)
        .map(|k| ((sum * (k + 1) + text.len() as u64) % 97) as f32 / 97.0)
        .collect()
}

struct Shared {
    table: HashMap<String, Vec<f32>>,
    fail_first: usize,
    requests: AtomicUsize,
}

pub struct EmbeddingStub {
    pub addr: SocketAddr,
    shared: Arc<Shared>,
}

impl EmbeddingStub {
    pub fn start(table: HashMap<String, Vec<f32>>, fail_first: usize) -> Self {
        let shared = Arc::new(Shared {
            table,
            fail_first,
            requests: AtomicUsize::new(0),
        });
        let app = Router::new()
            .route("/embed", post(embed))
            .route("/ragged", post(ragged))
            .with_state(shared.clone());
        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
                tx.send(listener.local_addr().expect("addr")).expect("send addr");
                axum::serve(listener, app).await.expect("serve");
            });
        });
        let addr = rx.recv().expect("stub server failed to start");
        EmbeddingStub { addr, shared }
    }

    pub fn url(&self, route: &str) -> String {
        format!("http://{}/{}", self.addr, route.trim_start_matches('/'))
    }

    /// Requests received so far, failed ones included.
    pub fn requests(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }
}

fn texts_of(body: &Value) -> Vec<String> {
    body["texts"]
        .as_array()
        .map(|a| a.iter().filter_map(|t| t.as_str().map(String::from)).collect())
        .unwrap_or_default()
}

async fn embed(State(s): State<Arc<Shared>>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let seen = s.requests.fetch_add(1, Ordering::SeqCst);
    if seen < s.fail_first {
        return (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"error": "warming up"})));
    }
    let vectors: Vec<Vec<f32>> = texts_of(&body)
        .iter()
        .map(|t| s.table.get(t).cloned().unwrap_or_else(|| hashed_vector(t)))
        .collect();
    (StatusCode::OK, Json(json!({ "vectors": vectors })))
}

/// Returns vectors whose length varies with position.
async fn ragged(State(s): State<Arc<Shared>>, Json(body): Json<Value>) -> Json<Value> {
    s.requests.fetch_add(1, Ordering::SeqCst);
    let vectors: Vec<Vec<f32>> = texts_of(&body)
        .iter()
        .enumerate()
        .map(|(i, _)| vec![0.5; 2 + i])
        .collect();
    Json(json!({ "vectors": vectors }))
}
