//! HTTP query service over loaded, read-only artifacts.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::{json, Value};

use mathgcl_core::graph::{serialize_graph, Layout};
use mathgcl_core::pipeline::{build_graph, query_pipeline, read_corpus, ArtifactSet, Manifest, Model, QueryError};

/// Results returned when a request gives no `k`.
pub const DEFAULT_K: usize = 10;

pub struct ServeState {
    sets: HashMap<(Layout, Model), ArtifactSet>,
    latex: HashMap<String, String>,
    default_k: usize,
    default_layout: Layout,
    default_model: Model,
}

impl ServeState {
    /// Loads every (layout, model) listed in the manifest of `dir`.
    pub fn load(dir: &Path, default_k: usize) -> anyhow::Result<Self> {
        let manifest = Manifest::load(dir)?;
        let mut sets = HashMap::new();
        for entry in &manifest.entries {
            sets.insert((entry.layout, entry.model), ArtifactSet::load_entry(dir, entry)?);
        }
        let corpus_path = dir.join(&manifest.corpus);
        let file = std::fs::File::open(&corpus_path).map_err(|e| anyhow::anyhow!("{}: {e}", corpus_path.display()))?;
        let latex = read_corpus(std::io::BufReader::new(file))?.into_iter().map(|e| (e.id, e.latex)).collect();
        Self::new(sets, latex, default_k)
    }

    pub fn new(sets: HashMap<(Layout, Model), ArtifactSet>, latex: HashMap<String, String>, default_k: usize) -> anyhow::Result<Self> {
        if sets.is_empty() {
            anyhow::bail!("no artifacts to serve");
        }
        if default_k == 0 {
            anyhow::bail!("default k must be at least 1");
        }
        let default_layout = if sets.keys().any(|(l, _)| *l == Layout::Opt) { Layout::Opt } else { Layout::Slt };
        let mut models: Vec<Model> = sets.keys().filter(|(l, _)| *l == default_layout).map(|(_, m)| *m).collect();
        models.sort_by_key(|m| m.as_str());
        let default_model = if models.contains(&Model::GraphCl) { Model::GraphCl } else { models[0] };
        for set in sets.values() {
            if let Some(missing) = set.index.ids().iter().find(|id| !latex.contains_key(*id)) {
                anyhow::bail!("index id {missing} is not in the corpus");
            }
        }
        Ok(Self { sets, latex, default_k, default_layout, default_model })
    }
}

fn error(status: StatusCode, stage: &str, kind: &str, message: String) -> Response {
    (status, Json(json!({ "error": { "stage": stage, "kind": kind, "message": message } }))).into_response()
}

fn query_error(e: QueryError) -> Response {
    let status = match e {
        QueryError::Parse(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    (status, Json(json!({ "error": e.to_json() }))).into_response()
}

fn required_q(params: &HashMap<String, String>) -> Result<&str, Response> {
    match params.get("q").map(String::as_str) {
        Some(q) if !q.trim().is_empty() => Ok(q),
        _ => Err(error(StatusCode::BAD_REQUEST, "request", "MissingQuery", "parameter `q` is required".into())),
    }
}

async fn search(State(state): State<Arc<ServeState>>, Query(params): Query<HashMap<String, String>>) -> Response {
    let q = match required_q(&params) {
        Ok(q) => q,
        Err(r) => return r,
    };
    let layout = match params.get("layout") {
        None => state.default_layout,
        Some(s) => match s.parse::<Layout>() {
            Ok(l) => l,
            Err(m) => return error(StatusCode::NOT_FOUND, "request", "UnknownLayout", m),
        },
    };
    let model = match params.get("model") {
        None => state.default_model,
        Some(s) => match s.parse::<Model>() {
            Ok(m) => m,
            Err(m) => return error(StatusCode::NOT_FOUND, "request", "UnknownModel", m),
        },
    };
    let k = match params.get("k") {
        None => state.default_k,
        Some(s) => match s.parse::<usize>() {
            Ok(k) if k >= 1 => k,
            _ => return error(StatusCode::BAD_REQUEST, "request", "BadK", format!("k must be a positive integer, got {s:?}")),
        },
    };
    let Some(set) = state.sets.get(&(layout, model)) else {
        return error(StatusCode::NOT_FOUND, "request", "UnknownModel", format!("no {model} artifacts for layout {layout}"));
    };
    match query_pipeline(set, q, layout, k) {
        Ok(list) => {
            let results: Vec<Value> = list
                .hits
                .iter()
                .map(|h| json!({ "id": h.id, "latex": state.latex.get(&h.id), "score": h.score }))
                .collect();
            Json(json!({ "query": q, "layout": layout, "model": model, "k": k, "results": results })).into_response()
        }
        Err(e) => query_error(e),
    }
}

async fn parse(Query(params): Query<HashMap<String, String>>) -> Response {
    let q = match required_q(&params) {
        Ok(q) => q,
        Err(r) => return r,
    };
    let layouts = match params.get("layout").map(String::as_str) {
        None | Some("both") => vec![Layout::Slt, Layout::Opt],
        Some(s) => match s.parse::<Layout>() {
            Ok(l) => vec![l],
            Err(m) => return error(StatusCode::NOT_FOUND, "request", "UnknownLayout", m),
        },
    };
    let mut graphs = Vec::new();
    for layout in layouts {
        match build_graph(q, layout) {
            Ok(g) => graphs.push(serde_json::from_str::<Value>(&serialize_graph(&g, "query")).expect("records are JSON")),
            Err(e) => return query_error(QueryError::Parse(e)),
        }
    }
    Json(json!({ "query": q, "graphs": graphs })).into_response()
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

pub fn router(state: Arc<ServeState>) -> Router {
    Router::new().route("/search", get(search)).route("/parse", get(parse)).route("/health", get(health)).with_state(state)
}

pub async fn serve(state: ServeState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}
