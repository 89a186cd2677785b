//! HTTP API: `/search`, `/stats`, `/healthz`, plus the UI's static files.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use archsearch_core::index::UnitContent;
use archsearch_core::retrieval::{QueryResult, SearchError};
use archsearch_core::{Engine, ImageKind, Modality, Query};
use axum::extract::{Query as Params, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use log::error;
use serde::Serialize;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

const SNIPPET_CHARS: usize = 240;
const CONTEXT_CHARS: usize = 300;
const TABLE_PREVIEW_ROWS: usize = 5;

enum IndexState {
    Loading,
    Ready(Arc<Engine>),
    Failed(String),
}

/// Shared by all requests. The engine is replaced wholesale, never mutated.
pub struct AppState {
    index: RwLock<IndexState>,
    default_k: usize,
}

impl AppState {
    pub fn loading(default_k: usize) -> Self {
        AppState {
            index: RwLock::new(IndexState::Loading),
            default_k,
        }
    }

    pub fn ready(engine: Engine, default_k: usize) -> Self {
        let s = Self::loading(default_k);
        s.install(engine);
        s
    }

    /// Atomically swaps in a new engine; in-flight requests keep the old one.
    pub fn install(&self, engine: Engine) {
        *self.index.write().expect("index lock poisoned") = IndexState::Ready(Arc::new(engine));
    }

    pub fn fail(&self, message: String) {
        *self.index.write().expect("index lock poisoned") = IndexState::Failed(message);
    }

    pub fn is_ready(&self) -> bool {
        matches!(*self.index.read().expect("index lock poisoned"), IndexState::Ready(_))
    }

    fn engine(&self) -> Result<Arc<Engine>, ApiError> {
        match &*self.index.read().expect("index lock poisoned") {
            IndexState::Ready(e) => Ok(Arc::clone(e)),
            IndexState::Loading => Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "index is loading")),
            IndexState::Failed(m) => Err(ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                format!("index unavailable: {m}"),
            )),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        let status = if e.is_client_error() {
            StatusCode::BAD_REQUEST
        } else if matches!(e, SearchError::Provider(_)) {
            StatusCode::BAD_GATEWAY
        } else {
            StatusCode::INTERNAL_SERVER_ERROR
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body {
            error: String,
        }
        (self.status, Json(Body { error: self.message })).into_response()
    }
}

#[derive(Debug, Serialize)]
struct QueryEcho {
    q: String,
    modality: Modality,
    pipeline: String,
    k: usize,
}

#[derive(Debug, Serialize)]
struct SearchResponse {
    query: QueryEcho,
    pipeline: String,
    /// Query keywords, for highlighting.
    keywords: Vec<String>,
    results: Vec<ResultView>,
}

/// One hit as rendered by clients; which optional fields appear depends on `modality`.
#[derive(Debug, Serialize)]
pub struct ResultView {
    pub rank: u32,
    pub score: f64,
    pub doc_id: String,
    pub title: String,
    pub page_no: u32,
    pub modality: Modality,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snippet: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_kind: Option<ImageKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context_excerpt: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub header: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<String>>>,
}

impl ResultView {
    pub fn new(r: QueryResult, keywords: &[String]) -> Self {
        let mut v = ResultView {
            rank: r.rank,
            score: r.score,
            doc_id: r.doc_id,
            title: r.title,
            page_no: r.page_no,
            modality: r.modality,
            block_id: r.block_id,
            snippet: None,
            caption: None,
            image_kind: None,
            context_excerpt: None,
            header: None,
            rows: None,
        };
        match r.content {
            UnitContent::Text { text } => v.snippet = Some(excerpt(&text, keywords, SNIPPET_CHARS)),
            UnitContent::Image {
                image_kind,
                caption,
                context,
            } => {
                v.image_kind = Some(image_kind);
                v.caption = caption;
                v.context_excerpt = Some(excerpt(&context, keywords, CONTEXT_CHARS));
            }
            UnitContent::Table {
                header,
                mut rows,
                caption,
                ..
            } => {
                rows.truncate(TABLE_PREVIEW_ROWS);
                v.header = Some(header);
                v.rows = Some(rows);
                v.caption = caption;
            }
        }
        v
    }
}

/// Up to `max_chars` characters of `text` (whitespace collapsed), positioned
/// so the first keyword occurrence is visible. Cuts are marked with `…`.
pub fn excerpt(text: &str, keywords: &[String], max_chars: usize) -> String {
    let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let chars: Vec<char> = flat.chars().collect();
    if chars.len() <= max_chars {
        return flat;
    }
    let mut hit = None;
    let mut start = None;
    for (i, c) in chars.iter().chain(std::iter::once(&' ')).enumerate() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let word: String = chars[s..i].iter().collect::<String>().to_lowercase();
                if keywords.contains(&word) {
                    hit = Some(s);
                    break;
                }
                start = None;
            }
            _ => {}
        }
    }
    let begin = hit.map_or(0, |h| h.saturating_sub(max_chars / 4)).min(chars.len() - max_chars);
    let end = begin + max_chars;
    let mut out = String::new();
    if begin > 0 {
        out.push('…');
    }
    out.extend(&chars[begin..end]);
    if end < chars.len() {
        out.push('…');
    }
    out
}

async fn search(
    State(state): State<Arc<AppState>>,
    Params(params): Params<HashMap<String, String>>,
) -> Result<Json<SearchResponse>, ApiError> {
    let text = params
        .get("q")
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ApiError::bad_request("missing query parameter `q`"))?;
    let modality: Modality = params
        .get("modality")
        .ok_or_else(|| ApiError::bad_request("missing query parameter `modality` (text, image, table)"))?
        .parse()
        .map_err(ApiError::bad_request)?;
    let pipeline = params.get("pipeline").cloned().unwrap_or_else(|| "hybrid".into());
    let k = match params.get("k") {
        Some(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| ApiError::bad_request(format!("k must be a positive integer, got `{s}`")))?,
        None => state.default_k,
    };

    let engine = state.engine()?;
    if engine.pipelines().get(&pipeline).is_err() {
        let known = engine.pipelines().names().collect::<Vec<_>>().join(", ");
        return Err(ApiError::bad_request(format!("unknown pipeline `{pipeline}` ({known})")));
    }
    let query = Query::new(text.clone(), modality, pipeline.clone(), k)?;
    let keywords = engine.keywords(&text);
    let results = tokio::task::spawn_blocking(move || engine.search_results(&query))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(SearchResponse {
        query: QueryEcho {
            q: text,
            modality,
            pipeline: pipeline.clone(),
            k,
        },
        pipeline,
        results: results.into_iter().map(|r| ResultView::new(r, &keywords)).collect(),
        keywords,
    }))
}

async fn stats(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let engine = state.engine()?;
    Ok(Json(engine.snapshot().manifest.clone()).into_response())
}

async fn healthz(State(state): State<Arc<AppState>>) -> Response {
    #[derive(Serialize)]
    struct Health {
        status: &'static str,
        index_ready: bool,
    }
    Json(Health {
        status: "ok",
        index_ready: state.is_ready(),
    })
    .into_response()
}

fn cors(origin: Option<&str>) -> CorsLayer {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    match origin.map(str::trim) {
        None | Some("*") => layer.allow_origin(Any),
        Some(o) => match HeaderValue::from_str(o) {
            Ok(v) => layer.allow_origin(v),
            Err(_) => {
                error!("invalid cors_origin `{o}`, allowing any origin");
                layer.allow_origin(Any)
            }
        },
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<&Path>, cors_origin: Option<&str>) -> Router {
    let api = Router::new()
        .route("/search", get(search))
        .route("/stats", get(stats))
        .route("/healthz", get(healthz))
        .with_state(state);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(cors(cors_origin))
}
