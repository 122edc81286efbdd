//! Recommendation snapshot, request handling, and the HTTP surface.

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mixmatch_core::candidates::{load_candidates, CandidateMap};
use mixmatch_core::catalog::{load_store, EmbeddingStore};
use mixmatch_core::fusion::{ground, EntrySource, FusionConfig};
use mixmatch_core::retrieval::{CatalogScorer, MatchModelParams, QuerySide};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_THRESHOLD: f32 = 0.5;

fn default_threshold() -> f32 {
    DEFAULT_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_feature: Option<Vec<f32>>,
    pub k: usize,
    #[serde(default = "default_threshold")]
    pub threshold_p: f32,
    #[serde(default)]
    pub include_generated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Retrieved,
    Generated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseEntry {
    pub slot: usize,
    pub kind: EntryKind,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding_similarity: Option<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub entries: Vec<ResponseEntry>,
    pub model_version: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error(transparent)]
    Domain(#[from] mixmatch_core::Error),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Domain(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = serde_json::to_string(&ErrorBody { error: &self.to_string() }).unwrap_or_default();
        json_response(self.status(), body)
    }
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(axum::http::header::CONTENT_TYPE, "application/json")], body).into_response()
}

/// Everything needed to answer requests. Immutable once built.
#[derive(Debug)]
pub struct Snapshot {
    pub store: EmbeddingStore,
    pub params: MatchModelParams,
    pub candidates: CandidateMap,
    pub model_version: String,
    scorer: CatalogScorer,
}

/// `sha256:` plus the first 16 hex digits of the checkpoint bytes.
pub fn model_version(params: &MatchModelParams) -> mixmatch_core::Result<String> {
    let digest = Sha256::digest(params.to_bytes()?);
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    Ok(format!("sha256:{hex}"))
}

impl Snapshot {
    pub fn new(store: EmbeddingStore, params: MatchModelParams, candidates: CandidateMap) -> mixmatch_core::Result<Self> {
        if params.d_raw != store.d_raw() {
            return Err(mixmatch_core::Error::DimensionMismatch {
                context: "checkpoint d_raw vs store".into(),
                expected: store.d_raw(),
                found: params.d_raw,
            });
        }
        let scorer = CatalogScorer::new(&store, &params)?;
        Ok(Self {
            model_version: model_version(&params)?,
            store,
            params,
            candidates,
            scorer,
        })
    }

    pub fn load(paths: &SnapshotPaths) -> mixmatch_core::Result<Self> {
        let store = load_store(&paths.store)?;
        let params = mixmatch_core::retrieval::load_checkpoint(&paths.checkpoint)?;
        let candidates = match &paths.candidates {
            Some(p) => load_candidates(p, Some(store.d_sem()))?,
            None => CandidateMap::new(),
        };
        Self::new(store, params, candidates)
    }
}

#[derive(Clone, Debug)]
pub struct SnapshotPaths {
    pub store: PathBuf,
    pub checkpoint: PathBuf,
    pub candidates: Option<PathBuf>,
}

impl SnapshotPaths {
    pub fn new(store: &Path, checkpoint: &Path, candidates: Option<&Path>) -> Self {
        Self {
            store: store.to_path_buf(),
            checkpoint: checkpoint.to_path_buf(),
            candidates: candidates.map(Path::to_path_buf),
        }
    }
}

/// Runs retrieval and, when requested, grounds the query's generated
/// candidates against the retrieved list.
pub fn recommend(snapshot: &Snapshot, request: &RecommendRequest) -> Result<RecommendResponse, ServiceError> {
    if request.k == 0 {
        return Err(ServiceError::BadRequest("k must be at least 1".into()));
    }
    if !(-1.0..=1.0).contains(&request.threshold_p) {
        return Err(ServiceError::BadRequest(format!("threshold_p {} not in [-1, 1]", request.threshold_p)));
    }
    let (side, generated) = match (&request.query_id, &request.query_feature) {
        (Some(id), None) => {
            let query = snapshot
                .store
                .query(id)
                .ok_or_else(|| ServiceError::NotFound(format!("unknown query_id {id}")))?;
            let side = QuerySide::known_or_cold(query, &snapshot.params)?;
            (side, snapshot.candidates.get(id).map(Vec::as_slice).unwrap_or_default())
        }
        (None, Some(feature)) => {
            if feature.len() != snapshot.store.d_raw() {
                return Err(ServiceError::BadRequest(format!(
                    "query_feature has {} values, expected {}",
                    feature.len(),
                    snapshot.store.d_raw()
                )));
            }
            if feature.iter().any(|v| !v.is_finite()) {
                return Err(ServiceError::BadRequest("query_feature contains non-finite values".into()));
            }
            (QuerySide::cold(feature, &snapshot.params)?, &[][..])
        }
        _ => {
            return Err(ServiceError::BadRequest(
                "exactly one of query_id and query_feature is required".into(),
            ))
        }
    };
    let retrieved = snapshot.scorer.top_k(&side, request.k);

    let entries = if request.include_generated && !generated.is_empty() && !retrieved.is_empty() {
        let config = FusionConfig::new(request.threshold_p, request.k);
        ground(generated, &retrieved, &snapshot.store, &config)?
            .into_iter()
            .map(|e| match e.source {
                EntrySource::Retrieved {
                    item_id,
                    grounding_similarity,
                } => ResponseEntry {
                    slot: e.slot,
                    kind: EntryKind::Retrieved,
                    id: item_id,
                    score: None,
                    grounding_similarity: Some(grounding_similarity),
                },
                EntrySource::Generated { gen_id } => ResponseEntry {
                    slot: e.slot,
                    kind: EntryKind::Generated,
                    id: gen_id,
                    score: None,
                    grounding_similarity: None,
                },
            })
            .collect()
    } else {
        retrieved
            .into_iter()
            .enumerate()
            .map(|(slot, s)| ResponseEntry {
                slot,
                kind: EntryKind::Retrieved,
                id: s.item_id,
                score: Some(s.score),
                grounding_similarity: None,
            })
            .collect()
    };
    Ok(RecommendResponse {
        entries,
        model_version: snapshot.model_version.clone(),
    })
}

/// Canonical JSON text of a response; both the CLI and HTTP paths emit it.
pub fn render(response: &RecommendResponse) -> String {
    serde_json::to_string(response).expect("response serialization is infallible")
}

/// Served snapshot plus the paths it was loaded from.
pub struct AppState {
    current: RwLock<Arc<Snapshot>>,
    paths: Option<SnapshotPaths>,
}

impl AppState {
    pub fn new(snapshot: Snapshot, paths: Option<SnapshotPaths>) -> Arc<Self> {
        Arc::new(Self {
            current: RwLock::new(Arc::new(snapshot)),
            paths,
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.current.read().unwrap_or_else(|e| e.into_inner()))
    }

    /// Atomically replaces the served snapshot. Requests already holding the
    /// old one finish on it.
    pub fn replace(&self, snapshot: Snapshot) -> Arc<Snapshot> {
        let new = Arc::new(snapshot);
        let mut guard = self.current.write().unwrap_or_else(|e| e.into_inner());
        std::mem::replace(&mut *guard, new)
    }

    pub fn reload(&self) -> Result<String, ServiceError> {
        let paths = self
            .paths
            .as_ref()
            .ok_or_else(|| ServiceError::BadRequest("snapshot was not loaded from files".into()))?;
        let snapshot = Snapshot::load(paths)?;
        let version = snapshot.model_version.clone();
        self.replace(snapshot);
        log::info!("reloaded snapshot {version}");
        Ok(version)
    }
}

async fn recommend_handler(
    State(state): State<Arc<AppState>>,
    body: Result<Json<RecommendRequest>, JsonRejection>,
) -> Response {
    let Json(request) = match body {
        Ok(b) => b,
        Err(rejection) => return ServiceError::BadRequest(rejection.body_text()).into_response(),
    };
    let snapshot = state.snapshot();
    match recommend(&snapshot, &request) {
        Ok(response) => json_response(StatusCode::OK, render(&response)),
        Err(e) => {
            log::debug!("recommend failed: {e}");
            e.into_response()
        }
    }
}

#[derive(Serialize)]
struct Health<'a> {
    status: &'a str,
    model_version: &'a str,
}

async fn health_handler(State(state): State<Arc<AppState>>) -> Response {
    let snapshot = state.snapshot();
    let body = serde_json::to_string(&Health {
        status: "ok",
        model_version: &snapshot.model_version,
    })
    .unwrap_or_default();
    json_response(StatusCode::OK, body)
}

async fn reload_handler(State(state): State<Arc<AppState>>) -> Response {
    let result = tokio::task::spawn_blocking(move || state.reload()).await;
    match result {
        Ok(Ok(version)) => health_body(&version),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ServiceError::BadRequest(format!("reload task failed: {e}")).into_response(),
    }
}

fn health_body(version: &str) -> Response {
    let body = serde_json::to_string(&Health {
        status: "ok",
        model_version: version,
    })
    .unwrap_or_default();
    json_response(StatusCode::OK, body)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/recommend", post(recommend_handler))
        .route("/healthz", get(health_handler))
        .route("/reload", post(reload_handler))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
