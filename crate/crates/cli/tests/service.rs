use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use mixmatch_cli::service::{recommend, render, router, AppState, RecommendRequest, Snapshot, SnapshotPaths};
use mixmatch_core::candidates::CandidateMap;
use mixmatch_core::catalog::{EmbeddingStore, ItemRecord, QueryRecord, Role};
use mixmatch_core::retrieval::MatchModelParams;
use tower::ServiceExt;

fn fixture_snapshot() -> Snapshot {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    Snapshot::load(&SnapshotPaths::new(
        &dir.join("store.emb"),
        &dir.join("model.vbpr"),
        Some(&dir.join("candidates.gen")),
    ))
    .unwrap()
}

fn tiny_snapshot(seed: u64) -> Snapshot {
    let items = vec![
        ItemRecord::new("a", Role::Top, vec![1.0, 0.0], vec![1.0, 0.0]),
        ItemRecord::new("b", Role::Top, vec![0.0, 1.0], vec![0.0, 1.0]),
        ItemRecord::new("z", Role::Bottom, vec![1.0, 1.0], vec![1.0, 1.0]),
    ];
    let query = QueryRecord {
        id: "q".into(),
        feature: vec![0.5, 0.5],
        shown_bottom: Some("z".into()),
        ground_truth_top: None,
    };
    let store = EmbeddingStore::from_parts(2, 2, items, vec![query], Vec::new()).unwrap();
    let params = MatchModelParams::init(&store, 2, seed).unwrap();
    Snapshot::new(store, params, CandidateMap::new()).unwrap()
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: &str) -> (StatusCode, String) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let response = router(Arc::clone(state)).oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

#[tokio::test]
async fn healthz_reports_version() {
    let snapshot = tiny_snapshot(1);
    let version = snapshot.model_version.clone();
    let state = AppState::new(snapshot, None);
    let (status, body) = call(&state, "GET", "/healthz", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, format!(r#"{{"status":"ok","model_version":"{version}"}}"#));
}

#[tokio::test]
async fn k_larger_than_catalog() {
    let state = AppState::new(tiny_snapshot(1), None);
    let (status, body) = call(&state, "POST", "/recommend", r#"{"query_id":"q","k":3}"#).await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["entries"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn error_statuses() {
    let state = AppState::new(tiny_snapshot(1), None);
    let (status, body) = call(&state, "POST", "/recommend", r#"{"query_id":"nope","k":3}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(serde_json::from_str::<serde_json::Value>(&body).unwrap()["error"].is_string());
    for bad in [
        "{not json",
        r#"{"k":3}"#,
        r#"{"query_id":"q","query_feature":[1,2],"k":3}"#,
        r#"{"query_id":"q","k":0}"#,
        r#"{"query_id":"q","k":2,"threshold_p":1.5}"#,
        r#"{"query_feature":[1],"k":2}"#,
        r#"{"query_id":"q","k":2,"extra":true}"#,
    ] {
        let (status, body) = call(&state, "POST", "/recommend", bad).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        assert!(serde_json::from_str::<serde_json::Value>(&body).is_ok(), "{bad}: {body}");
    }
    let (status, _) = call(&state, "POST", "/reload", "").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn http_body_equals_offline_render() {
    let state = AppState::new(fixture_snapshot(), None);
    let request = RecommendRequest {
        query_id: Some("q0004".into()),
        query_feature: None,
        k: 4,
        threshold_p: 0.9,
        include_generated: true,
    };
    let offline = render(&recommend(&state.snapshot(), &request).unwrap());
    let (status, body) = call(&state, "POST", "/recommend", &serde_json::to_string(&request).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, offline);
    let (_, again) = call(&state, "POST", "/recommend", &serde_json::to_string(&request).unwrap()).await;
    assert_eq!(again, body);
}

#[tokio::test]
async fn snapshot_swap_is_atomic() {
    let state = AppState::new(tiny_snapshot(1), None);
    let held = state.snapshot();
    let replacement = tiny_snapshot(2);
    let new_version = replacement.model_version.clone();
    assert_ne!(held.model_version, new_version);
    let old = state.replace(replacement);
    assert_eq!(old.model_version, held.model_version);
    // A request that grabbed the old snapshot still completes against it.
    let request = RecommendRequest {
        query_id: Some("q".into()),
        query_feature: None,
        k: 2,
        threshold_p: 0.5,
        include_generated: false,
    };
    assert_eq!(recommend(&held, &request).unwrap().model_version, held.model_version);
    let (_, body) = call(&state, "GET", "/healthz", "").await;
    assert!(body.contains(&new_version));
}

#[tokio::test]
async fn reload_from_paths() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let paths = SnapshotPaths::new(&dir.join("store.emb"), &dir.join("model.vbpr"), None);
    let state = AppState::new(tiny_snapshot(1), Some(paths));
    let (status, body) = call(&state, "POST", "/reload", "").await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(state.snapshot().model_version, fixture_snapshot().model_version);
}
