use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use activelabel::corpus::{tokenize, Document, Label, LabelMap, LabeledExample};
use activelabel::sampling::{run_active_loop, DocPool, SamplingConfig};
use activelabel_service::{
    router, AppState, BatchItem, CorpusEntry, ErrorBody, EventStore, MetricsReport, ServiceConfig,
    SessionView, TrainingSummary, EXHAUSTED_HEADER, REMAINING_HEADER,
};
use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tower::ServiceExt;

const TOKEN: &str = "s3cret";

fn documents(n: usize) -> Vec<Document> {
    (0..n)
        .map(|i| {
            let title = match i % 6 {
                0 => format!("Savings Bond Rates Rise w{}", i % 13),
                1 => format!("Treasury bond auction v{} w{}", i % 4, i % 9),
                _ => format!("Football league w{} match v{}", i % 11, i % 5),
            };
            Document::new(format!("d{i:04}"), "", title)
        })
        .collect()
}

fn truth(doc_id: &str) -> Label {
    let n: usize = doc_id[1..].parse().unwrap();
    Label::from_bool(n % 6 == 0)
}

struct Harness {
    app: Router,
    store: Option<PathBuf>,
}

fn config(docs: Vec<Document>, store: EventStore, ui_dir: Option<PathBuf>) -> ServiceConfig {
    ServiceConfig {
        corpora: HashMap::from([("default".to_string(), CorpusEntry::new(docs))]),
        token: Some(TOKEN.to_string()),
        store,
        ui_dir,
    }
}

impl Harness {
    fn new(docs: Vec<Document>) -> Self {
        let cfg = config(docs, EventStore::in_memory(), None);
        Self {
            app: router(AppState::new(&cfg).unwrap(), None),
            store: None,
        }
    }

    fn persistent(docs: Vec<Document>, dir: PathBuf) -> Self {
        let cfg = config(docs, EventStore::open(&dir).unwrap(), None);
        Self {
            app: router(AppState::new(&cfg).unwrap(), None),
            store: Some(dir),
        }
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Vec<(String, String)>, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req
                .header(header::CONTENT_TYPE, "application/json")
                .body(Body::from(b.to_string()))
                .unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp
            .headers()
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_str().unwrap_or("").to_string()))
            .collect();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, headers, bytes)
    }

    async fn json<T: DeserializeOwned>(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, T) {
        let (status, _, bytes) = self.call(method, uri, body, Some(TOKEN)).await;
        let parsed = serde_json::from_slice(&bytes)
            .unwrap_or_else(|e| panic!("{uri}: {e}: {}", String::from_utf8_lossy(&bytes)));
        (status, parsed)
    }

    async fn create(&self, body: Value) -> String {
        let (status, v): (_, Value) = self.json("POST", "/v1/sessions", Some(body)).await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        v["session_id"].as_str().unwrap().to_string()
    }

    async fn batch(&self, id: &str) -> Vec<BatchItem> {
        let (status, items) = self.json("POST", &format!("/v1/sessions/{id}/batch"), None).await;
        assert_eq!(status, StatusCode::OK);
        items
    }

    async fn label(&self, id: &str, items: &[BatchItem]) -> TrainingSummary {
        let labels: BTreeMap<String, Label> = items.iter().map(|b| (b.doc_id.clone(), truth(&b.doc_id))).collect();
        let (status, summary) = self
            .json("POST", &format!("/v1/sessions/{id}/labels"), Some(json!(labels)))
            .await;
        assert_eq!(status, StatusCode::OK);
        summary
    }

    async fn export(&self, id: &str) -> Vec<u8> {
        let (status, _, bytes) = self.call("GET", &format!("/v1/sessions/{id}/classifier"), None, Some(TOKEN)).await;
        assert_eq!(status, StatusCode::OK);
        bytes
    }
}

fn seed_body(ids: &[&str]) -> Value {
    json!({
        "seeds": ids.iter().map(|id| json!({"doc_id": id, "label": "positive"})).collect::<Vec<_>>(),
    })
}

#[tokio::test]
async fn health_is_open_and_everything_else_needs_the_token() {
    let h = Harness::new(documents(50));
    let (status, _, body) = h.call("GET", "/v1/health", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&body).unwrap()["status"], "ok");

    for token in [None, Some("wrong")] {
        let (status, _, body) = h.call("POST", "/v1/sessions", Some(seed_body(&["d0000"])), token).await;
        assert_eq!(status, StatusCode::UNAUTHORIZED);
        assert_eq!(serde_json::from_slice::<ErrorBody>(&body).unwrap().code, "unauthorized");
    }
}

#[tokio::test]
async fn full_labeling_round() {
    let h = Harness::new(documents(120));
    let id = h.create(seed_body(&["d0000", "d0006", "d0012"])).await;

    let (_, m): (_, MetricsReport) = h.json("GET", &format!("/v1/sessions/{id}/metrics"), None).await;
    assert_eq!(m.labeled, 3);
    assert!(m.history.is_empty());
    assert_eq!(m.histogram.iter().map(|b| b.count).sum::<usize>(), 117);

    let before = h.export(&id).await;
    let items = h.batch(&id).await;
    assert_eq!(items.len(), 4);
    let above = items.iter().filter(|b| b.posterior >= 0.5).count();
    let below = items.len() - above;
    assert!(above == 2 || below == 0 || above == 0, "batch should straddle 0.5 when both sides exist");

    let (status, err): (_, ErrorBody) = h.json("POST", &format!("/v1/sessions/{id}/batch"), None).await;
    assert_eq!((status, err.code.as_str()), (StatusCode::CONFLICT, "conflict"));

    let (_, view): (_, SessionView) = h.json("GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(view.pending, items);

    let summary = h.label(&id, &items).await;
    assert_eq!(summary.labeled, 7);
    let after = h.export(&id).await;
    assert_ne!(before, after);

    for k in 2..=3 {
        let items = h.batch(&id).await;
        assert_eq!(h.label(&id, &items).await.labeled, 3 + 4 * k);
    }
    let (_, m): (_, MetricsReport) = h.json("GET", &format!("/v1/sessions/{id}/metrics"), None).await;
    assert_eq!(m.history.len(), 3);
    assert_eq!(m.labeled, 15);
    assert_eq!(m.history.last().unwrap().snapshot, m.snapshot);
}

#[tokio::test]
async fn partial_or_extra_labels_are_rejected_atomically() {
    let h = Harness::new(documents(60));
    let id = h.create(seed_body(&["d0000"])).await;
    let items = h.batch(&id).await;
    let before = h.export(&id).await;
    let (_, view_before): (_, SessionView) = h.json("GET", &format!("/v1/sessions/{id}"), None).await;

    let mut partial: BTreeMap<String, Label> = items[..3].iter().map(|b| (b.doc_id.clone(), truth(&b.doc_id))).collect();
    let (status, err): (_, ErrorBody) = h
        .json("POST", &format!("/v1/sessions/{id}/labels"), Some(json!(partial)))
        .await;
    assert_eq!((status, err.code.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "label_mismatch"));

    partial.insert(items[3].doc_id.clone(), Label::Negative);
    partial.insert("d0059".into(), Label::Negative);
    let (status, _): (_, ErrorBody) = h
        .json("POST", &format!("/v1/sessions/{id}/labels"), Some(json!(partial)))
        .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, err): (_, ErrorBody) = h
        .json("POST", &format!("/v1/sessions/{id}/labels"), Some(json!({"d0001": "maybe"})))
        .await;
    assert_eq!((status, err.code.as_str()), (StatusCode::BAD_REQUEST, "invalid_request"));

    assert_eq!(h.export(&id).await, before);
    let (_, view_after): (_, SessionView) = h.json("GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(view_after, view_before);
}

#[tokio::test]
async fn labels_without_a_batch_conflict() {
    let h = Harness::new(documents(30));
    let id = h.create(seed_body(&["d0000"])).await;
    let (status, err): (_, ErrorBody) = h
        .json("POST", &format!("/v1/sessions/{id}/labels"), Some(json!({"d0001": "negative"})))
        .await;
    assert_eq!((status, err.code.as_str()), (StatusCode::CONFLICT, "conflict"));
}

#[tokio::test]
async fn small_pool_flags_exhaustion() {
    let h = Harness::new(documents(3));
    let id = h.create(seed_body(&["d0000"])).await;
    let (status, headers, body) = h.call("POST", &format!("/v1/sessions/{id}/batch"), None, Some(TOKEN)).await;
    assert_eq!(status, StatusCode::OK);
    let items: Vec<BatchItem> = serde_json::from_slice(&body).unwrap();
    assert_eq!(items.len(), 2);
    let get = |k: &str| headers.iter().find(|(h, _)| h == k).map(|(_, v)| v.clone());
    assert_eq!(get(EXHAUSTED_HEADER).as_deref(), Some("true"));
    assert_eq!(get(REMAINING_HEADER).as_deref(), Some("0"));
    let summary = h.label(&id, &items).await;
    assert_eq!(summary.status, activelabel_service::SessionStatus::Exhausted);
    let (status, err): (_, ErrorBody) = h.json("POST", &format!("/v1/sessions/{id}/batch"), None).await;
    assert_eq!((status, err.code.as_str()), (StatusCode::CONFLICT, "pool_exhausted"));
}

#[tokio::test]
async fn bad_requests_and_unknown_sessions() {
    let h = Harness::new(documents(30));
    for body in [
        json!({}),
        json!({"seeds": [{"doc_id": "nope", "label": "positive"}]}),
        json!({"seeds": [{"doc_id": "d0000", "label": "positive"}], "config": {"batch_size": 3}}),
        json!({"seeds": [{"doc_id": "d0000", "label": "positive"}], "corpus": "other"}),
        json!({"bogus": 1}),
    ] {
        let (status, err): (_, ErrorBody) = h.json("POST", "/v1/sessions", Some(body.clone())).await;
        assert_eq!((status, err.code.as_str()), (StatusCode::BAD_REQUEST, "invalid_request"), "{body}");
    }
    for uri in ["/v1/sessions/zzz/metrics", "/v1/sessions/zzz/classifier", "/v1/sessions/zzz"] {
        let (status, err): (_, ErrorBody) = h.json("GET", uri, None).await;
        assert_eq!((status, err.code.as_str()), (StatusCode::NOT_FOUND, "not_found"));
    }
    let (status, _): (_, ErrorBody) = h.json("POST", "/v1/sessions/zzz/batch", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let empty = ServiceConfig {
        corpora: HashMap::from([("default".to_string(), CorpusEntry::new(Vec::new()))]),
        token: None,
        store: EventStore::in_memory(),
        ui_dir: None,
    };
    let h = Harness {
        app: router(AppState::new(&empty).unwrap(), None),
        store: None,
    };
    let (status, _): (_, ErrorBody) = h.json("POST", "/v1/sessions", Some(json!({"seed_words": ["bond"]}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn seed_words_session_and_eval_set() {
    let h = Harness::new(documents(90));
    let eval: BTreeMap<String, Label> = (60..90).map(|i| format!("d{i:04}")).map(|id| {
        let l = truth(&id);
        (id, l)
    }).collect();
    let id = h.create(json!({"seed_words": ["savings", "bond"], "eval_labels": eval})).await;
    let (_, m): (_, MetricsReport) = h.json("GET", &format!("/v1/sessions/{id}/metrics"), None).await;
    assert_eq!(m.labeled, 0);
    assert_eq!(m.remaining, 60);
    for _ in 0..3 {
        let items = h.batch(&id).await;
        assert!(items.iter().all(|b| !eval.contains_key(&b.doc_id)));
        h.label(&id, &items).await;
    }
    let (_, m): (_, MetricsReport) = h.json("GET", &format!("/v1/sessions/{id}/metrics"), None).await;
    assert_eq!(m.history.len(), 3);
    assert!(m.history.iter().all(|e| e.effectiveness.is_some()));
}

/// Labeling through the API with the oracle's answers must give the same
/// classifier as the library loop.
#[tokio::test]
async fn api_and_library_paths_agree() {
    let docs = documents(400);
    let h = Harness::new(docs.clone());
    let seeds = ["d0006", "d0060", "d0120"];
    let id = h.create(seed_body(&seeds)).await;
    for _ in 0..10 {
        let items = h.batch(&id).await;
        h.label(&id, &items).await;
    }
    let api_export = h.export(&id).await;

    let pool = DocPool::from_documents(&docs);
    let oracle: LabelMap = docs.iter().map(|d| (d.doc_id.clone(), truth(&d.doc_id))).collect();
    let starting: Vec<LabeledExample> = seeds
        .iter()
        .map(|&s| {
            let d = docs.iter().find(|d| d.doc_id == s).unwrap();
            LabeledExample::new(s, tokenize(&d.title), Label::Positive)
        })
        .collect();
    let config = SamplingConfig {
        iterations: 10,
        ..Default::default()
    };
    let out = run_active_loop(&pool, &oracle, starting, config).unwrap();
    assert_eq!(out.logs.len(), 10);
    assert_eq!(String::from_utf8(api_export).unwrap(), out.classifier.export_json());
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let docs = documents(100);
    let h = Harness::persistent(docs.clone(), dir.path().to_path_buf());
    let id = h.create(seed_body(&["d0000", "d0006"])).await;
    for _ in 0..2 {
        let items = h.batch(&id).await;
        h.label(&id, &items).await;
    }
    let pending = h.batch(&id).await;
    let export = h.export(&id).await;
    let (_, view): (_, SessionView) = h.json("GET", &format!("/v1/sessions/{id}"), None).await;
    let (_, metrics): (_, MetricsReport) = h.json("GET", &format!("/v1/sessions/{id}/metrics"), None).await;
    drop(h);

    let restarted = Harness::persistent(docs, dir.path().to_path_buf());
    assert!(restarted.store.is_some());
    assert_eq!(restarted.export(&id).await, export);
    let (_, view2): (_, SessionView) = restarted.json("GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(view2, view);
    let (_, metrics2): (_, MetricsReport) = restarted.json("GET", &format!("/v1/sessions/{id}/metrics"), None).await;
    assert_eq!(metrics2, metrics);
    let summary = restarted.label(&id, &pending).await;
    assert_eq!(summary.labeled, 2 + 12);
}

#[tokio::test]
async fn static_assets_are_served() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<!doctype html><title>labeling</title>").unwrap();
    std::fs::write(ui.path().join("app.js"), "console.log('ui')").unwrap();
    let cfg = config(documents(10), EventStore::in_memory(), Some(ui.path().to_path_buf()));
    let h = Harness {
        app: router(AppState::new(&cfg).unwrap(), cfg.ui_dir.clone()),
        store: None,
    };
    let (status, _, body) = h.call("GET", "/", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("labeling"));
    let (status, headers, _) = h.call("GET", "/app.js", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(headers.iter().any(|(k, v)| k == "content-type" && v.contains("javascript")));
    let (status, _, _) = h.call("GET", "/missing.css", None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, body) = h.call("GET", "/v1/nothing", None, Some(TOKEN)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(serde_json::from_slice::<ErrorBody>(&body).unwrap().code, "not_found");
}
