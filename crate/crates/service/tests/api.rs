mod common;

use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use goldset_core::model::reference_epoch;
use goldset_service::api::{router, ApiConfig};
use goldset_service::ops::{self, SampleRequest};
use goldset_service::workspace::parse_timestamp;
use goldset_service::{Clock, Workspace};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::*;

struct Api {
    app: Router,
    _dir: tempfile::TempDir,
    v1: String,
    batch: String,
}

/// Seeded workspace plus one propensity batch of `k` tasks against v1.
fn api_with(k: usize, config: ApiConfig) -> Api {
    let dir = tempfile::tempdir().unwrap();
    let (ws, v1) = seeded(dir.path());
    let batch = ops::sample(
        &ws,
        &SampleRequest {
            gds: Some(v1.clone()),
            policy: None,
            k,
            mode: Default::default(),
            strategy: None,
            model: None,
            seed: 7,
        },
    )
    .unwrap();
    let app = router(Workspace::open(dir.path()).unwrap(), config);
    Api {
        app,
        _dir: dir,
        v1,
        batch: batch.batch_id,
    }
}

fn fixed() -> ApiConfig {
    ApiConfig {
        clock: Clock::fixed(parse_timestamp(FIXED_CLOCK).unwrap()),
        ..ApiConfig::default()
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body)).await
}

fn label_body(task: &Value, key: &str) -> Value {
    let item = task["item_id"].as_str().unwrap();
    json!({ "label": gold_label_of(item), "sme_id": "sme-7", "idempotency_key": key })
}

#[tokio::test]
async fn labeling_loop_grows_the_golden_set_by_the_batch() {
    let api = api_with(5, fixed());
    let batch_uri = format!("/api/v1/batches/{}", api.batch);
    for n in 0..5 {
        let (status, task) = get(&api.app, &format!("{batch_uri}/next-task")).await;
        assert_eq!(status, StatusCode::OK);
        let uri = format!("/api/v1/tasks/{}/label", task["task_id"].as_str().unwrap());
        let (status, labeled) = post(&api.app, &uri, label_body(&task, &format!("k{n}"))).await;
        assert_eq!(status, StatusCode::OK, "{labeled}");
        assert_eq!(labeled["status"], "labeled");
    }
    let (status, body) = get(&api.app, &format!("{batch_uri}/next-task")).await;
    assert_eq!((status, body), (StatusCode::NO_CONTENT, Value::Null));

    let (status, manifest) = post(&api.app, &format!("{batch_uri}/publish"), json!({})).await;
    assert_eq!(status, StatusCode::OK, "{manifest}");
    assert_eq!(manifest["item_count"], 15);
    assert_eq!(manifest["parent_id"], api.v1.as_str());
    assert_eq!(manifest["created_at"], "2025-03-01T12:00:00Z");

    let v2 = manifest["version_id"].as_str().unwrap();
    let (status, profile) = get(&api.app, &format!("/api/v1/versions/{v2}/profile")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(profile["item_count"], 15);
    assert_eq!(profile["profile"]["coverage"], 15.0 / 256.0);

    let (_, summary) = get(&api.app, &batch_uri).await;
    assert_eq!(summary["published"], v2);
    assert_eq!(summary["labeled"], 5);
}

#[tokio::test]
async fn leases_hand_each_task_to_one_caller_until_expiry() {
    let api = api_with(
        2,
        ApiConfig {
            lease: Duration::from_millis(150),
            ..fixed()
        },
    );
    let uri = format!("/api/v1/batches/{}/next-task", api.batch);
    let (_, first) = get(&api.app, &uri).await;
    let (_, second) = get(&api.app, &uri).await;
    assert_ne!(first["task_id"], second["task_id"]);
    assert_eq!(get(&api.app, &uri).await.0, StatusCode::NO_CONTENT);

    std::thread::sleep(Duration::from_millis(250));
    let (status, again) = get(&api.app, &uri).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["task_id"], first["task_id"]);
}

#[tokio::test]
async fn repeated_idempotency_key_labels_once() {
    let api = api_with(3, fixed());
    let (_, task) = get(&api.app, &format!("/api/v1/batches/{}/next-task", api.batch)).await;
    let uri = format!("/api/v1/tasks/{}/label", task["task_id"].as_str().unwrap());
    let body = label_body(&task, "click-1");
    let first = post(&api.app, &uri, body.clone()).await;
    let second = post(&api.app, &uri, body).await;
    assert_eq!(first.0, StatusCode::OK);
    assert_eq!(first, second);

    let (_, summary) = get(&api.app, &format!("/api/v1/batches/{}", api.batch)).await;
    assert_eq!(summary["labeled"], 1);
    assert_eq!(summary["pending"], 2);

    // A different submission on a labeled task is a conflict.
    let (status, err) = post(&api.app, &uri, label_body(&task, "click-2")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "task_not_pending");
}

#[tokio::test]
async fn errors_carry_status_and_code() {
    let api = api_with(2, fixed());
    let (_, task) = get(&api.app, &format!("/api/v1/batches/{}/next-task", api.batch)).await;
    let uri = format!("/api/v1/tasks/{}/label", task["task_id"].as_str().unwrap());

    let (status, err) = post(&api.app, &uri, json!({ "label": "maybe", "sme_id": "s" })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "invalid_label");
    assert!(err["message"].as_str().unwrap().contains("maybe"));

    let (status, err) = post(&api.app, &uri, json!({ "sme_id": "s" })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "bad_request");

    for uri in [
        "/api/v1/batches/batch-0099/next-task",
        "/api/v1/versions/0000/profile",
        "/api/v1/nowhere",
    ] {
        let (status, err) = get(&api.app, uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert!(err["code"].is_string() && err["message"].is_string());
    }
    let (status, _) = post(&api.app, "/api/v1/tasks/batch-0001:0042/label", json!({ "label": "positive", "sme_id": "s" })).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = get(&api.app, "/api/v1/delta?v1=abc").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn publish_with_pending_tasks_conflicts_unless_partial() {
    let api = api_with(3, fixed());
    let batch_uri = format!("/api/v1/batches/{}", api.batch);
    let (_, task) = get(&api.app, &format!("{batch_uri}/next-task")).await;
    let uri = format!("/api/v1/tasks/{}/label", task["task_id"].as_str().unwrap());
    post(&api.app, &uri, label_body(&task, "a")).await;

    let (status, err) = post(&api.app, &format!("{batch_uri}/publish"), json!({ "allow_partial": false })).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "pending_tasks");
    assert!(err["message"].as_str().unwrap().contains('2'));

    let (status, manifest) = post(&api.app, &format!("{batch_uri}/publish"), json!({ "allow_partial": true })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(manifest["item_count"], 11);
}

#[tokio::test]
async fn read_endpoints_return_module_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, v1) = seeded(dir.path());
    let p2 = policy(2);
    ops::add_policy(&ws, &p2).unwrap();
    // Relabel under v2 of the policy: items 0 and 1 swap classes.
    let mut relabels = gold((0..10).map(item_id), &p2);
    relabels[0].label = "negative".into();
    relabels[1].label = "positive".into();
    let v2 = ops::publish_labels(&ws, Some(&v1), relabels, &p2.reference(), reference_epoch())
        .unwrap()
        .version_id;
    ops::record_decisions(&ws, &oracle_decisions("gold-bot", (0..10).map(item_id), &policy(1))).unwrap();
    let app = router(ws, fixed());

    let (status, delta) = get(&app, &format!("/api/v1/delta?v1={v1}&v2={v2}")).await;
    assert_eq!(status, StatusCode::OK, "{delta}");
    assert_eq!(delta["transition"]["counts"], json!([[4, 1], [1, 4]]));
    let link_sum: u64 = delta["sankey"]["links"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["value"].as_u64().unwrap())
        .sum();
    assert_eq!(link_sum, 10);

    let (status, report) = get(&app, &format!("/api/v1/agents/gold-bot/report?gds={v1}")).await;
    assert_eq!(status, StatusCode::OK, "{report}");
    assert_eq!(report["report"]["accuracy"], 1.0);
    assert_eq!(report["scored"], 10);
    let (_, rescored) = get(&app, &format!("/api/v1/agents/gold-bot/report?gds={v2}")).await;
    assert_eq!(rescored["report"]["accuracy"], 0.8);

    let (status, _) = get(&app, &format!("/api/v1/agents/nobody/report?gds={v1}")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bearer_token_is_enforced() {
    let api = api_with(
        1,
        ApiConfig {
            bearer_token: Some("s3cret".into()),
            ..fixed()
        },
    );
    let uri = format!("/api/v1/batches/{}", api.batch);
    let (status, err) = get(&api.app, &uri).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(err["code"], "unauthorized");

    let req = Request::builder()
        .uri(&uri)
        .header(header::AUTHORIZATION, "Bearer s3cret")
        .body(Body::empty())
        .unwrap();
    assert_eq!(api.app.clone().oneshot(req).await.unwrap().status(), StatusCode::OK);
}
