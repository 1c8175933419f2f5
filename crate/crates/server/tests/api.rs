use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use gazereview_core::session::{frame_to_ms, GazePrediction, Session};
use gazereview_core::store::{NewSession, Store};
use gazereview_server::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

/// Ten frames at 5 fps. Frames 3..=5 look right (yaw 0.8), frame 7 has no face.
fn fixture() -> (tempfile::TempDir, Router) {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let preds = (0..10)
        .map(|i| GazePrediction {
            frame: i,
            t_ms: frame_to_ms(i, 5.0),
            pitch: 0.0,
            yaw: if (3..=5).contains(&i) { 0.8 } else { 0.0 },
            face_detected: i != 7,
            confidence: if i == 7 { 0.0 } else { 1.0 },
        })
        .collect();
    let s = Session::new("s1", 5.0, preds, vec![]).unwrap();
    store.persist_session(&s, NewSession::synthetic()).unwrap();
    (dir, router(Arc::new(AppState::new(store))))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

fn rect(u_min: f64, u_max: f64, v_min: f64, v_max: f64) -> Value {
    json!({"shape": {"type": "rectangle", "u_min": u_min, "u_max": u_max, "v_min": v_min, "v_max": v_max}})
}

#[tokio::test]
async fn sessions_and_plot() {
    let (_d, app) = fixture();
    let (st, list) = call(&app, Method::GET, "/api/sessions", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["frame_count"], 10);

    let (st, detail) = call(&app, Method::GET, "/api/sessions/s1", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(detail["fps"], 5.0);
    assert_eq!(detail["events"], json!([]));

    let (st, plot) = call(&app, Method::GET, "/api/sessions/s1/plot", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(plot["frame_count"], 10);
    assert_eq!(plot["points"].as_array().unwrap().len(), 9);
    let (_, again) = call(&app, Method::GET, "/api/sessions/s1/plot", None).await;
    assert_eq!(plot, again);

    let (_, all) = call(&app, Method::GET, "/api/sessions/s1/plot?include_untrusted=true", None).await;
    assert_eq!(all["points"].as_array().unwrap().len(), 10);

    let (st, _) = call(&app, Method::GET, "/api/sessions/s1/plot?bogus=1", None).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn unknown_resources_are_404() {
    let (_d, app) = fixture();
    for uri in [
        "/api/sessions/nope",
        "/api/sessions/nope/plot",
        "/api/sessions/s1/labels/human_only",
        "/api/sessions/s1/labels/martian",
        "/api/sessions/s1/votes",
        "/api/evaluations/0123456789abcdef",
    ] {
        let (st, body) = call(&app, Method::GET, uri, None).await;
        assert_eq!(st, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["error"], "not_found");
    }
    let (st, _) = call(&app, Method::POST, "/api/sessions/nope/region-query", Some(rect(-1.0, 1.0, -1.0, 1.0))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn region_queries() {
    let (_d, app) = fixture();
    let (st, r) = call(&app, Method::POST, "/api/sessions/s1/region-query", Some(rect(-1.0, 1.0, -1.0, 1.0))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(r["frames"], json!([0, 1, 2, 3, 4, 5, 6, 8, 9]));
    assert_eq!(r["highlight_ranges"], json!([{"start": 0, "end": 6}, {"start": 8, "end": 9}]));
    assert_eq!(r["time_ranges_ms"], json!([[0, 1400], [1600, 2000]]));
    assert_eq!(r["fps"], 5.0);

    // sin(0.8) ~ 0.717, so only the look-away frames fall right of u = 0.5
    let (_, r) = call(&app, Method::POST, "/api/sessions/s1/region-query", Some(rect(0.5, 1.0, -1.0, 1.0))).await;
    assert_eq!(r["highlight_ranges"], json!([{"start": 3, "end": 5}]));
    assert_eq!(r["time_ranges_ms"], json!([[600, 1200]]));

    let (_, r) = call(&app, Method::POST, "/api/sessions/s1/region-query", Some(rect(0.3, 0.3, -1.0, 1.0))).await;
    assert_eq!(r["frames"], json!([]));
    assert_eq!(r["highlight_ranges"], json!([]));
    assert_eq!(r["time_ranges_ms"], json!([]));

    let mut with_untrusted = rect(-0.1, 0.1, -0.1, 0.1);
    with_untrusted["include_untrusted"] = json!(true);
    let (_, r) = call(&app, Method::POST, "/api/sessions/s1/region-query", Some(with_untrusted)).await;
    assert!(r["frames"].as_array().unwrap().contains(&json!(7)));

    let bowtie = json!({"shape": {"type": "polygon", "vertices": [[0, 0], [1, 1], [1, 0], [0, 1]]}});
    let (st, e) = call(&app, Method::POST, "/api/sessions/s1/region-query", Some(bowtie)).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["error"], "validation");
    assert!(!e["fields"].as_array().unwrap().is_empty());

    let (st, _) = call(&app, Method::POST, "/api/sessions/s1/region-query", Some(rect(1.0, -1.0, 0.0, 0.0))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let (st, _) = call(&app, Method::POST, "/api/sessions/s1/region-query", Some(json!({"nope": 1}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn region_query_is_monotone_in_rectangle_size() {
    let (_d, app) = fixture();
    let mut prev: Vec<Value> = Vec::new();
    for i in 0..=10 {
        let h = i as f64 / 10.0;
        let (_, r) = call(&app, Method::POST, "/api/sessions/s1/region-query", Some(rect(-h, h, -h, h))).await;
        let frames = r["frames"].as_array().unwrap().clone();
        assert!(prev.iter().all(|f| frames.contains(f)));
        prev = frames;
    }
    assert_eq!(prev.len(), 9);
}

#[tokio::test]
async fn labels_put_then_get_identical() {
    let (_d, app) = fixture();
    let body = json!({"version": 0, "intervals": [{"start": 3, "end": 5}, {"start": 5, "end": 6}]});
    let (st, put) = call(&app, Method::PUT, "/api/sessions/s1/labels/human_only", Some(body)).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(put["version"], 1);
    assert_eq!(put["intervals"], json!([{"start": 3, "end": 6}]));
    assert_eq!(put["frame_count"], 10);
    assert_eq!(put["fps"], 5.0);
    let (st, get) = call(&app, Method::GET, "/api/sessions/s1/labels/human_only", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(put, get);

    // empty list is a valid all-negative labeling
    let (st, empty) = call(
        &app,
        Method::PUT,
        "/api/sessions/s1/labels/hybrid",
        Some(json!({"version": 0, "intervals": []})),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(empty["intervals"], json!([]));
}

#[tokio::test]
async fn stale_version_conflicts() {
    let (_d, app) = fixture();
    let uri = "/api/sessions/s1/labels/ml_only";
    let first = json!({"version": 0, "intervals": [{"start": 1, "end": 2}]});
    assert_eq!(call(&app, Method::PUT, uri, Some(first.clone())).await.0, StatusCode::OK);
    // resubmitting identical content is not a conflict
    assert_eq!(call(&app, Method::PUT, uri, Some(first)).await.0, StatusCode::OK);
    let stale = json!({"version": 0, "intervals": [{"start": 4, "end": 4}]});
    let (st, e) = call(&app, Method::PUT, uri, Some(stale)).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(e["error"], "conflict");
    let fresh = json!({"version": 1, "intervals": [{"start": 4, "end": 4}]});
    let (st, v2) = call(&app, Method::PUT, uri, Some(fresh)).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v2["version"], 2);
}

#[tokio::test]
async fn label_validation() {
    let (_d, app) = fixture();
    let out_of_range = json!({"version": 0, "intervals": [{"start": 8, "end": 10}]});
    let (st, e) = call(&app, Method::PUT, "/api/sessions/s1/labels/hybrid", Some(out_of_range)).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(e["fields"][0]["field"].as_str().unwrap().starts_with("intervals"));
    let reference = json!({"version": 0, "intervals": []});
    let (st, _) = call(&app, Method::PUT, "/api/sessions/s1/labels/reference", Some(reference)).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let (st, _) = call(&app, Method::PUT, "/api/sessions/s1/labels/hybrid", Some(json!({"intervals": []}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn votes_review_set_and_evaluation() {
    let (_d, app) = fixture();
    let put = |sys: &'static str, ivs: Value| {
        let app = app.clone();
        async move {
            let uri = format!("/api/sessions/s1/labels/{sys}");
            let (st, _) = call(&app, Method::PUT, &uri, Some(json!({"version": 0, "intervals": ivs}))).await;
            assert_eq!(st, StatusCode::OK);
        }
    };
    put("human_only", json!([{"start": 3, "end": 4}])).await;
    put("ml_only", json!([{"start": 3, "end": 5}])).await;
    put("hybrid", json!([{"start": 3, "end": 5}, {"start": 8, "end": 8}])).await;

    let (st, rs) = call(&app, Method::GET, "/api/sessions/s1/review-set", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(rs["intervals"], json!([{"start": 3, "end": 5}, {"start": 8, "end": 8}]));

    let bad_k = json!({"K": 3, "votes": [{"interval": {"start": 3, "end": 5}, "votes": [true]}]});
    let (st, _) = call(&app, Method::POST, "/api/sessions/s1/votes", Some(bad_k)).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);

    let votes = json!({"K": 3, "votes": [
        {"interval": {"start": 8, "end": 8}, "votes": [false, false, true]},
        {"interval": {"start": 3, "end": 5}, "votes": [true, true, false]},
    ]});
    let (st, v) = call(&app, Method::POST, "/api/sessions/s1/votes", Some(votes)).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["k"], 3);
    assert_eq!(v["votes"][0]["interval"]["start"], 3);
    let (_, got) = call(&app, Method::GET, "/api/sessions/s1/votes", None).await;
    assert_eq!(v, got);

    let req = json!({"session_ids": ["s1"], "K": 3});
    let (st, created) = call(&app, Method::POST, "/api/evaluations", Some(req.clone())).await;
    assert_eq!(st, StatusCode::OK);
    let id = created["report_id"].as_str().unwrap().to_string();
    let (st, report) = call(&app, Method::GET, &format!("/api/evaluations/{id}"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(report["n_sessions"], 1);
    // reference positives are frames 3..=5
    assert_eq!(report["per_system"]["human_only"]["mean_precision"], 1.0);
    assert_eq!(report["per_system"]["human_only"]["mean_recall_ub"], 2.0 / 3.0);
    assert_eq!(report["per_system"]["hybrid"]["mean_precision"], 0.75);
    assert_eq!(report["per_system"]["ml_only"]["mean_recall_ub"], 1.0);

    let (st, again) = call(&app, Method::POST, "/api/evaluations", Some(req)).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(again["report_id"], created["report_id"]);

    let (st, _) = call(&app, Method::POST, "/api/evaluations", Some(json!({"session_ids": ["s1"], "K": 5}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let (st, _) = call(&app, Method::POST, "/api/evaluations", Some(json!({"session_ids": ["zz"], "K": 3}))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn concurrent_writers_with_same_version_one_wins() {
    let (_d, app) = fixture();
    let uri = "/api/sessions/s1/labels/human_only";
    let tasks: Vec<_> = (0..8)
        .map(|i| {
            let app = app.clone();
            tokio::spawn(async move {
                let body = json!({"version": 0, "intervals": [{"start": i, "end": i}]});
                call(&app, Method::PUT, uri, Some(body)).await.0
            })
        })
        .collect();
    let mut ok = 0;
    for t in tasks {
        match t.await.unwrap() {
            StatusCode::OK => ok += 1,
            StatusCode::CONFLICT => {}
            other => panic!("unexpected {other}"),
        }
    }
    assert_eq!(ok, 1);
    let (_, got) = call(&app, Method::GET, uri, None).await;
    assert_eq!(got["version"], 1);
}
