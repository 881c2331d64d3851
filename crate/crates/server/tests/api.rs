use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use hrnv_core::io::parse_peaks;
use hrnv_core::synth::EcgSynth;
use hrnv_server::{router, AppState};

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

fn ecg_text(duration_s: f64, seed: u64) -> (String, Vec<f64>) {
    let ecg = EcgSynth {
        duration_s,
        heart_rate_bpm: 70.0,
        jitter_ms: 30.0,
        snr_db: Some(30.0),
        seed,
        ..EcgSynth::default()
    }
    .generate("x");
    let text = ecg.record.samples.iter().map(|v| format!("{v}\n")).collect();
    (text, ecg.record.samples)
}

async fn loaded_app() -> (Router, Vec<f64>) {
    let app = router(AppState::new());
    let (content, samples) = ecg_text(300.0, 4);
    let (status, body) = call(
        &app,
        Method::POST,
        "/api/records",
        Some(json!({"name": "Demo_r1.txt", "kind": "ecg", "fs": 128.0, "prefix": "Demo_", "postfix": ".txt", "content": content})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["record_id"], "r1");
    (app, samples)
}

fn peaks_of(v: &Value) -> Vec<u64> {
    v["peaks"].as_array().unwrap().iter().map(|p| p.as_u64().unwrap()).collect()
}

#[tokio::test]
async fn upload_list_and_duplicate() {
    let (app, _) = loaded_app().await;
    let (status, list) = call(&app, Method::GET, "/api/records", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list[0]["record_id"], "r1");
    assert_eq!(list[0]["length"], 300 * 128);
    assert_eq!(list[0]["peak_count"], Value::Null);

    let (content, _) = ecg_text(10.0, 1);
    let dup = json!({"name": "Demo_r1.txt", "kind": "ecg", "fs": 128.0, "prefix": "Demo_", "postfix": ".txt", "content": content});
    let (status, _) = call(&app, Method::POST, "/api/records", Some(dup)).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn validation_errors_name_the_field() {
    let app = router(AppState::new());
    let (status, body) = call(
        &app,
        Method::POST,
        "/api/records",
        Some(json!({"name": "a.txt", "kind": "ecg", "content": "1\n2\n"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "validation_error");
    assert_eq!(body["fields"][0]["field"], "content");

    let (status, body) = call(&app, Method::POST, "/api/records", Some(json!({"name": 3}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["fields"][0]["field"], "body");

    let (status, body) = call(&app, Method::GET, "/api/records/nope/peaks", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not_found");
}

#[tokio::test]
async fn decimated_signal_keeps_extremes() {
    let (app, samples) = loaded_app().await;
    let (status, w) = call(&app, Method::GET, "/api/records/r1/signal?start=0&end=38400&max_points=1000", None).await;
    assert_eq!(status, StatusCode::OK);
    let values: Vec<f64> = w["values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(values.len() <= 2000);
    assert_eq!(w["decimated"], true);
    let max = samples[..38400].iter().cloned().fold(f64::MIN, f64::max);
    let min = samples[..38400].iter().cloned().fold(f64::MAX, f64::min);
    assert_eq!(values.iter().cloned().fold(f64::MIN, f64::max), max);
    assert_eq!(values.iter().cloned().fold(f64::MAX, f64::min), min);

    let (_, raw) = call(&app, Method::GET, "/api/records/r1/signal?start=1000&end=1256&max_points=1000", None).await;
    assert_eq!(raw["decimated"], false);
    assert_eq!(raw["values"].as_array().unwrap().len(), 256);

    let (status, _) = call(&app, Method::GET, "/api/records/r1/signal?start=10&end=5", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn edit_cycle_with_version_checks() {
    let (app, _) = loaded_app().await;
    let (status, _) = call(&app, Method::GET, "/api/records/r1/peaks", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, det) = call(&app, Method::POST, "/api/records/r1/detect", Some(json!({"baseline_remove": true}))).await;
    assert_eq!(status, StatusCode::OK, "{det}");
    assert_eq!(det["version"], 0);
    let original = peaks_of(&det);
    assert!((340..=360).contains(&original.len()), "{} peaks", original.len());

    let (_, before) = call(&app, Method::POST, "/api/records/r1/analyze", Some(json!({}))).await;
    let rmssd_before = before[0]["time"]["rmssd_ms"].as_f64().unwrap();
    let (_, cached) = call(&app, Method::POST, "/api/records/r1/analyze", Some(json!({}))).await;
    assert_eq!(before, cached);

    // stale version leaves peaks untouched
    let stale = json!({"remove": [original[10]], "expected_version": 5});
    let (status, body) = call(&app, Method::PATCH, "/api/records/r1/peaks", Some(stale)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["current_version"], 0);
    let (_, now) = call(&app, Method::GET, "/api/records/r1/peaks", None).await;
    assert_eq!(peaks_of(&now), original);

    let edit = json!({"remove": [original[10]], "expected_version": 0});
    let (status, edited) = call(&app, Method::PATCH, "/api/records/r1/peaks", Some(edit)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(edited["version"], 1);
    assert_eq!(peaks_of(&edited).len(), original.len() - 1);

    let (_, after) = call(&app, Method::POST, "/api/records/r1/analyze", Some(json!({}))).await;
    let rmssd_after = after[0]["time"]["rmssd_ms"].as_f64().unwrap();
    assert_ne!(rmssd_before, rmssd_after);

    // remove + add in one commit: count unchanged, version bumped
    let edit = json!({"remove": [original[20]], "add": [original[10]], "expected_version": 1});
    let (status, edited) = call(&app, Method::PATCH, "/api/records/r1/peaks", Some(edit)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(edited["version"], 2);
    assert_eq!(peaks_of(&edited).len(), original.len() - 1);

    let bad = json!({"add": [999_999_999], "expected_version": 2});
    let (status, _) = call(&app, Method::PATCH, "/api/records/r1/peaks", Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn sequential_patches_compose() {
    let (app, _) = loaded_app().await;
    let (_, det) = call(&app, Method::POST, "/api/records/r1/detect", Some(json!({}))).await;
    let mut expected = peaks_of(&det);
    for (v, idx) in [3usize, 50, 100, 7].into_iter().enumerate() {
        let target = expected[idx];
        let edit = json!({"remove": [target], "expected_version": v});
        let (status, _) = call(&app, Method::PATCH, "/api/records/r1/peaks", Some(edit)).await;
        assert_eq!(status, StatusCode::OK);
        expected.retain(|p| *p != target);
    }
    let (_, now) = call(&app, Method::GET, "/api/records/r1/peaks", None).await;
    assert_eq!(peaks_of(&now), expected);
    assert_eq!(now["version"], 4);
}

#[tokio::test]
async fn export_matches_peaks_file_schema() {
    let (app, _) = loaded_app().await;
    let (_, det) = call(&app, Method::POST, "/api/records/r1/detect", Some(json!({"segment": {"start": 1280, "end": 20000}}))).await;
    let (status, text) = call(&app, Method::GET, "/api/records/r1/export/peaks", None).await;
    assert_eq!(status, StatusCode::OK);
    let parsed = parse_peaks(text.as_str().unwrap(), "x").unwrap();
    assert_eq!(parsed.record_id, "r1");
    assert_eq!(parsed.segment, Some(1280..20000));
    assert_eq!(parsed.peaks.iter().map(|&p| p as u64).collect::<Vec<_>>(), peaks_of(&det));
    assert!(parsed.peaks.iter().all(|&p| (1280..20000).contains(&p)));
}

#[tokio::test]
async fn rri_records_analyse_without_a_signal() {
    let app = router(AppState::new());
    let content: String = (0..300).map(|i| format!("{}\n", 0.8 + 0.01 * ((i % 7) as f64))).collect();
    let (status, _) = call(
        &app,
        Method::POST,
        "/api/records",
        Some(json!({"name": "s1.txt", "kind": "rri", "content": content})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, reports) = call(
        &app,
        Method::POST,
        "/api/records/s1.txt/analyze",
        Some(json!({"plan": {"mode": "all", "n": 2}})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{reports}");
    let plans: Vec<(u64, u64)> = reports
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["n"].as_u64().unwrap(), r["m"].as_u64().unwrap()))
        .collect();
    assert_eq!(plans, vec![(1, 1), (2, 1), (2, 2)]);
    let (status, _) = call(&app, Method::GET, "/api/records/s1.txt/signal", None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}
