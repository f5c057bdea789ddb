use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use std::path::Path;
use std::sync::Arc;
use tower::ServiceExt;

use hairsketch::color::ColorDatabase;
use hairsketch::matte::Matte;
use hairsketch::nn::{CheckpointKind, DType, NetConfig, S2INet, S2MNet};
use hairsketch::raster::{decode_rgb_png, Grid};
use hairsketch::sketch::{Sketch, Stroke};
use hairsketch_server::{router, AppState, SessionConfig};

const SIZE: usize = 64;

fn fixtures(dir: &Path) -> SessionConfig {
    let cfg = NetConfig::small(SIZE, 4);
    let dtype = DType::F32;
    S2MNet::new(cfg.clone(), 1, dtype)
        .unwrap()
        .to_checkpoint(0)
        .save(dir.join("s2m.st"))
        .unwrap();
    let s2i = S2INet::new(cfg, 2, dtype).unwrap();
    s2i.to_checkpoint(CheckpointKind::S2iUnbraided, 0)
        .unwrap()
        .save(dir.join("u.st"))
        .unwrap();
    s2i.to_checkpoint(CheckpointKind::S2iBraided, 0)
        .unwrap()
        .save(dir.join("b.st"))
        .unwrap();
    ColorDatabase::from_colors([[0.5, 0.3, 0.1], [0.2, 0.2, 0.2], [0.9, 0.8, 0.5]])
        .save(dir.join("colors.jsonl"))
        .unwrap();
    SessionConfig {
        s2m: Some(dir.join("s2m.st")),
        s2i_unbraided: Some(dir.join("u.st")),
        s2i_braided: Some(dir.join("b.st")),
        color_db: Some(dir.join("colors.jsonl")),
        canvas: SIZE,
        ..SessionConfig::default()
    }
}

fn app(config: SessionConfig) -> axum::Router {
    router(Arc::new(AppState::load(config).unwrap()))
}

fn hair_sketch() -> Sketch {
    let mut s = Sketch::new(SIZE, SIZE);
    s.strokes.push(Stroke::hair(
        0,
        vec![[32.0, 10.0], [30.0, 50.0]],
        2.0,
        [0.6, 0.4, 0.2],
    ));
    s.strokes
        .push(Stroke::non_hair(1, vec![[5.0, 60.0], [60.0, 60.0]], 2.0));
    s
}

async fn call(
    app: &axum::Router,
    method: &str,
    uri: &str,
    body: Option<String>,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (
        status,
        serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    )
}

#[tokio::test]
async fn health_and_config_report_readiness() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(fixtures(dir.path()));
    let (status, body) = call(&app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    let (_, cfg) = call(&app, "GET", "/config", None).await;
    assert_eq!(cfg["canvas"], SIZE);

    let bare =
        hairsketch_server::router(Arc::new(AppState::load(SessionConfig::default()).unwrap()));
    let (_, body) = call(&bare, "GET", "/health", None).await;
    assert_eq!(body["status"], "degraded");
}

#[test]
fn startup_fails_on_missing_artifacts() {
    let cfg = SessionConfig {
        s2m: Some("/nonexistent/s2m.st".into()),
        ..SessionConfig::default()
    };
    assert!(AppState::load(cfg).is_err());
}

#[tokio::test]
async fn matte_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(fixtures(dir.path()));
    let body = hair_sketch().to_json().unwrap();
    let (status, a) = call(&app, "POST", "/matte", Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let (_, b) = call(&app, "POST", "/matte", Some(body)).await;
    assert_eq!(a["matte"], b["matte"]);
    let matte = Matte::from_png(&B64.decode(a["matte"].as_str().unwrap()).unwrap()).unwrap();
    assert_eq!(matte.dims(), (SIZE, SIZE));
    assert!(a["latency_ms"].as_f64().unwrap() >= 0.0);
}

#[tokio::test]
async fn matte_rejects_sketches_without_hair() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(fixtures(dir.path()));
    let mut s = Sketch::new(SIZE, SIZE);
    s.strokes
        .push(Stroke::non_hair(0, vec![[5.0, 5.0], [50.0, 5.0]], 2.0));
    let (status, body) = call(&app, "POST", "/matte", Some(s.to_json().unwrap())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "no_hair_strokes");
    let (status, _) = call(&app, "POST", "/matte", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn matte_needs_a_model() {
    let app = app(SessionConfig {
        canvas: SIZE,
        ..SessionConfig::default()
    });
    let (status, _) = call(
        &app,
        "POST",
        "/matte",
        Some(hair_sketch().to_json().unwrap()),
    )
    .await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn image_contract_determinism_and_passthrough() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(fixtures(dir.path()));
    let req = json!({ "sketch": hair_sketch(), "style": "unbraided" }).to_string();
    let (status, a) = call(&app, "POST", "/image", Some(req.clone())).await;
    assert_eq!(status, StatusCode::OK, "{a}");
    let img = decode_rgb_png(&B64.decode(a["image"].as_str().unwrap()).unwrap()).unwrap();
    assert_eq!(img.dims(), (SIZE, SIZE));
    let (_, b) = call(&app, "POST", "/image", Some(req)).await;
    assert_eq!(a["image"], b["image"]);

    let supplied = Matte::from_mask(&Grid::from_fn(SIZE, SIZE, |y, _| y > 20))
        .to_png()
        .unwrap();
    let supplied = B64.encode(supplied);
    let req = json!({ "sketch": hair_sketch(), "matte": supplied, "freeze_matte": true, "style": "braided" });
    let (status, c) = call(&app, "POST", "/image", Some(req.to_string())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(c["matte"], supplied);
}

#[tokio::test]
async fn image_error_cases() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixtures(dir.path());
    cfg.s2i_braided = None;
    let app = app(cfg);
    let req = json!({ "sketch": hair_sketch(), "style": "braided" });
    let (status, _) = call(&app, "POST", "/image", Some(req.to_string())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let req = json!({ "sketch": hair_sketch(), "matte": "!!!", "freeze_matte": true });
    let (status, _) = call(&app, "POST", "/image", Some(req.to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let req = json!({ "sketch": hair_sketch(), "freeze_matte": true });
    let (status, _) = call(&app, "POST", "/image", Some(req.to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn braid_completion_returns_generated_strokes() {
    let app = app(SessionConfig::default());
    let left: Vec<[f32; 2]> = (0..=10).map(|i| [180.0, 60.0 + 40.0 * i as f32]).collect();
    let right: Vec<[f32; 2]> = left.iter().map(|p| [300.0, p[1]]).collect();
    let req = json!({
        "kind": "three_strand",
        "w": 1.5,
        "palette": [[0.3, 0.2, 0.1], [0.5, 0.35, 0.2], [0.7, 0.5, 0.3]],
        "boundary0": left,
        "boundary1": right,
    });
    let (status, body) = call(&app, "POST", "/autocomplete/braid", Some(req.to_string())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let sketch: Sketch = serde_json::from_value(body).unwrap();
    assert!(sketch.strokes.len() >= 3 * 2);
    assert!(sketch.strokes.iter().all(|s| s.generated));

    let crossing = json!({
        "kind": "rope", "w": 1.0, "palette": [[0.1, 0.1, 0.1], [0.2, 0.2, 0.2]],
        "boundary0": [[100.0, 50.0], [300.0, 400.0]],
        "boundary1": [[300.0, 50.0], [100.0, 400.0]],
    });
    let (status, body) = call(
        &app,
        "POST",
        "/autocomplete/braid",
        Some(crossing.to_string()),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "degenerate_braid");
}

#[tokio::test]
async fn unbraided_completion_keeps_dense_sketches() {
    let app = app(SessionConfig::default());
    let mut sketch = Sketch::new(40, 40);
    sketch.strokes.push(Stroke::hair(
        0,
        vec![[20.0, 5.0], [20.0, 35.0]],
        4.0,
        [0.5; 3],
    ));
    let matte = Matte::from_mask(&Grid::from_fn(40, 40, |y, x| {
        (y as f64 - 20.0).powi(2) + (x as f64 - 20.0).powi(2) <= 64.0
    }));
    let req = json!({ "sketch": sketch, "matte": B64.encode(matte.to_png().unwrap()) });
    let (status, body) = call(
        &app,
        "POST",
        "/autocomplete/unbraided",
        Some(req.to_string()),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let back: Sketch = serde_json::from_value(body).unwrap();
    assert_eq!(back, sketch);
}

#[tokio::test]
async fn nearest_colors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(fixtures(dir.path()));
    let (status, body) = call(&app, "GET", "/colors/nearest?rgb=333333&k=1", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["colors"][0]["rgb"], "333333");
    assert_eq!(body["colors"].as_array().unwrap().len(), 1);
    let (_, all) = call(&app, "GET", "/colors/nearest?rgb=333333&seed=4", None).await;
    let listed: Vec<&str> = all["colors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["rgb"].as_str().unwrap())
        .collect();
    assert!(listed.contains(&all["snap"].as_str().unwrap()));
    let (status, _) = call(&app, "GET", "/colors/nearest?rgb=zzz", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}
