//! Starts the service in-process with freshly initialized 64×64 networks and
//! a small color database, then calls every endpoint once.
//!
//! `cargo run -p hairsketch-server --example http_roundtrip`

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use std::sync::Arc;
use tower::ServiceExt;

use hairsketch::color::ColorDatabase;
use hairsketch::nn::{CheckpointKind, DType, NetConfig, S2INet, S2MNet};
use hairsketch::sketch::{Sketch, Stroke};
use hairsketch_server::{router, AppState, SessionConfig};

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> Value {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(
            body.map(|b| Body::from(b.to_string()))
                .unwrap_or_else(Body::empty),
        )
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value: Value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    println!("{method} {uri} -> {status}");
    value
}

fn shorten(mut v: Value) -> Value {
    for key in ["matte", "image"] {
        if let Some(s) = v.get(key).and_then(Value::as_str) {
            v[key] = json!(format!("<{} base64 chars>", s.len()));
        }
    }
    v
}

#[tokio::main]
async fn main() -> hairsketch::Result<()> {
    let dir = std::env::temp_dir().join("hairsketch_http_roundtrip");
    std::fs::create_dir_all(&dir)?;
    let cfg = NetConfig::small(64, 4);
    S2MNet::new(cfg.clone(), 1, DType::F32)?
        .to_checkpoint(0)
        .save(dir.join("s2m.safetensors"))?;
    S2INet::new(cfg, 2, DType::F32)?
        .to_checkpoint(CheckpointKind::S2iUnbraided, 0)?
        .save(dir.join("s2i.safetensors"))?;
    ColorDatabase::from_colors([[0.35, 0.22, 0.12], [0.1, 0.08, 0.07], [0.85, 0.7, 0.45]])
        .save(dir.join("colors.jsonl"))?;

    let state = AppState::load(SessionConfig {
        s2m: Some(dir.join("s2m.safetensors")),
        s2i_unbraided: Some(dir.join("s2i.safetensors")),
        color_db: Some(dir.join("colors.jsonl")),
        canvas: 64,
        ..SessionConfig::default()
    })?;
    let app = router(Arc::new(state));

    let mut sketch = Sketch::new(64, 64);
    sketch.strokes.push(Stroke::hair(
        0,
        vec![[32.0, 8.0], [28.0, 40.0]],
        3.0,
        [0.35, 0.22, 0.12],
    ));
    sketch
        .strokes
        .push(Stroke::non_hair(1, vec![[4.0, 58.0], [60.0, 58.0]], 2.0));

    println!("{}", call(&app, "GET", "/health", None).await);
    let matte = call(&app, "POST", "/matte", Some(serde_json::to_value(&sketch)?)).await;
    println!("{}", shorten(matte.clone()));
    let image = call(
        &app,
        "POST",
        "/image",
        Some(json!({ "sketch": sketch, "matte": matte["matte"], "freeze_matte": true })),
    )
    .await;
    println!("{}", shorten(image));
    let braided = call(
        &app,
        "POST",
        "/image",
        Some(json!({ "sketch": sketch, "style": "braided" })),
    )
    .await;
    println!("{braided}");
    let braid = call(
        &app,
        "POST",
        "/autocomplete/braid",
        Some(json!({
            "kind": "three_strand", "w": 1.0, "canvas": [64, 64],
            "palette": [[0.3, 0.2, 0.1], [0.4, 0.3, 0.2], [0.5, 0.4, 0.3]],
            "boundary0": [[20, 4], [20, 60]], "boundary1": [[44, 4], [44, 60]],
        })),
    )
    .await;
    println!(
        "braid strokes: {}",
        braid["strokes"].as_array().map_or(0, Vec::len)
    );
    println!(
        "{}",
        call(&app, "GET", "/colors/nearest?rgb=5a3a20&k=2&seed=1", None).await
    );
    Ok(())
}
