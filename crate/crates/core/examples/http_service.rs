//! The HTTP API, driven in-process. With `--listen` the same router is served
//! on 127.0.0.1:8080 until Ctrl-C.
//!
//! ```text
//! cargo run --release --example http_service
//! cargo run --release --example http_service -- --listen
//! ```

use axum::body::Body;
use axum::http::{header, Method, Request};
use http_body_util::BodyExt;
use routegen::checkpoint::{self, TrainingMeta};
use routegen::data::synth_corpus;
use routegen::service::{router, serve, ApiSession, LoadedModel, ServerConfig};
use routegen::vae::{train, Architecture, TrainConfig, VaeModel};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: Method, path: &str, body: Value) -> Value {
    let request = Request::builder()
        .method(method)
        .uri(path)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    serde_json::from_slice(&bytes).unwrap()
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = synth_corpus(3, 200);
    let mut model = VaeModel::new(Architecture::default(), 3);
    let cfg = TrainConfig { epochs: 40, batch_size: 16, seed: 3, ..Default::default() };
    train(&mut model, &corpus, &cfg)?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("service.ckpt");
    checkpoint::save(&model, &path, &TrainingMeta { train_config: Some(cfg), ..Default::default() })?;
    let (model, sidecar) = checkpoint::load(&path)?;
    let session = ApiSession { model: Some(LoadedModel { model, sidecar }), corpus: Some(corpus), ..Default::default() };

    if std::env::args().any(|a| a == "--listen") {
        serve(session, &ServerConfig::default()).await?;
        return Ok(());
    }

    let app = router(session, None);
    let info = call(&app, Method::GET, "/model/info", json!(null)).await;
    println!("model/info: latent {} , sha256 {}", info["architecture"]["latent_dim"], info["checkpoint_sha256"]);

    let sample = call(&app, Method::POST, "/sample", json!({"count": 2, "seed": 9})).await;
    let first = &sample["candidates"][0];
    let holds: Vec<&str> = first["holds"].as_array().unwrap().iter().map(|h| h["pos"].as_str().unwrap()).collect();
    println!("sample seed {}: {} -> valid {}", sample["seed"], holds.join(" "), first["report"]["valid"]);

    let encoded = call(&app, Method::POST, "/encode", json!({"holds": holds})).await;
    let decoded = call(&app, Method::POST, "/decode", json!({"latent": encoded["mu"]})).await;
    println!("encode -> decode: {} holds", decoded["holds"].as_array().unwrap().len());

    let path = call(&app, Method::POST, "/interpolate", json!({"a": first["latent"], "b": encoded["mu"], "steps": 3})).await;
    println!("interpolate: {} candidates", path.as_array().unwrap().len());

    let bad = call(&app, Method::POST, "/decode", json!({"latent": [0.0, 1.0]})).await;
    println!("bad request: {}", bad["error"]);
    Ok(())
}
