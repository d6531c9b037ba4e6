use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use routegen::checkpoint::{self, TrainingMeta};
use routegen::data::{synth_corpus, Corpus};
use routegen::generation::{validate_against, RuleSet};
use routegen::service::{router, ApiSession, LoadedModel};
use routegen::vae::{train, Architecture, TrainConfig, VaeModel};

struct Fixture {
    corpus: Corpus,
    loaded: LoadedModel,
}

/// A model overfit on 16 synthetic problems, saved and reloaded through a
/// checkpoint so the sidecar is realistic.
fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let corpus = synth_corpus(31, 16);
        let mut model = VaeModel::new(Architecture::default(), 31);
        let mut cfg = TrainConfig { epochs: 400, batch_size: 4, seed: 31, ..Default::default() };
        cfg.adam.learning_rate = 3e-3;
        train(&mut model, &corpus, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.ckpt");
        let meta = TrainingMeta { train_config: Some(cfg), ..Default::default() };
        checkpoint::save(&model, &path, &meta).unwrap();
        let (model, sidecar) = checkpoint::load(&path).unwrap();
        Fixture { corpus, loaded: LoadedModel { model, sidecar } }
    })
}

fn app() -> Router {
    let f = fixture();
    router(
        ApiSession { model: Some(f.loaded.clone()), corpus: Some(f.corpus.clone()), rules: RuleSet::default() },
        None,
    )
}

fn empty_app() -> Router {
    router(ApiSession::default(), None)
}

async fn call_raw(app: &Router, method: Method, path: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let request = Request::builder()
        .method(method)
        .uri(path)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_owned()))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    (status, response.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn post(app: &Router, path: &str, body: Value) -> (StatusCode, Value) {
    let (status, bytes) = call_raw(app, Method::POST, path, &body.to_string()).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn labels(v: &Value) -> Vec<String> {
    v["holds"].as_array().unwrap().iter().map(|h| h["pos"].as_str().unwrap().to_owned()).collect()
}

fn without_name(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("name");
    v
}

#[tokio::test]
async fn sample_is_deterministic_for_a_seed() {
    let app = app();
    let body = json!({"count": 3, "seed": 9}).to_string();
    let (status, first) = call_raw(&app, Method::POST, "/sample", &body).await;
    assert_eq!(status, StatusCode::OK);
    let (_, second) = call_raw(&app, Method::POST, "/sample", &body).await;
    assert_eq!(first, second);

    let v: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["seed"], 9);
    let candidates = v["candidates"].as_array().unwrap();
    assert_eq!(candidates.len(), 3);
    for c in candidates {
        assert_eq!(c["latent"].as_array().unwrap().len(), 16);
        assert_eq!(c["probs"].as_array().unwrap().len(), 198);
        assert!(!labels(c).is_empty());
        assert!(c["report"]["valid"].is_boolean());
    }
}

#[tokio::test]
async fn sample_without_seed_echoes_the_chosen_one() {
    let app = app();
    let (status, v) = post(&app, "/sample", json!({})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["candidates"].as_array().unwrap().len(), 1);
    let seed = v["seed"].as_u64().expect("seed echoed");
    let (_, replay) = post(&app, "/sample", json!({"seed": seed})).await;
    assert_eq!(replay, v);
}

#[tokio::test]
async fn sample_rejects_zero_count() {
    let (status, v) = post(&app(), "/sample", json!({"count": 0})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("count"));
}

#[tokio::test]
async fn model_endpoints_need_a_model() {
    let app = empty_app();
    let latent = vec![0.0; 16];
    for (path, body) in [
        ("/sample", json!({})),
        ("/decode", json!({"latent": latent})),
        ("/encode", json!({"holds": ["A1"]})),
        ("/interpolate", json!({"a": latent, "b": latent, "steps": 2})),
    ] {
        let (status, v) = post(&app, path, body).await;
        assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{path}");
        assert!(v["error"].is_string());
    }
    let (status, _) = call_raw(&app, Method::GET, "/model/info", "").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    let (status, _) = post(
        &app,
        "/validate",
        json!({"holds": [{"pos": "A1", "role": "start"}, {"pos": "A18", "role": "finish"}]}),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn decode_checks_latent_length_and_values() {
    let app = app();
    let (status, v) = post(&app, "/decode", json!({"latent": vec![0.0; 15]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("16"), "{v}");

    let mut huge = vec!["0".to_owned(); 16];
    huge[3] = "1e999".into();
    let body = format!("{{\"latent\": [{}]}}", huge.join(","));
    let (status, _) = call_raw(&app, Method::POST, "/decode", &body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, _) = post(&app, "/decode", json!({"latent": vec![0.0; 16], "k": 0})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn decode_replays_identically() {
    let app = app();
    let body = json!({"latent": (0..16).map(|i| f64::from(i) * 0.1 - 0.8).collect::<Vec<_>>()}).to_string();
    let (status, first) = call_raw(&app, Method::POST, "/decode", &body).await;
    assert_eq!(status, StatusCode::OK);
    let (_, second) = call_raw(&app, Method::POST, "/decode", &body).await;
    assert_eq!(first, second);
}

#[tokio::test]
async fn encode_examples() {
    let app = app();
    let (status, v) = post(&app, "/encode", json!({"holds": ["A1", "K18"]})).await;
    assert_eq!(status, StatusCode::OK);
    for key in ["mu", "logvar"] {
        let values = v[key].as_array().unwrap();
        assert_eq!(values.len(), 16);
        assert!(values.iter().all(|x| x.as_f64().unwrap().is_finite()));
    }

    let (status, v) = post(&app, "/encode", json!({"holds": ["Z9"]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("Z9"));
    let (status, _) = post(&app, "/encode", json!({"holds": []})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = post(&app, "/encode", json!({"holds": ["A1", "A1"]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn encode_then_decode_reproduces_training_problems() {
    let app = app();
    let corpus = &fixture().corpus;
    let mut exact = 0;
    for p in corpus.iter() {
        let wanted: Vec<String> = p.holds().iter().map(|h| h.pos.to_string()).collect();
        let (_, enc) = post(&app, "/encode", json!({ "holds": wanted })).await;
        let (status, dec) = post(&app, "/decode", json!({"latent": enc["mu"], "k": p.len()})).await;
        assert_eq!(status, StatusCode::OK);
        let mut got = labels(&dec);
        let mut wanted = wanted.clone();
        got.sort();
        wanted.sort();
        exact += usize::from(got == wanted);
    }
    assert!(exact >= 15, "only {exact}/16 hold sets reproduced");
}

#[tokio::test]
async fn interpolate_examples() {
    let app = app();
    let a: Vec<f64> = (0..16).map(|i| f64::from(i % 3) - 1.0).collect();
    let b: Vec<f64> = (0..16).map(|i| 1.0 - f64::from(i % 5) * 0.5).collect();

    let (status, two) = post(&app, "/interpolate", json!({"a": a, "b": b, "steps": 2})).await;
    assert_eq!(status, StatusCode::OK);
    let two = two.as_array().unwrap();
    assert_eq!(two.len(), 2);
    let (_, da) = post(&app, "/decode", json!({ "latent": a })).await;
    let (_, db) = post(&app, "/decode", json!({ "latent": b })).await;
    assert_eq!(without_name(two[0].clone()), without_name(da));
    assert_eq!(without_name(two[1].clone()), without_name(db));

    let (_, five) = post(&app, "/interpolate", json!({"a": a, "b": b, "steps": 5})).await;
    let five = five.as_array().unwrap();
    assert_eq!(five.len(), 5);
    let mid: Vec<f64> = five[2]["latent"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    for (m, (x, y)) in mid.iter().zip(a.iter().zip(&b)) {
        assert!((m - 0.5 * (x + y)).abs() < 1e-12);
    }

    let (_, same) = post(&app, "/interpolate", json!({"a": a, "b": a, "steps": 4})).await;
    let same: Vec<Value> = same.as_array().unwrap().iter().cloned().map(without_name).collect();
    assert!(same.windows(2).all(|w| w[0] == w[1]));

    let (status, v) = post(&app, "/interpolate", json!({"a": a, "b": b, "steps": 1})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("steps"));
}

#[tokio::test]
async fn validate_matches_the_library() {
    let app = app();
    let f = fixture();
    let p = &f.corpus.problems[0];
    let (status, v) = post(&app, "/validate", json!({"name": p.name(), "holds": p.holds()})).await;
    assert_eq!(status, StatusCode::OK);
    let expected = validate_against(p, &RuleSet::default(), Some(&f.corpus));
    assert_eq!(v, serde_json::to_value(&expected).unwrap());
    assert_eq!(v["duplicate_of"], p.name());

    let (status, _) = post(&app, "/validate", json!({"holds": [{"pos": "L1", "role": "start"}]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn model_info_reports_checkpoint() {
    let (status, bytes) = call_raw(&app(), Method::GET, "/model/info", "").await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    let f = fixture();
    assert_eq!(v["architecture"]["latent_dim"], 16);
    assert_eq!(v["parameter_count"], Architecture::default().parameter_count());
    assert_eq!(v["checkpoint_sha256"], f.loaded.sidecar.checkpoint_sha256);
    assert_eq!(v["train_config"]["batch_size"], 4);
    assert_eq!(v["corpus_size"], 16);
}

#[tokio::test]
async fn malformed_json_is_a_400_with_an_error_body() {
    let (status, bytes) = call_raw(&app(), Method::POST, "/decode", "{not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_slice(&bytes).unwrap();
    assert!(v["error"].is_string());
}

#[tokio::test]
async fn cors_preflight_allows_the_ui() {
    let app = router(ApiSession::default(), Some("http://localhost:5173"));
    let request = Request::builder()
        .method(Method::OPTIONS)
        .uri("/decode")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .header(header::ACCESS_CONTROL_REQUEST_HEADERS, "content-type")
        .body(Body::empty())
        .unwrap();
    let response = app.oneshot(request).await.unwrap();
    assert_eq!(
        response.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(),
        "http://localhost:5173"
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_requests_see_the_same_model() {
    let app = app();
    let body = json!({"count": 2, "seed": 77}).to_string();
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let (app, body) = (app.clone(), body.clone());
            tokio::spawn(async move { call_raw(&app, Method::POST, "/sample", &body).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for t in tasks {
        let (status, bytes) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(bytes);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}
