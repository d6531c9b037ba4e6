//! JSON-over-HTTP access to a frozen model, used by the browser studio.
//!
//! | method | path           | body                                  |
//! |--------|----------------|---------------------------------------|
//! | POST   | `/sample`      | `{"seed"?: u64, "count"?: n, "k"?: n}` |
//! | POST   | `/decode`      | `{"latent": [..], "k"?: n}`            |
//! | POST   | `/encode`      | `{"holds": ["A5", ...]}`               |
//! | POST   | `/interpolate` | `{"a": [..], "b": [..], "steps": n}`   |
//! | POST   | `/validate`    | `{"name"?: s, "holds": [{pos, role}]}` |
//! | GET    | `/model/info`  |                                       |
//!
//! The API is stateless: latent vectors travel in requests, and every
//! response is a function of the request, the model and the corpus. The one
//! exception is `/sample` without a seed, which picks one and echoes it.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::board::{parse_position, Hold, HoldRole, Problem};
use crate::checkpoint::Sidecar;
use crate::data::Corpus;
use crate::generation::{
    decode_candidate, generate_batch, validate_against, Candidate, GenConfig, KMode, RuleSet,
    ValidationReport,
};
use crate::vae::{Architecture, LatentVector, TrainConfig, VaeModel};

pub const MAX_SAMPLE_COUNT: usize = 500;
pub const MAX_INTERPOLATION_STEPS: usize = 256;

/// A model frozen for serving.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: VaeModel,
    pub sidecar: Sidecar,
}

/// Everything the handlers read. Immutable once the server starts.
#[derive(Debug, Clone, Default)]
pub struct ApiSession {
    pub model: Option<LoadedModel>,
    pub corpus: Option<Corpus>,
    pub rules: RuleSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub bind: IpAddr,
    pub port: u16,
    /// Origin allowed by CORS; any origin when `None`.
    pub allowed_origin: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { bind: IpAddr::V4(Ipv4Addr::LOCALHOST), port: 8080, allowed_origin: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, message: message.into() }
    }

    fn no_model() -> Self {
        Self { status: StatusCode::SERVICE_UNAVAILABLE, message: "no model loaded".into() }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::bad_request(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type Shared = Arc<ApiSession>;
type ApiResult<T> = Result<Json<T>, ApiError>;

impl ApiSession {
    fn loaded(&self) -> Result<&LoadedModel, ApiError> {
        self.model.as_ref().ok_or_else(ApiError::no_model)
    }

    fn latent(&self, values: Vec<f64>) -> Result<LatentVector, ApiError> {
        let expected = self.loaded()?.model.architecture().latent_dim;
        if values.len() != expected {
            return Err(ApiError::bad_request(format!(
                "latent must have exactly {expected} values, got {}",
                values.len()
            )));
        }
        LatentVector::new(values).map_err(|e| ApiError::bad_request(e.to_string()))
    }

    fn decode(&self, latent: LatentVector, name: String, k: Option<usize>) -> Result<Candidate, ApiError> {
        let model = &self.loaded()?.model;
        decode_candidate(model, latent, name, k_mode(k)?, &self.rules, self.corpus.as_ref())
            .map_err(|e| ApiError::bad_request(e.to_string()))
    }
}

fn k_mode(k: Option<usize>) -> Result<KMode, ApiError> {
    match k {
        None => Ok(KMode::ExpectedCount),
        Some(k) if (1..=crate::board::NUM_HOLDS).contains(&k) => Ok(KMode::Fixed(k)),
        Some(k) => Err(ApiError::bad_request(format!("k must be between 1 and 198, got {k}"))),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SampleRequest {
    pub seed: Option<u64>,
    pub count: Option<usize>,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub seed: u64,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodeRequest {
    pub latent: Vec<f64>,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodeRequest {
    pub holds: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub mu: LatentVector,
    pub logvar: LatentVector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterpolateRequest {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub steps: usize,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateRequest {
    pub name: Option<String>,
    pub holds: Vec<Hold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub architecture: Architecture,
    pub parameter_count: usize,
    pub train_config: Option<TrainConfig>,
    pub checkpoint_sha256: String,
    pub corpus_size: usize,
    pub rules: RuleSet,
}

async fn sample(
    State(s): State<Shared>,
    body: Result<Json<SampleRequest>, JsonRejection>,
) -> ApiResult<SampleResponse> {
    let Json(req) = body?;
    let model = &s.loaded()?.model;
    let count = req.count.unwrap_or(1);
    if !(1..=MAX_SAMPLE_COUNT).contains(&count) {
        return Err(ApiError::bad_request(format!("count must be between 1 and {MAX_SAMPLE_COUNT}")));
    }
    // 32-bit so the echoed seed survives a round trip through JavaScript numbers.
    let seed = req.seed.unwrap_or_else(|| u64::from(rand::random::<u32>()));
    let cfg = GenConfig { count, seed, k_mode: k_mode(req.k)?, rules: s.rules };
    let candidates = generate_batch(model, s.corpus.as_ref(), &cfg)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(SampleResponse { seed, candidates }))
}

async fn decode(
    State(s): State<Shared>,
    body: Result<Json<DecodeRequest>, JsonRejection>,
) -> ApiResult<Candidate> {
    let Json(req) = body?;
    let latent = s.latent(req.latent)?;
    s.decode(latent, "decoded".into(), req.k).map(Json)
}

async fn encode(
    State(s): State<Shared>,
    body: Result<Json<EncodeRequest>, JsonRejection>,
) -> ApiResult<EncodeResponse> {
    let Json(req) = body?;
    let model = &s.loaded()?.model;
    let holds = req
        .holds
        .iter()
        .map(|label| parse_position(label).map(|pos| Hold::new(pos, HoldRole::Mid)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let problem = Problem::new("encode", None, holds).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let (mu, logvar) = model.encode(&problem.to_vector());
    Ok(Json(EncodeResponse { mu, logvar }))
}

async fn interpolate(
    State(s): State<Shared>,
    body: Result<Json<InterpolateRequest>, JsonRejection>,
) -> ApiResult<Vec<Candidate>> {
    let Json(req) = body?;
    if !(2..=MAX_INTERPOLATION_STEPS).contains(&req.steps) {
        return Err(ApiError::bad_request(format!(
            "steps must be between 2 and {MAX_INTERPOLATION_STEPS}, got {}",
            req.steps
        )));
    }
    let a = s.latent(req.a)?;
    let b = s.latent(req.b)?;
    let last = (req.steps - 1) as f64;
    (0..req.steps)
        .map(|i| {
            let z = a.lerp(&b, i as f64 / last);
            s.decode(z, format!("interp-{i:03}"), req.k)
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Json)
}

async fn validate(
    State(s): State<Shared>,
    body: Result<Json<ValidateRequest>, JsonRejection>,
) -> ApiResult<ValidationReport> {
    let Json(req) = body?;
    let problem = Problem::new(req.name.unwrap_or_else(|| "candidate".into()), None, req.holds)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(validate_against(&problem, &s.rules, s.corpus.as_ref())))
}

async fn model_info(State(s): State<Shared>) -> ApiResult<ModelInfo> {
    let loaded = s.loaded()?;
    Ok(Json(ModelInfo {
        architecture: loaded.model.architecture(),
        parameter_count: loaded.sidecar.parameter_count,
        train_config: loaded.sidecar.train_config,
        checkpoint_sha256: loaded.sidecar.checkpoint_sha256.clone(),
        corpus_size: s.corpus.as_ref().map_or(0, Corpus::len),
        rules: s.rules,
    }))
}

pub fn router(session: ApiSession, allowed_origin: Option<&str>) -> Router {
    let origin = match allowed_origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([axum::http::header::CONTENT_TYPE]);
    Router::new()
        .route("/sample", post(sample))
        .route("/decode", post(decode))
        .route("/encode", post(encode))
        .route("/interpolate", post(interpolate))
        .route("/validate", post(validate))
        .route("/model/info", get(model_info))
        .layer(cors)
        .with_state(Arc::new(session))
}

/// Serves until Ctrl-C.
pub async fn serve(session: ApiSession, config: &ServerConfig) -> std::io::Result<()> {
    let addr = SocketAddr::new(config.bind, config.port);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(session, config.allowed_origin.as_deref()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
