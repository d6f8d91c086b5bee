//! HTTP preview service: one loaded model, three endpoints.
//!
//! * `POST /generate` – questions for a draft post, one group or side by side
//! * `GET /groups` – the category/value catalog
//! * `GET /health` – readiness and model version

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use socq_core::{GroupCategory, GroupLabel, GroupValue};
use socq_model::{attention_ratio, checkpoint, QuestionModel, TokenAttention, Variant};

pub const ENV_CHECKPOINT: &str = "SOCQ_CHECKPOINT";
pub const ENV_PORT: &str = "SOCQ_PORT";
pub const DEFAULT_PORT: u16 = 8080;

/// What the service needs from a model. Implementations must be read-only.
pub trait Backend: Send + Sync {
    fn variant(&self) -> Variant;
    fn version(&self) -> String;
    /// Returns the question and whether the post was degenerate (no tokens).
    fn generate(&self, post_text: &str, group: &GroupLabel) -> anyhow::Result<(String, bool)>;
    /// Per-token attention contrast, when the model supports it.
    fn attention(&self, post_text: &str, category: GroupCategory) -> anyhow::Result<Option<Vec<TokenAttention>>>;
}

pub struct ModelBackend {
    model: QuestionModel,
    version: String,
}

impl ModelBackend {
    pub fn load(dir: &std::path::Path) -> anyhow::Result<Self> {
        let (model, _) = checkpoint::load(dir)?;
        let version = checkpoint::version(dir)?;
        Ok(ModelBackend { model, version })
    }
}

impl Backend for ModelBackend {
    fn variant(&self) -> Variant {
        self.model.cfg.variant
    }

    fn version(&self) -> String {
        self.version.clone()
    }

    fn generate(&self, post_text: &str, group: &GroupLabel) -> anyhow::Result<(String, bool)> {
        let g = self.model.generate_full(post_text, Some(group), None)?;
        Ok((g.text, g.degenerate))
    }

    fn attention(&self, post_text: &str, category: GroupCategory) -> anyhow::Result<Option<Vec<TokenAttention>>> {
        if self.model.cfg.variant != Variant::SocialToken {
            return Ok(None);
        }
        Ok(Some(attention_ratio(&self.model, post_text, category)?))
    }
}

#[derive(Clone, Default)]
pub struct AppState {
    backend: Arc<OnceLock<Arc<dyn Backend>>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs the model; later calls are ignored.
    pub fn install(&self, backend: Arc<dyn Backend>) -> bool {
        self.backend.set(backend).is_ok()
    }

    pub fn backend(&self) -> Option<Arc<dyn Backend>> {
        self.backend.get().cloned()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Single,
    Compare,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub post_text: String,
    #[serde(default)]
    pub subreddit: String,
    pub category: String,
    #[serde(default)]
    pub group_value: Option<String>,
    #[serde(default)]
    pub variant: Option<String>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub attention: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQuestion {
    pub text: String,
    pub group_value: GroupValue,
}

/// Parallel arrays, one entry per post token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionArrays {
    pub group_1: GroupValue,
    pub group_2: GroupValue,
    pub token: Vec<String>,
    pub score_g1: Vec<f64>,
    pub score_g2: Vec<f64>,
    pub ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub questions: Vec<GeneratedQuestion>,
    pub attention: Option<AttentionArrays>,
    pub model_version: String,
    pub variant: Variant,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub category: GroupCategory,
    pub values: Vec<GroupValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_version: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, message: message.into() }
    }

    fn unavailable() -> Self {
        ApiError { status: StatusCode::SERVICE_UNAVAILABLE, message: "model not loaded".into() }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

pub fn catalog() -> Vec<CatalogEntry> {
    GroupCategory::ALL
        .iter()
        .map(|c| CatalogEntry { category: *c, values: c.values().to_vec() })
        .collect()
}

/// Validated request: the groups to generate for.
fn resolve(req: &GenerateRequest, loaded: Variant) -> Result<(GroupCategory, Vec<GroupLabel>), ApiError> {
    if req.post_text.trim().is_empty() {
        return Err(ApiError::bad_request("post_text must be non-empty"));
    }
    let category: GroupCategory = req.category.parse().map_err(|e| ApiError::bad_request(format!("{e}")))?;
    if let Some(v) = &req.variant {
        let v: Variant = v.parse().map_err(|e| ApiError::bad_request(format!("{e}")))?;
        if v != loaded {
            return Err(ApiError::bad_request(format!("this service runs {loaded}, not {v}")));
        }
    }
    let labels = match req.mode {
        Mode::Compare => category
            .pair()
            .iter()
            .map(|v| GroupLabel::new(category, *v))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ApiError::bad_request(e.to_string()))?,
        Mode::Single => {
            let value = match &req.group_value {
                Some(v) => v.parse().map_err(|e| ApiError::bad_request(format!("{e}")))?,
                None => GroupValue::UNK,
            };
            vec![GroupLabel::new(category, value).map_err(|e| ApiError::bad_request(e.to_string()))?]
        }
    };
    Ok((category, labels))
}

fn run_generate(backend: &dyn Backend, req: &GenerateRequest) -> Result<GenerateResponse, ApiError> {
    let (category, labels) = resolve(req, backend.variant())?;
    let mut questions = Vec::with_capacity(labels.len());
    let mut degenerate = false;
    for label in &labels {
        let (text, deg) = backend.generate(&req.post_text, label).map_err(ApiError::internal)?;
        degenerate |= deg;
        questions.push(GeneratedQuestion { text, group_value: label.value() });
    }
    let attention = if req.attention {
        backend.attention(&req.post_text, category).map_err(ApiError::internal)?.map(|scores| {
            let [g1, g2] = category.pair();
            AttentionArrays {
                group_1: g1,
                group_2: g2,
                token: scores.iter().map(|s| s.token.clone()).collect(),
                score_g1: scores.iter().map(|s| s.score_g1).collect(),
                score_g2: scores.iter().map(|s| s.score_g2).collect(),
                ratio: scores.iter().map(|s| s.ratio).collect(),
            }
        })
    } else {
        None
    };
    Ok(GenerateResponse { questions, attention, model_version: backend.version(), variant: backend.variant(), degenerate })
}

async fn generate(State(state): State<AppState>, Json(req): Json<GenerateRequest>) -> Result<Json<GenerateResponse>, ApiError> {
    let backend = state.backend().ok_or_else(ApiError::unavailable)?;
    let resp = tokio::task::spawn_blocking(move || run_generate(backend.as_ref(), &req))
        .await
        .map_err(ApiError::internal)??;
    Ok(Json(resp))
}

async fn groups() -> Json<Vec<CatalogEntry>> {
    Json(catalog())
}

async fn health(State(state): State<AppState>) -> (StatusCode, Json<Health>) {
    match state.backend() {
        Some(b) => (
            StatusCode::OK,
            Json(Health { status: "ready".into(), model_version: Some(b.version()), variant: Some(b.variant()) }),
        ),
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(Health { status: "not-ready".into(), model_version: None, variant: None })),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/generate", post(generate))
        .route("/groups", get(groups))
        .route("/health", get(health))
        .with_state(state)
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub checkpoint: PathBuf,
    pub addr: SocketAddr,
}

/// Binds first and loads the checkpoint in the background, so `/health`
/// answers not-ready until the model is in memory.
pub async fn serve(cfg: ServeConfig) -> anyhow::Result<()> {
    let state = AppState::new();
    let listener = tokio::net::TcpListener::bind(cfg.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    let loader = state.clone();
    let dir = cfg.checkpoint.clone();
    tokio::task::spawn_blocking(move || match ModelBackend::load(&dir) {
        Ok(b) => {
            log::info!("loaded {} ({})", dir.display(), b.version());
            loader.install(Arc::new(b));
        }
        Err(e) => log::error!("failed to load {}: {e:#}", dir.display()),
    });
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
