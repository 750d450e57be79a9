//! HTTP/JSON front end.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Redirect, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use evocaptcha_core::audio::MixSpec;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::audit::{Stats, Window};
use crate::clock::SystemTime;
use crate::config::ServiceConfig;
use crate::service::{ChallengeKind, ChallengePools, ChallengeService, Issued, SubmitOutcome};
use crate::ServiceError;

#[derive(Clone)]
struct AppState {
    service: Arc<ChallengeService>,
    workers: Arc<Semaphore>,
    default_snr_db: f64,
    default_gain_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    AsciiText,
    AsciiImage,
    Audio,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IssueParams {
    /// baseline, background, gaussian or overlap; audio only.
    pub environment: Option<String>,
    pub snr_db: Option<f64>,
    pub gain_db: Option<f64>,
    pub client_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueRequest {
    pub kind: KindName,
    #[serde(default)]
    pub params: IssueParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub token: String,
    pub answer: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
struct StatsQuery {
    /// Seconds back from now; everything when absent.
    window: Option<u64>,
}

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            ServiceError::UnknownToken => (StatusCode::NOT_FOUND, "unknown_token"),
            ServiceError::ExpiredToken => (StatusCode::GONE, "expired_token"),
            ServiceError::NoAttemptsLeft => (StatusCode::CONFLICT, "no_attempts_left"),
            ServiceError::PoolUnavailable(_) => (StatusCode::SERVICE_UNAVAILABLE, "pool_unavailable"),
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            tracing::error!("{self}");
        }
        let message = match status {
            StatusCode::INTERNAL_SERVER_ERROR => "internal error".to_owned(),
            _ => self.to_string(),
        };
        (status, Json(ErrorBody { error: code, message })).into_response()
    }
}

impl AppState {
    fn kind(&self, req: &IssueRequest) -> Result<ChallengeKind, ServiceError> {
        let p = &req.params;
        let audio_only = p.environment.is_some() || p.snr_db.is_some() || p.gain_db.is_some();
        match req.kind {
            KindName::AsciiText | KindName::AsciiImage if audio_only => {
                Err(ServiceError::BadRequest("environment parameters apply to audio challenges only".into()))
            }
            KindName::AsciiText => Ok(ChallengeKind::AsciiText),
            KindName::AsciiImage => Ok(ChallengeKind::AsciiImage),
            KindName::Audio => {
                let snr_db = p.snr_db.unwrap_or(self.default_snr_db);
                let environment = match p.environment.as_deref().unwrap_or("baseline") {
                    "baseline" => MixSpec::Baseline,
                    "background" => MixSpec::Background { snr_db },
                    "gaussian" => MixSpec::Gaussian { snr_db },
                    "overlap" => MixSpec::Overlap {
                        distractor_gain_db: p.gain_db.unwrap_or(self.default_gain_db),
                        distractor_count: MixSpec::DEFAULT_DISTRACTOR_COUNT,
                    },
                    other => return Err(ServiceError::BadRequest(format!("unknown environment {other:?}"))),
                };
                environment.validate().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
                Ok(ChallengeKind::Audio { environment })
            }
        }
    }
}

async fn issue(State(state): State<AppState>, Json(req): Json<IssueRequest>) -> Result<Json<Issued>, ServiceError> {
    let kind = state.kind(&req)?;
    let _permit = state.workers.acquire().await.map_err(|e| ServiceError::Generation(e.to_string()))?;
    let service = state.service.clone();
    let tag = req.params.client_tag;
    let issued = tokio::task::spawn_blocking(move || service.issue(kind, tag.as_deref()))
        .await
        .map_err(|e| ServiceError::Generation(e.to_string()))??;
    Ok(Json(issued))
}

async fn asset(State(state): State<AppState>, Path(token): Path<String>) -> Result<Response, ServiceError> {
    let asset = state.service.fetch_asset(&token)?;
    let mut response = asset.bytes.as_ref().clone().into_response();
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(asset.media_type));
    headers.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    Ok(response)
}

async fn answer(
    State(state): State<AppState>,
    Json(req): Json<AnswerRequest>,
) -> Result<Json<SubmitOutcome>, ServiceError> {
    Ok(Json(state.service.submit(&req.token, &req.answer)?))
}

async fn stats(State(state): State<AppState>, Query(q): Query<StatsQuery>) -> Result<Json<Stats>, ServiceError> {
    let window = q.window.map_or(Window::all(), |s| state.service.window_last(s));
    Ok(Json(state.service.stats(window)?))
}

async fn demo_file(State(root): State<PathBuf>, path: Option<Path<String>>) -> Response {
    let rel = path.map(|Path(p)| p).unwrap_or_default();
    let mut file = root.clone();
    for part in rel.split('/').filter(|p| !p.is_empty()) {
        if part == ".." || part.contains('\\') {
            return StatusCode::NOT_FOUND.into_response();
        }
        file.push(part);
    }
    if file.is_dir() || rel.is_empty() {
        file.push("index.html");
    }
    match tokio::fs::read(&file).await {
        Ok(bytes) => {
            let media = match file.extension().and_then(|e| e.to_str()).unwrap_or("") {
                "html" => "text/html; charset=utf-8",
                "js" | "mjs" => "text/javascript; charset=utf-8",
                "css" => "text/css; charset=utf-8",
                "json" => "application/json",
                "svg" => "image/svg+xml",
                "png" => "image/png",
                "wasm" => "application/wasm",
                _ => "application/octet-stream",
            };
            ([(header::CONTENT_TYPE, media)], bytes).into_response()
        }
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

/// The API routes plus `/demo` static files from `demo_dir`.
pub fn router(service: Arc<ChallengeService>, config: &ServiceConfig, demo_dir: PathBuf) -> Router {
    let state = AppState {
        service,
        workers: Arc::new(Semaphore::new(config.workers)),
        default_snr_db: config.default_snr_db,
        default_gain_db: config.default_gain_db,
    };
    Router::new()
        .route("/v1/challenge", post(issue))
        .route("/v1/asset/{token}", get(asset))
        .route("/v1/answer", post(answer))
        .route("/v1/stats", get(stats))
        .with_state(state)
        .route("/demo", get(|| async { Redirect::permanent("/demo/") }))
        .route("/demo/", get(demo_file).with_state(demo_dir.clone()))
        .route("/demo/{*path}", get(demo_file).with_state(demo_dir))
}

/// Builds the service from `config` and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    config.validate()?;
    let pools = tokio::task::block_in_place(|| ChallengePools::from_config(&config))?;
    let service = Arc::new(ChallengeService::open(&config, pools, Arc::new(SystemTime))?);
    let addr: SocketAddr = format!("{}:{}", config.host, config.port)
        .parse()
        .map_err(|e| ServiceError::Config(format!("bad listen address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| ServiceError::Io(e.to_string()))?;
    tracing::info!("listening on http://{}", listener.local_addr().map_err(|e| ServiceError::Io(e.to_string()))?);

    let sweeper = service.clone();
    let period = Duration::from_secs(config.ttl_seconds.clamp(1, 30));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let s = sweeper.clone();
            match tokio::task::spawn_blocking(move || s.sweep()).await {
                Ok(Err(e)) => tracing::warn!("sweep failed: {e}"),
                Err(e) => tracing::warn!("sweep task failed: {e}"),
                Ok(Ok(_)) => {}
            }
        }
    });

    let app = router(service, &config, config.demo_dir());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Io(e.to_string()))
}
