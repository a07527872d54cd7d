use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Json;
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use super::{RewardAck, RewardEvent, RouteDecision, RouteRequest, Router, ServiceError};

/// Wall-clock milliseconds since the Unix epoch.
pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

struct ApiError(StatusCode, String);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        use ServiceError::*;
        let status = match &e {
            UnknownProcessor(_) | UnknownTxn(_) => StatusCode::NOT_FOUND,
            DuplicateTxnId(_) | DuplicateReward(_) => StatusCode::CONFLICT,
            AllGatewaysRateLimited => StatusCode::SERVICE_UNAVAILABLE,
            InvalidRequest(_) | UnknownArm(_) | UnknownGateway(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

#[derive(Deserialize)]
struct RewardBody {
    txn_id: String,
    success: u8,
}

async fn route(
    State(router): State<Arc<Router>>,
    body: Result<Json<RouteRequest>, JsonRejection>,
) -> Result<Json<RouteDecision>, ApiError> {
    let Json(req) = body?;
    Ok(Json(router.route(&req, now_ms())?))
}

async fn reward(
    State(router): State<Arc<Router>>,
    body: Result<Json<RewardBody>, JsonRejection>,
) -> Result<Json<RewardAck>, ApiError> {
    let Json(body) = body?;
    let success = match body.success {
        0 => false,
        1 => true,
        n => {
            return Err(ApiError(
                StatusCode::BAD_REQUEST,
                format!("success must be 0 or 1, got {n}"),
            ))
        }
    };
    let event = RewardEvent {
        txn_id: body.txn_id,
        success,
    };
    Ok(Json(router.reward(&event, now_ms())?))
}

async fn metrics(State(router): State<Arc<Router>>) -> impl IntoResponse {
    Json(router.metrics(now_ms()))
}

async fn healthz() -> impl IntoResponse {
    Json(json!({ "status": "ok" }))
}

pub fn app(router: Arc<Router>) -> axum::Router {
    axum::Router::new()
        .route("/route", post(route))
        .route("/reward", post(reward))
        .route("/metrics", get(metrics))
        .route("/healthz", get(healthz))
        .with_state(router)
}

async fn write_snapshot(router: Arc<Router>, path: PathBuf) {
    let res = tokio::task::spawn_blocking(move || {
        let state = router.export_state();
        super::write_snapshot(&path, &state, now_ms()).map(|_| path)
    })
    .await;
    match res {
        Ok(Ok(path)) => tracing::debug!(path = %path.display(), "snapshot written"),
        Ok(Err(e)) => tracing::error!(error = %e, "snapshot failed"),
        Err(e) => tracing::error!(error = %e, "snapshot task panicked"),
    }
}

/// Writes a snapshot every `interval` until the handle is aborted.
pub fn spawn_snapshotter(router: Arc<Router>, path: PathBuf, interval: Duration) -> JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(interval);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        // the first tick fires immediately
        tick.tick().await;
        loop {
            tick.tick().await;
            write_snapshot(router.clone(), path.clone()).await;
        }
    })
}

/// Serves until `shutdown` resolves, then writes a final snapshot when a
/// path is configured.
pub async fn serve(
    router: Arc<Router>,
    listener: TcpListener,
    snapshot: Option<(PathBuf, Duration)>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let ticker = snapshot
        .as_ref()
        .map(|(path, every)| spawn_snapshotter(router.clone(), path.clone(), *every));
    let res = axum::serve(listener, app(router.clone()))
        .with_graceful_shutdown(shutdown)
        .await;
    if let Some(t) = ticker {
        t.abort();
    }
    if let Some((path, _)) = snapshot {
        write_snapshot(router, path).await;
    }
    res
}
