//! HTTP JSON API over a review store, consumed by the review console.
//!
//! - `GET  /api/queue?status=pending&limit=N`
//! - `GET  /api/item/{id}`: item, tile URL and overlay in tile pixels
//! - `POST /api/item/{id}/decision`: `{decision, relabel?, reviewer?}`
//! - `GET  /api/metrics?window=3600`
//! - `GET  /api/tile/{id}.png`
//!
//! Mutations take the store's write lock, so decisions are serialized and
//! each one is on disk before its response is sent.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thma_core::active::{ActiveError, DecisionRequest, LoopMetrics, ReviewItem, ReviewStore, Status};
use thma_core::bev::{sidecar_path, TileFrame};
use thma_core::descriptor::keypoints;
use thma_core::Detection;

pub struct AppState {
    store: RwLock<ReviewStore>,
    tiles: Option<PathBuf>,
}

pub fn app(store: ReviewStore, tiles: Option<PathBuf>) -> Router {
    let state = Arc::new(AppState { store: RwLock::new(store), tiles });
    Router::new()
        .route("/api/queue", get(queue))
        .route("/api/item/{id}", get(item))
        .route("/api/item/{id}/decision", post(decide))
        .route("/api/metrics", get(metrics))
        .route("/api/tile/{file}", get(tile))
        .with_state(state)
}

#[derive(Debug)]
struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<ActiveError> for ApiError {
    fn from(e: ActiveError) -> Self {
        let status = match e {
            ActiveError::NotFound(_) => StatusCode::NOT_FOUND,
            ActiveError::AlreadyDecided(_) => StatusCode::CONFLICT,
            ActiveError::Malformed(_) | ActiveError::InvalidWindow(_) | ActiveError::InvalidConfig(_) => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
struct QueueQuery {
    status: Option<String>,
    limit: Option<usize>,
}

fn parse_status(s: &str) -> Result<Option<Status>, ApiError> {
    Ok(Some(match s {
        "all" => return Ok(None),
        "pending" => Status::Pending,
        "accepted" => Status::Accepted,
        "rejected" => Status::Rejected,
        "relabeled" => Status::Relabeled,
        other => return Err(ApiError(StatusCode::BAD_REQUEST, format!("unknown status {other:?}"))),
    }))
}

async fn queue(State(state): State<Arc<AppState>>, Query(q): Query<QueueQuery>) -> ApiResult<Vec<ReviewItem>> {
    let status = parse_status(q.status.as_deref().unwrap_or("pending"))?;
    let store = state.store.read().expect("store lock");
    Ok(Json(store.queue(status, q.limit.unwrap_or(100)).into_iter().cloned().collect()))
}

/// Detection geometry in tile pixel coordinates `(row, col)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Overlay {
    /// `polyline` for line-like classes, `keypoints` otherwise.
    pub kind: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemDetail {
    pub item: ReviewItem,
    pub tile_url: Option<String>,
    pub overlay: Option<Overlay>,
}

fn valid_tile_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn overlay(frame: &TileFrame, detection: &Detection) -> Overlay {
    let v = detection.primary_vector();
    let (kind, points) = if v.class().is_polyline() {
        ("polyline", v.vertices())
    } else {
        ("keypoints", keypoints(v).0)
    };
    let points = points
        .iter()
        .map(|p| {
            let (row, col) = frame.pixel_coords(p[0], p[1]);
            [row, col]
        })
        .collect();
    Overlay { kind: kind.to_string(), points }
}

async fn item(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<ItemDetail> {
    let item = {
        let store = state.store.read().expect("store lock");
        store.item(&id).cloned().ok_or(ActiveError::NotFound(id))?
    };
    let tile = item.detection.tile.clone().filter(|t| valid_tile_id(t));
    let frame = match (&state.tiles, &tile) {
        (Some(dir), Some(t)) => std::fs::read(sidecar_path(&dir.join(format!("{t}.png"))))
            .ok()
            .and_then(|bytes| serde_json::from_slice::<TileFrame>(&bytes).ok()),
        _ => None,
    };
    Ok(Json(ItemDetail {
        tile_url: tile.map(|t| format!("/api/tile/{t}.png")),
        overlay: frame.map(|f| overlay(&f, &item.detection)),
        item,
    }))
}

async fn decide(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<ReviewItem> {
    let request: DecisionRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let reviewer = request.reviewer.clone();
    let decision = request.into_decision(&id)?;
    let mut store = state.store.write().expect("store lock");
    Ok(Json(store.decide(&id, decision, reviewer)?))
}

#[derive(Debug, Deserialize)]
struct MetricsQuery {
    window: Option<f64>,
}

async fn metrics(State(state): State<Arc<AppState>>, Query(q): Query<MetricsQuery>) -> ApiResult<LoopMetrics> {
    let store = state.store.read().expect("store lock");
    Ok(Json(store.metrics(q.window.unwrap_or(3600.0))?))
}

async fn tile(State(state): State<Arc<AppState>>, Path(file): Path<String>) -> Result<Response, ApiError> {
    let missing = || ApiError(StatusCode::NOT_FOUND, format!("no tile {file:?}"));
    let id = file.strip_suffix(".png").filter(|id| valid_tile_id(id)).ok_or_else(missing)?;
    let dir = state.tiles.as_ref().ok_or_else(missing)?;
    let bytes = std::fs::read(dir.join(format!("{id}.png"))).map_err(|_| missing())?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

/// Serves `app` on an already-bound listener until the process exits.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}
