//! Session-scoped HTTP API for interactive what-if editing of a capability
//! profile. Every mutation re-runs the simulation and returns it together
//! with the state it was computed from.
//!
//! Endpoints (JSON bodies, SI units):
//!
//! * `POST /sessions` creates a session from a template or a profile file.
//! * `GET /sessions/{id}` returns the full state snapshot.
//! * `POST /sessions/{id}/bump` adds a Gaussian bump at `(delta_m, v_mps)`.
//! * `PATCH /sessions/{id}/setup` changes the mechanism, `t_f_s` or the
//!   influence parameters.
//! * `POST /sessions/{id}/undo` restores the profile before the last bump.
//! * `GET /sessions/{id}/simulation` returns the latest simulation.

mod session;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;

pub use session::{
    BumpRequest, CreateRequest, Influence, RunSummary, Session, SetupPatch, Simulation, Snapshot, Template,
    TemplateKind, MAX_UNDO, SIMULATION_MAX_REPS,
};
pub use store::SessionStore;

/// Environment variable holding the bind address, e.g. `127.0.0.1:8080`.
pub const BIND_ENV: &str = "LIFTCAP_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("nothing to undo")]
    NothingToUndo,
    #[error(transparent)]
    Core(#[from] liftcap_core::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        use liftcap_core::Error as E;
        let status = match &self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::NothingToUndo => StatusCode::CONFLICT,
            ApiError::Core(E::InvalidInput(_) | E::Parse(_)) => StatusCode::BAD_REQUEST,
            ApiError::Core(E::Infeasible(_)) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Core(E::Numerical(_) | E::Io(_)) | ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (
            status,
            Json(ErrorBody {
                error: self.to_string(),
            }),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs `f` on a blocking thread; simulations are CPU-bound.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn create(State(store): State<Arc<SessionStore>>, Json(req): Json<CreateRequest>) -> Result<Response, ApiError> {
    let snap = blocking(move || store.create(req)).await?;
    Ok((StatusCode::CREATED, Json(snap)).into_response())
}

// Reads wait for any in-flight edit on the session, so they see the state
// either before or after it.
async fn snapshot(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<Snapshot> {
    let session = store.get(&id)?;
    Ok(Json(blocking(move || Ok(session.lock().snapshot())).await?))
}

async fn simulation(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<Simulation> {
    let session = store.get(&id)?;
    Ok(Json(blocking(move || Ok(session.lock().simulation.clone())).await?))
}

async fn bump(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    Json(req): Json<BumpRequest>,
) -> ApiResult<Snapshot> {
    let session = store.get(&id)?;
    let snap = blocking(move || {
        let mut s = session.lock();
        s.apply_bump(&req)?;
        store.persist(&s)?;
        Ok(s.snapshot())
    })
    .await?;
    Ok(Json(snap))
}

async fn patch_setup(
    State(store): State<Arc<SessionStore>>,
    Path(id): Path<String>,
    Json(req): Json<SetupPatch>,
) -> ApiResult<Snapshot> {
    let session = store.get(&id)?;
    let snap = blocking(move || {
        let mut s = session.lock();
        s.update_setup(&req)?;
        store.persist(&s)?;
        Ok(s.snapshot())
    })
    .await?;
    Ok(Json(snap))
}

async fn undo(State(store): State<Arc<SessionStore>>, Path(id): Path<String>) -> ApiResult<Snapshot> {
    let session = store.get(&id)?;
    let snap = blocking(move || {
        let mut s = session.lock();
        s.undo()?;
        store.persist(&s)?;
        Ok(s.snapshot())
    })
    .await?;
    Ok(Json(snap))
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(snapshot))
        .route("/sessions/{id}/bump", post(bump))
        .route("/sessions/{id}/setup", axum::routing::patch(patch_setup))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/simulation", get(simulation))
        .with_state(store)
}

/// Bind address from [`BIND_ENV`], falling back to [`DEFAULT_BIND`].
pub fn bind_address() -> Result<SocketAddr, ApiError> {
    let raw = std::env::var(BIND_ENV).unwrap_or_else(|_| DEFAULT_BIND.to_string());
    raw.parse()
        .map_err(|e| ApiError::Core(liftcap_core::Error::InvalidInput(format!("{BIND_ENV}={raw}: {e}"))))
}

/// Serves the API until the process is stopped. Sessions found in
/// `store_dir` are loaded first.
pub async fn serve(addr: SocketAddr, store_dir: PathBuf) -> Result<(), ApiError> {
    let store = Arc::new(SessionStore::open(store_dir)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ApiError::Core(e.into()))?;
    axum::serve(listener, router(store))
        .await
        .map_err(|e| ApiError::Core(e.into()))
}
