//! HTTP/JSON facade over the canonicalizer with a durable observation log.
//!
//! Endpoints (all bodies are UTF-8 JSON, timestamps are 14-digit strings):
//!
//! | method | path                                 | answer                                  |
//! |--------|--------------------------------------|-----------------------------------------|
//! | GET    | `/api/v1/current?uri=U`              | `{"site_id","current_uri"}`             |
//! | GET    | `/api/v1/timeline?uri=U`             | `{"site_id","aliases","timeline"}`      |
//! | GET    | `/api/v1/at?uri=U&timestamp=T`       | `{"site_id","uri_at"}`                  |
//! | POST   | `/api/v1/observe`                    | `{"outcome":"known|new_site|shift|collision",..}` |
//! | GET    | `/api/v1/pending`                    | `{"pending":[..]}`                      |
//! | POST   | `/api/v1/collisions/{id}/resolve`    | `{"collision_id","site_id"}`            |
//!
//! Errors are `{"error":code}` with 400 (malformed), 404 (`unknown_uri`,
//! `unknown_collision`, `unknown_site`) or 409 (`out_of_order`,
//! `already_resolved`, `address_in_use`, `alias_in_use`).

pub mod api;
mod client;
pub mod log;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use async_trait::async_trait;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use thiserror::Error;
use tokio::net::TcpListener;

pub use client::{CanonClient, ClientError};

use crate::canonicalizer::{
    CanonError, Canonicalizer, CollisionId, Observation, ObservationError, Outcome, Resolution,
    SiteId, SiteRecord,
};
use crate::lookup::{CanonLookup, LookupError};
use crate::model::{CanonicalUri, Timestamp14};
use crate::server::RunningServer;
use api::*;
use log::{LogError, LogEvent, ObservationLog};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Canon(#[from] CanonError),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// The canonicalizer plus its log. Writes are serialized; reads work on
/// immutable snapshots that are swapped in after each logged write.
pub struct CanonService {
    snapshot: RwLock<Arc<Canonicalizer>>,
    log: Mutex<Option<ObservationLog>>,
}

impl CanonService {
    pub fn open(data_dir: &std::path::Path) -> Result<Self, LogError> {
        let (log, engine) = ObservationLog::open(data_dir)?;
        Ok(Self {
            snapshot: RwLock::new(Arc::new(engine)),
            log: Mutex::new(Some(log)),
        })
    }

    /// A service without persistence.
    pub fn in_memory() -> Self {
        Self {
            snapshot: RwLock::new(Arc::new(Canonicalizer::new())),
            log: Mutex::new(None),
        }
    }

    pub fn snapshot(&self) -> Arc<Canonicalizer> {
        self.snapshot.read().unwrap().clone()
    }

    pub fn observe(&self, obs: Observation) -> Result<Outcome, ServiceError> {
        let mut log = self.log.lock().unwrap();
        let mut next = (*self.snapshot()).clone();
        let outcome = next.register_observation(obs.clone())?;
        if let Some(log) = log.as_mut() {
            log.append(LogEvent::Observe {
                observation: obs,
                outcome: outcome.clone(),
            })?;
        }
        *self.snapshot.write().unwrap() = Arc::new(next);
        Ok(outcome)
    }

    pub fn resolve(
        &self,
        collision_id: CollisionId,
        decision: Resolution,
    ) -> Result<SiteId, ServiceError> {
        let mut log = self.log.lock().unwrap();
        let mut next = (*self.snapshot()).clone();
        let site_id = next.resolve_collision(collision_id, &decision)?;
        if let Some(log) = log.as_mut() {
            log.append(LogEvent::Resolve {
                collision_id,
                decision,
                site_id,
            })?;
        }
        *self.snapshot.write().unwrap() = Arc::new(next);
        Ok(site_id)
    }
}

#[async_trait]
impl CanonLookup for CanonService {
    async fn current_uri(&self, uri: &CanonicalUri) -> Result<(SiteId, CanonicalUri), LookupError> {
        CanonLookup::current_uri(&*self.snapshot(), uri).await
    }

    async fn site_record(&self, uri: &CanonicalUri) -> Result<SiteRecord, LookupError> {
        self.snapshot().site_record(uri).await
    }

    async fn uri_at(
        &self,
        uri: &CanonicalUri,
        at: &Timestamp14,
    ) -> Result<(SiteId, CanonicalUri), LookupError> {
        CanonLookup::uri_at(&*self.snapshot(), uri, at).await
    }
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    CorruptLog(#[from] LogError),
}

/// Opens the data directory, replays its log and starts serving.
pub async fn serve(config: &ServeConfig) -> Result<(RunningServer, Arc<CanonService>), ServeError> {
    let service = Arc::new(CanonService::open(&config.data_dir)?);
    let listener =
        TcpListener::bind(config.bind)
            .await
            .map_err(|source| ServeError::BindFailure {
                addr: config.bind,
                source,
            })?;
    let server = RunningServer::spawn(listener, router(service.clone())).map_err(|source| {
        ServeError::BindFailure {
            addr: config.bind,
            source,
        }
    })?;
    tracing::info!(addr = %server.local_addr(), "canonicalizer listening");
    Ok((server, service))
}

pub fn router(service: Arc<CanonService>) -> Router {
    Router::new()
        .route("/api/v1/current", get(current))
        .route("/api/v1/timeline", get(timeline))
        .route("/api/v1/at", get(at))
        .route("/api/v1/observe", post(observe))
        .route("/api/v1/pending", get(pending))
        .route("/api/v1/collisions/{id}/resolve", post(resolve))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "") })
        .with_state(service)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, detail: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: code.to_string(),
                detail: detail.into(),
            },
        }
    }

    fn malformed(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed", detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<ServiceError> for ApiError {
    fn from(err: ServiceError) -> Self {
        match err {
            ServiceError::Canon(e) => e.into(),
            ServiceError::Log(e) => Self::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "storage_failure",
                e.to_string(),
            ),
        }
    }
}

impl From<CanonError> for ApiError {
    fn from(err: CanonError) -> Self {
        let detail = err.to_string();
        let (status, code) = match err {
            CanonError::UnknownUri(_) => (StatusCode::NOT_FOUND, "unknown_uri"),
            CanonError::UnknownCollision(_) => (StatusCode::NOT_FOUND, "unknown_collision"),
            CanonError::UnknownSite(_) => (StatusCode::NOT_FOUND, "unknown_site"),
            CanonError::OutOfOrderObservation { .. } => (StatusCode::CONFLICT, "out_of_order"),
            CanonError::AlreadyResolved(_) => (StatusCode::CONFLICT, "already_resolved"),
            CanonError::AddressInUse { .. } => (StatusCode::CONFLICT, "address_in_use"),
            CanonError::AliasInUse { .. } => (StatusCode::CONFLICT, "alias_in_use"),
            CanonError::InvalidObservation(ObservationError::NotOnion(_)) => {
                (StatusCode::BAD_REQUEST, "not_onion")
            }
            CanonError::InvalidObservation(_) => (StatusCode::BAD_REQUEST, "malformed"),
        };
        Self::new(status, code, detail)
    }
}

type Params = Query<HashMap<String, String>>;

fn param<'a>(params: &'a HashMap<String, String>, name: &str) -> Result<&'a str, ApiError> {
    params
        .get(name)
        .map(String::as_str)
        .ok_or_else(|| ApiError::malformed(format!("missing query parameter `{name}`")))
}

fn uri_param(params: &HashMap<String, String>) -> Result<CanonicalUri, ApiError> {
    CanonicalUri::parse(param(params, "uri")?).map_err(|e| ApiError::malformed(e.to_string()))
}

async fn current(
    State(svc): State<Arc<CanonService>>,
    Query(params): Params,
) -> Result<Json<CurrentResponse>, ApiError> {
    let uri = uri_param(&params)?;
    let (site_id, current_uri) = Canonicalizer::current_uri(&svc.snapshot(), &uri)?;
    Ok(Json(CurrentResponse {
        site_id,
        current_uri,
    }))
}

async fn timeline(
    State(svc): State<Arc<CanonService>>,
    Query(params): Params,
) -> Result<Json<TimelineResponse>, ApiError> {
    let uri = uri_param(&params)?;
    let snapshot = svc.snapshot();
    let site = snapshot.timeline_for(&uri)?;
    Ok(Json(site.into()))
}

async fn at(
    State(svc): State<Arc<CanonService>>,
    Query(params): Params,
) -> Result<Json<AtResponse>, ApiError> {
    let uri = uri_param(&params)?;
    let timestamp = Timestamp14::parse(param(&params, "timestamp")?)
        .map_err(|e| ApiError::malformed(e.to_string()))?;
    let (site_id, uri_at) = Canonicalizer::uri_at(&svc.snapshot(), &uri, &timestamp)?;
    Ok(Json(AtResponse { site_id, uri_at }))
}

async fn observe(
    State(svc): State<Arc<CanonService>>,
    body: Result<Json<ObserveRequest>, JsonRejection>,
) -> Result<Json<Outcome>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::malformed(e.body_text()))?;
    let uri = CanonicalUri::parse(&req.uri).map_err(|e| ApiError::malformed(e.to_string()))?;
    let observed_at =
        Timestamp14::parse(&req.observed_at).map_err(|e| ApiError::malformed(e.to_string()))?;
    let obs = Observation::new(uri, req.source, req.alias, observed_at)
        .map_err(|e| ApiError::from(CanonError::from(e)))?;
    Ok(Json(svc.observe(obs)?))
}

async fn pending(State(svc): State<Arc<CanonService>>) -> Json<PendingResponse> {
    let snapshot = svc.snapshot();
    Json(PendingResponse {
        pending: snapshot.list_pending().into_iter().cloned().collect(),
    })
}

async fn resolve(
    State(svc): State<Arc<CanonService>>,
    Path(id): Path<String>,
    body: Result<Json<Resolution>, JsonRejection>,
) -> Result<Json<ResolveResponse>, ApiError> {
    let collision_id = id
        .parse()
        .map(CollisionId)
        .map_err(|_| ApiError::malformed(format!("bad collision id `{id}`")))?;
    let Json(decision) = body.map_err(|e| ApiError::malformed(e.body_text()))?;
    let site_id = svc.resolve(collision_id, decision)?;
    Ok(Json(ResolveResponse {
        collision_id,
        site_id,
    }))
}
