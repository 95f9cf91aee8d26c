//! Wayback-style replay over shifted onion addresses.
//!
//! * `GET /replay/<ts14>/<uri>` serves a memento with links rewritten;
//!   `/replay/<ts14>id_/<uri>` serves the archived payload untouched.
//! * `GET /timemap/link/<uri>` returns an RFC 7089 link-format TimeMap.
//! * `GET /api/v1/lookup?uri=U&timestamp=T` returns the resolution trace.

mod resolve;
mod rewrite;
mod timemap;
mod urim;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{OriginalUri, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use thiserror::Error;
use tokio::net::TcpListener;

pub use resolve::{resolve_memento, ResolutionTrace, ResolveError, Resolved, Step, TraceStep};
pub use rewrite::rewrite_links;
pub use timemap::{parse_link_format, timemap, LinkValue, Memento, RelatedUri, TimeMap};
pub use urim::{UriM, UriMError};

use crate::lookup::CanonLookup;
use crate::model::{CanonicalUri, Timestamp14};
use crate::server::RunningServer;
use crate::warc::{
    build_index, read_record_at, warc_files_in, CaptureRecord, CdxEntry, CdxError, CdxIndex,
    ReadError,
};

pub const REPLAY_PATH: &str = "/replay";
pub const TIMEMAP_PATH: &str = "/timemap/link";

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    NotInArchive(Box<ResolveError>),
    #[error("index: {0}")]
    Index(#[from] CdxError),
    #[error("archive read: {0}")]
    Read(#[from] ReadError),
}

/// A memento ready to serve.
#[derive(Debug, Clone)]
pub struct ServedMemento {
    pub resolved: Resolved,
    pub record: CaptureRecord,
}

impl ServedMemento {
    pub fn original(&self) -> &str {
        &self.resolved.entry.original
    }

    pub fn datetime(&self) -> &Timestamp14 {
        &self.resolved.entry.timestamp
    }
}

/// Index snapshot plus canonicalizer access. Reloading swaps the snapshot;
/// requests in flight keep the one they started with.
pub struct ReplayService {
    warc_dir: PathBuf,
    index: RwLock<Arc<CdxIndex>>,
    canon: Arc<dyn CanonLookup>,
}

impl ReplayService {
    /// Indexes every WARC file in `warc_dir`.
    pub fn open(
        warc_dir: impl Into<PathBuf>,
        canon: Arc<dyn CanonLookup>,
    ) -> Result<Self, ReplayError> {
        let warc_dir = warc_dir.into();
        let index = load_index(&warc_dir)?;
        Ok(Self {
            warc_dir,
            index: RwLock::new(Arc::new(index)),
            canon,
        })
    }

    pub fn with_index(
        warc_dir: impl Into<PathBuf>,
        index: CdxIndex,
        canon: Arc<dyn CanonLookup>,
    ) -> Self {
        Self {
            warc_dir: warc_dir.into(),
            index: RwLock::new(Arc::new(index)),
            canon,
        }
    }

    pub fn reload(&self) -> Result<usize, ReplayError> {
        let index = load_index(&self.warc_dir)?;
        let n = index.len();
        *self.index.write().unwrap() = Arc::new(index);
        Ok(n)
    }

    pub fn index(&self) -> Arc<CdxIndex> {
        self.index.read().unwrap().clone()
    }

    pub async fn resolve(
        &self,
        target: &CanonicalUri,
        at: &Timestamp14,
    ) -> Result<Resolved, ReplayError> {
        let index = self.index();
        resolve_memento(&index, self.canon.as_ref(), target, at)
            .await
            .map_err(|e| ReplayError::NotInArchive(Box::new(e)))
    }

    pub async fn memento(
        &self,
        target: &CanonicalUri,
        at: &Timestamp14,
    ) -> Result<ServedMemento, ReplayError> {
        let resolved = self.resolve(target, at).await?;
        let record = self.load(&resolved.entry)?;
        Ok(ServedMemento { resolved, record })
    }

    pub fn load(&self, entry: &CdxEntry) -> Result<CaptureRecord, ReplayError> {
        Ok(read_record_at(
            &self.warc_dir.join(&entry.filename),
            entry.offset,
            entry.length,
        )?)
    }

    pub async fn timemap(&self, target: &CanonicalUri, base: &str) -> Option<TimeMap> {
        let index = self.index();
        timemap(
            &index,
            self.canon.as_ref(),
            target,
            &format!("{base}{REPLAY_PATH}"),
            &format!("{base}{TIMEMAP_PATH}"),
        )
        .await
    }
}

fn load_index(dir: &Path) -> Result<CdxIndex, ReplayError> {
    let files = warc_files_in(dir).map_err(CdxError::Io)?;
    Ok(build_index(&files)?)
}

#[derive(Debug, Clone)]
pub struct ReplayConfig {
    pub bind: SocketAddr,
    pub warc_dir: PathBuf,
}

pub async fn serve(
    config: &ReplayConfig,
    canon: Arc<dyn CanonLookup>,
) -> Result<(RunningServer, Arc<ReplayService>), ReplayServeError> {
    let service = Arc::new(ReplayService::open(&config.warc_dir, canon)?);
    let listener =
        TcpListener::bind(config.bind)
            .await
            .map_err(|source| ReplayServeError::BindFailure {
                addr: config.bind,
                source,
            })?;
    let server = RunningServer::spawn(listener, router(service.clone())).map_err(|source| {
        ReplayServeError::BindFailure {
            addr: config.bind,
            source,
        }
    })?;
    tracing::info!(addr = %server.local_addr(), captures = service.index().len(), "replay listening");
    Ok((server, service))
}

#[derive(Debug, Error)]
pub enum ReplayServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

pub fn router(service: Arc<ReplayService>) -> Router {
    Router::new()
        .route("/replay/{*rest}", get(replay))
        .route("/timemap/link/{*rest}", get(timemap_handler))
        .route("/api/v1/lookup", get(lookup))
        .fallback(|| async { error(StatusCode::NOT_FOUND, "not_found", "", Vec::new()) })
        .with_state(service)
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    detail: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    tried: Vec<String>,
}

fn error(
    status: StatusCode,
    code: &str,
    detail: impl Into<String>,
    tried: Vec<String>,
) -> Response {
    (
        status,
        Json(ErrorBody {
            error: code.into(),
            detail: detail.into(),
            tried,
        }),
    )
        .into_response()
}

fn replay_error(err: ReplayError) -> Response {
    match err {
        ReplayError::NotInArchive(e) => {
            let ResolveError::NotInArchive { tried, trace } = *e;
            error(
                StatusCode::NOT_FOUND,
                "not_in_archive",
                format!("{} has no captures", trace.target),
                tried,
            )
        }
        other => error(
            StatusCode::INTERNAL_SERVER_ERROR,
            "archive_failure",
            other.to_string(),
            Vec::new(),
        ),
    }
}

fn base_url(headers: &HeaderMap) -> String {
    headers
        .get(header::HOST)
        .and_then(|h| h.to_str().ok())
        .map(|h| format!("http://{h}"))
        .unwrap_or_default()
}

/// Path and query after `prefix/`, exactly as requested.
fn raw_rest<'a>(uri: &'a axum::http::Uri, prefix: &str) -> Option<&'a str> {
    uri.path_and_query()?
        .as_str()
        .strip_prefix(prefix)?
        .strip_prefix('/')
}

async fn replay(
    State(svc): State<Arc<ReplayService>>,
    OriginalUri(uri): OriginalUri,
    headers: HeaderMap,
) -> Response {
    let Some(rest) = raw_rest(&uri, REPLAY_PATH) else {
        return error(
            StatusCode::BAD_REQUEST,
            "malformed",
            "bad memento path",
            Vec::new(),
        );
    };
    let Some((ts_part, target)) = rest.split_once('/') else {
        return error(
            StatusCode::BAD_REQUEST,
            "malformed",
            "expected /replay/<ts14>/<uri>",
            Vec::new(),
        );
    };
    let (ts_part, raw_mode) = match ts_part.strip_suffix("id_") {
        Some(ts) => (ts, true),
        None => (ts_part, false),
    };
    let Ok(at) = Timestamp14::parse(ts_part) else {
        return error(
            StatusCode::BAD_REQUEST,
            "malformed",
            format!("bad timestamp `{ts_part}`"),
            Vec::new(),
        );
    };
    let Some(target) = urim::parse_target(target) else {
        return error(
            StatusCode::BAD_REQUEST,
            "malformed",
            format!("bad target `{target}`"),
            Vec::new(),
        );
    };

    let memento = match svc.memento(&target, &at).await {
        Ok(m) => m,
        Err(e) => return replay_error(e),
    };
    let base = base_url(&headers);
    let prefix = format!("{base}{REPLAY_PATH}");
    let original = memento.original().to_string();
    let datetime = memento.datetime().clone();
    let http = memento.record.http();
    let status = http
        .as_ref()
        .and_then(|m| m.status)
        .and_then(|s| StatusCode::from_u16(s).ok())
        .unwrap_or(StatusCode::OK);
    let content_type = http
        .as_ref()
        .and_then(|m| m.header("Content-Type").map(str::to_string))
        .unwrap_or_else(|| "application/octet-stream".into());
    let capture_uri = CanonicalUri::parse(&original).unwrap_or(target.clone());
    let context = UriM::new(prefix.clone(), datetime.clone(), capture_uri.clone());
    let payload = memento.record.payload();
    let body = if raw_mode {
        payload.to_vec()
    } else {
        rewrite_links(payload, &content_type, &context)
    };

    let mut response = (status, body).into_response();
    let h = response.headers_mut();
    let set = |h: &mut HeaderMap, name: header::HeaderName, value: String| {
        if let Ok(v) = HeaderValue::from_str(&value) {
            h.insert(name, v);
        }
    };
    set(h, header::CONTENT_TYPE, content_type);
    set(
        h,
        header::HeaderName::from_static("memento-datetime"),
        datetime.to_rfc1123(),
    );
    set(
        h,
        header::LINK,
        format!(
            "<{original}>; rel=\"original\", <{base}{TIMEMAP_PATH}/{target}>; rel=\"timemap\"; type=\"application/link-format\""
        ),
    );
    set(
        h,
        header::HeaderName::from_static("x-archive-resolution"),
        serde_json::to_value(memento.resolved.step)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
    );
    if let Some(location) = http.as_ref().and_then(|m| m.header("Location")) {
        if let Some(next) = crate::crawler::resolve_reference(&capture_uri, location) {
            set(h, header::LOCATION, context.with_target(next).to_string());
        }
    }
    response
}

async fn timemap_handler(
    State(svc): State<Arc<ReplayService>>,
    OriginalUri(uri): OriginalUri,
    headers: HeaderMap,
) -> Response {
    let Some(target) = raw_rest(&uri, TIMEMAP_PATH).and_then(urim::parse_target) else {
        return error(
            StatusCode::BAD_REQUEST,
            "malformed",
            "expected /timemap/link/<uri>",
            Vec::new(),
        );
    };
    match svc.timemap(&target, &base_url(&headers)).await {
        Some(tm) => (
            [(header::CONTENT_TYPE, "application/link-format")],
            tm.to_link_format(),
        )
            .into_response(),
        None => error(
            StatusCode::NOT_FOUND,
            "not_in_archive",
            format!("{target} has no captures"),
            vec![target.to_string()],
        ),
    }
}

#[derive(Serialize)]
struct LookupResponse {
    found: bool,
    capture: Option<String>,
    capture_datetime: Option<Timestamp14>,
    step: Option<Step>,
    trace: ResolutionTrace,
}

async fn lookup(
    State(svc): State<Arc<ReplayService>>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let Some(target) = params.get("uri").and_then(|u| CanonicalUri::parse(u).ok()) else {
        return error(
            StatusCode::BAD_REQUEST,
            "malformed",
            "missing or bad `uri`",
            Vec::new(),
        );
    };
    let Some(at) = params
        .get("timestamp")
        .and_then(|t| Timestamp14::parse(t).ok())
    else {
        return error(
            StatusCode::BAD_REQUEST,
            "malformed",
            "missing or bad `timestamp`",
            Vec::new(),
        );
    };
    match svc.resolve(&target, &at).await {
        Ok(r) => Json(LookupResponse {
            found: true,
            capture: Some(r.entry.original.clone()),
            capture_datetime: Some(r.entry.timestamp.clone()),
            step: Some(r.step),
            trace: r.trace,
        })
        .into_response(),
        Err(ReplayError::NotInArchive(e)) => {
            let ResolveError::NotInArchive { trace, .. } = *e;
            (
                StatusCode::NOT_FOUND,
                Json(LookupResponse {
                    found: false,
                    capture: None,
                    capture_datetime: None,
                    step: None,
                    trace,
                }),
            )
                .into_response()
        }
        Err(e) => replay_error(e),
    }
}
