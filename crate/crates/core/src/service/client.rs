use std::time::Duration;

use async_trait::async_trait;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use thiserror::Error;

use super::api::*;
use crate::canonicalizer::{
    CollisionId, Observation, Outcome, PendingCollision, Resolution, SiteId, SiteRecord,
};
use crate::lookup::{CanonLookup, LookupError};
use crate::model::{CanonicalUri, Timestamp14};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("canonicalizer unreachable: {0}")]
    Unavailable(String),
    #[error("canonicalizer answered {status}: {error} {detail}")]
    Api {
        status: u16,
        error: String,
        detail: String,
    },
    #[error("unexpected response body: {0}")]
    BadBody(String),
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { error, .. } => Some(error),
            _ => None,
        }
    }
}

/// HTTP client for the canonicalizer service.
#[derive(Debug, Clone)]
pub struct CanonClient {
    base: String,
    http: reqwest::Client,
}

impl CanonClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(10))
            .no_proxy()
            .build()
            .expect("http client builds");
        Self {
            base: base_url.into().trim_end_matches('/').to_string(),
            http,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| ClientError::Unavailable(e.to_string()))?;
        if status.is_success() {
            serde_json::from_slice(&bytes).map_err(|e| ClientError::BadBody(e.to_string()))
        } else {
            let body: ErrorBody = serde_json::from_slice(&bytes).unwrap_or(ErrorBody {
                error: status.canonical_reason().unwrap_or("error").to_string(),
                detail: String::from_utf8_lossy(&bytes).into_owned(),
            });
            Err(ClientError::Api {
                status: status.as_u16(),
                error: body.error,
                detail: body.detail,
            })
        }
    }

    async fn get<T: DeserializeOwned>(
        &self,
        path: &str,
        query: &[(&str, &str)],
    ) -> Result<T, ClientError> {
        let resp = self
            .http
            .get(format!("{}{}", self.base, path))
            .query(query)
            .send()
            .await
            .map_err(|e| ClientError::Unavailable(e.to_string()))?;
        Self::decode(resp).await
    }

    async fn post<B: serde::Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, ClientError> {
        let resp = self
            .http
            .post(format!("{}{}", self.base, path))
            .json(body)
            .send()
            .await
            .map_err(|e| ClientError::Unavailable(e.to_string()))?;
        Self::decode(resp).await
    }

    pub async fn current(&self, uri: &CanonicalUri) -> Result<CurrentResponse, ClientError> {
        self.get("/api/v1/current", &[("uri", &uri.to_string())])
            .await
    }

    pub async fn timeline(&self, uri: &CanonicalUri) -> Result<TimelineResponse, ClientError> {
        self.get("/api/v1/timeline", &[("uri", &uri.to_string())])
            .await
    }

    pub async fn at(
        &self,
        uri: &CanonicalUri,
        at: &Timestamp14,
    ) -> Result<AtResponse, ClientError> {
        self.get(
            "/api/v1/at",
            &[("uri", &uri.to_string()), ("timestamp", at.as_str())],
        )
        .await
    }

    pub async fn observe(&self, obs: &Observation) -> Result<Outcome, ClientError> {
        let req = ObserveRequest {
            uri: obs.uri.to_string(),
            source: obs.source.clone(),
            alias: obs.alias.clone(),
            observed_at: obs.observed_at.to_string(),
        };
        self.post("/api/v1/observe", &req).await
    }

    pub async fn pending(&self) -> Result<Vec<PendingCollision>, ClientError> {
        let resp: PendingResponse = self.get("/api/v1/pending", &[]).await?;
        Ok(resp.pending)
    }

    pub async fn resolve(
        &self,
        id: CollisionId,
        decision: &Resolution,
    ) -> Result<SiteId, ClientError> {
        let resp: ResolveResponse = self
            .post(&format!("/api/v1/collisions/{id}/resolve"), decision)
            .await?;
        Ok(resp.site_id)
    }
}

fn to_lookup(err: ClientError) -> LookupError {
    match err {
        ClientError::Api { status, .. } if status == StatusCode::NOT_FOUND.as_u16() => {
            LookupError::UnknownUri
        }
        other => LookupError::Unavailable(other.to_string()),
    }
}

#[async_trait]
impl CanonLookup for CanonClient {
    async fn current_uri(&self, uri: &CanonicalUri) -> Result<(SiteId, CanonicalUri), LookupError> {
        self.current(uri)
            .await
            .map(|r| (r.site_id, r.current_uri))
            .map_err(to_lookup)
    }

    async fn site_record(&self, uri: &CanonicalUri) -> Result<SiteRecord, LookupError> {
        self.timeline(uri)
            .await
            .map(SiteRecord::from)
            .map_err(to_lookup)
    }

    async fn uri_at(
        &self,
        uri: &CanonicalUri,
        at: &Timestamp14,
    ) -> Result<(SiteId, CanonicalUri), LookupError> {
        self.at(uri, at)
            .await
            .map(|r| (r.site_id, r.uri_at))
            .map_err(to_lookup)
    }
}
