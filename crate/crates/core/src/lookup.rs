//! Read access to the canonicalizer, in process or over HTTP.

use std::sync::Arc;

use async_trait::async_trait;
use thiserror::Error;

use crate::canonicalizer::{CanonError, Canonicalizer, SiteId, SiteRecord};
use crate::model::{CanonicalUri, Timestamp14};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LookupError {
    #[error("uri has never been observed")]
    UnknownUri,
    #[error("canonicalizer unavailable: {0}")]
    Unavailable(String),
}

/// The three lookups the crawler and replay need from the canonicalizer.
#[async_trait]
pub trait CanonLookup: Send + Sync {
    async fn current_uri(&self, uri: &CanonicalUri) -> Result<(SiteId, CanonicalUri), LookupError>;

    async fn site_record(&self, uri: &CanonicalUri) -> Result<SiteRecord, LookupError>;

    async fn uri_at(
        &self,
        uri: &CanonicalUri,
        at: &Timestamp14,
    ) -> Result<(SiteId, CanonicalUri), LookupError>;
}

fn from_canon(err: CanonError) -> LookupError {
    match err {
        CanonError::UnknownUri(_) => LookupError::UnknownUri,
        other => LookupError::Unavailable(other.to_string()),
    }
}

#[async_trait]
impl CanonLookup for Canonicalizer {
    async fn current_uri(&self, uri: &CanonicalUri) -> Result<(SiteId, CanonicalUri), LookupError> {
        Canonicalizer::current_uri(self, uri).map_err(from_canon)
    }

    async fn site_record(&self, uri: &CanonicalUri) -> Result<SiteRecord, LookupError> {
        self.timeline_for(uri).cloned().map_err(from_canon)
    }

    async fn uri_at(
        &self,
        uri: &CanonicalUri,
        at: &Timestamp14,
    ) -> Result<(SiteId, CanonicalUri), LookupError> {
        Canonicalizer::uri_at(self, uri, at).map_err(from_canon)
    }
}

#[async_trait]
impl<T: CanonLookup + ?Sized> CanonLookup for Arc<T> {
    async fn current_uri(&self, uri: &CanonicalUri) -> Result<(SiteId, CanonicalUri), LookupError> {
        (**self).current_uri(uri).await
    }

    async fn site_record(&self, uri: &CanonicalUri) -> Result<SiteRecord, LookupError> {
        (**self).site_record(uri).await
    }

    async fn uri_at(
        &self,
        uri: &CanonicalUri,
        at: &Timestamp14,
    ) -> Result<(SiteId, CanonicalUri), LookupError> {
        (**self).uri_at(uri, at).await
    }
}

/// A canonicalizer that is never reachable. Useful for degraded-mode runs.
#[derive(Debug, Default, Clone, Copy)]
pub struct Unreachable;

#[async_trait]
impl CanonLookup for Unreachable {
    async fn current_uri(&self, _: &CanonicalUri) -> Result<(SiteId, CanonicalUri), LookupError> {
        Err(LookupError::Unavailable(
            "no canonicalizer configured".into(),
        ))
    }

    async fn site_record(&self, _: &CanonicalUri) -> Result<SiteRecord, LookupError> {
        Err(LookupError::Unavailable(
            "no canonicalizer configured".into(),
        ))
    }

    async fn uri_at(
        &self,
        _: &CanonicalUri,
        _: &Timestamp14,
    ) -> Result<(SiteId, CanonicalUri), LookupError> {
        Err(LookupError::Unavailable(
            "no canonicalizer configured".into(),
        ))
    }
}
