//! JSON bodies of the canonicalizer HTTP API.

use serde::{Deserialize, Serialize};

use crate::canonicalizer::{
    AliasPair, CollisionId, PendingCollision, SiteId, SiteRecord, TimelineEntry,
};
use crate::model::CanonicalUri;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurrentResponse {
    pub site_id: SiteId,
    pub current_uri: CanonicalUri,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineResponse {
    pub site_id: SiteId,
    pub aliases: Vec<AliasPair>,
    pub timeline: Vec<TimelineEntry>,
}

impl From<&SiteRecord> for TimelineResponse {
    fn from(site: &SiteRecord) -> Self {
        Self {
            site_id: site.site_id,
            aliases: site.aliases.iter().cloned().collect(),
            timeline: site.timeline.entries.clone(),
        }
    }
}

impl From<TimelineResponse> for SiteRecord {
    fn from(resp: TimelineResponse) -> Self {
        Self {
            site_id: resp.site_id,
            aliases: resp.aliases.into_iter().collect(),
            timeline: crate::canonicalizer::UriTimeline {
                entries: resp.timeline,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtResponse {
    pub site_id: SiteId,
    pub uri_at: CanonicalUri,
}

/// Raw observation as posted by clients; validated server side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObserveRequest {
    pub uri: String,
    pub source: String,
    pub alias: String,
    pub observed_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingResponse {
    pub pending: Vec<PendingCollision>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolveResponse {
    pub collision_id: CollisionId,
    pub site_id: SiteId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}
