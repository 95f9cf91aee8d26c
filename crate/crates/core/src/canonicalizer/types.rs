use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CanonicalUri, OnionAddress, Timestamp14};

/// Opaque, monotonically issued site identity. Never derived from a URI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteId(pub u64);

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CollisionId(pub u64);

impl fmt::Display for CollisionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Where a site name came from and what that source calls it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AliasPair {
    pub source: String,
    pub alias: String,
}

impl AliasPair {
    pub fn new(source: impl Into<String>, alias: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            alias: alias.into(),
        }
    }
}

/// One sighting of a site: ⟨URI-R, source, alias, observation time⟩.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub uri: CanonicalUri,
    pub source: String,
    pub alias: String,
    pub observed_at: Timestamp14,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ObservationError {
    #[error("observation field `{0}` is empty")]
    EmptyField(&'static str),
    #[error("`{0}` is not an onion service URI")]
    NotOnion(String),
}

impl Observation {
    /// Builds a validated observation. The URI is reduced to its site root.
    pub fn new(
        uri: CanonicalUri,
        source: impl Into<String>,
        alias: impl Into<String>,
        observed_at: Timestamp14,
    ) -> Result<Self, ObservationError> {
        let obs = Self {
            uri: uri.root(),
            source: source.into().trim().to_string(),
            alias: alias.into().trim().to_string(),
            observed_at,
        };
        obs.validate()?;
        Ok(obs)
    }

    pub fn validate(&self) -> Result<(), ObservationError> {
        if self.source.is_empty() {
            return Err(ObservationError::EmptyField("source"));
        }
        if self.alias.is_empty() {
            return Err(ObservationError::EmptyField("alias"));
        }
        if self.uri.onion().is_none() {
            return Err(ObservationError::NotOnion(self.uri.to_string()));
        }
        Ok(())
    }

    pub fn address(&self) -> &OnionAddress {
        self.uri
            .onion()
            .expect("validated observations carry onion hosts")
    }

    pub fn alias_pair(&self) -> AliasPair {
        AliasPair::new(&self.source, &self.alias)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub uri: CanonicalUri,
    pub first_seen: Timestamp14,
    pub last_seen: Timestamp14,
}

/// The time-ordered URI-Rs a site has been observed under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UriTimeline {
    pub entries: Vec<TimelineEntry>,
}

impl UriTimeline {
    pub(crate) fn starting(uri: CanonicalUri, at: Timestamp14) -> Self {
        Self {
            entries: vec![TimelineEntry {
                uri,
                first_seen: at.clone(),
                last_seen: at,
            }],
        }
    }

    pub fn current(&self) -> &TimelineEntry {
        self.entries.last().expect("timelines are never empty")
    }

    pub(crate) fn current_mut(&mut self) -> &mut TimelineEntry {
        self.entries.last_mut().expect("timelines are never empty")
    }

    pub fn first(&self) -> &TimelineEntry {
        &self.entries[0]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The entry whose `[first_seen, next first_seen)` interval holds `at`,
    /// clamped to the first and last entries.
    pub fn entry_at(&self, at: &Timestamp14) -> &TimelineEntry {
        let idx = self.entries.partition_point(|e| e.first_seen <= *at);
        &self.entries[idx.saturating_sub(1)]
    }

    pub fn contains_address(&self, address: &OnionAddress) -> bool {
        self.entries.iter().any(|e| e.uri.onion() == Some(address))
    }

    pub fn last_seen(&self) -> &Timestamp14 {
        &self.current().last_seen
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub site_id: SiteId,
    pub aliases: BTreeSet<AliasPair>,
    pub timeline: UriTimeline,
}

impl SiteRecord {
    pub fn current_uri(&self) -> &CanonicalUri {
        &self.timeline.current().uri
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftEvent {
    pub site_id: SiteId,
    pub from_uri: CanonicalUri,
    pub to_uri: CanonicalUri,
    pub shifted_at: Timestamp14,
}

/// Why an observation was held for an administrator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionReason {
    /// The URI was a retired (non-current) URI of a site.
    RetiredUri,
    /// The URI is current for one site while the (source, alias) pair belongs to another.
    AliasBelongsToOtherSite,
    /// Unknown URI and pair, but the alias is in use under a different source.
    CrossSourceAlias,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum CollisionStatus {
    Pending,
    ResolvedMerge { site_id: SiteId },
    ResolvedNewSite { site_id: SiteId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingCollision {
    pub collision_id: CollisionId,
    pub observation: Observation,
    pub candidate_sites: BTreeSet<SiteId>,
    pub reason: CollisionReason,
    pub raised_at: Timestamp14,
    pub status: CollisionStatus,
}

impl PendingCollision {
    pub fn is_pending(&self) -> bool {
        self.status == CollisionStatus::Pending
    }
}

/// Result of ingesting one observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Outcome {
    Known { site_id: SiteId },
    NewSite { site_id: SiteId },
    Shift(ShiftEvent),
    Collision { collision_id: CollisionId },
}

impl Outcome {
    pub fn site_id(&self) -> Option<SiteId> {
        match self {
            Outcome::Known { site_id } | Outcome::NewSite { site_id } => Some(*site_id),
            Outcome::Shift(ev) => Some(ev.site_id),
            Outcome::Collision { .. } => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Outcome::Known { .. } => "known",
            Outcome::NewSite { .. } => "new_site",
            Outcome::Shift(_) => "shift",
            Outcome::Collision { .. } => "collision",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Resolution {
    MergeInto { site_id: SiteId },
    NewSite,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonError {
    #[error("observation at {observed_at} is older than {latest}, the latest ingested for site {site_id}")]
    OutOfOrderObservation {
        site_id: SiteId,
        observed_at: Timestamp14,
        latest: Timestamp14,
    },
    #[error(transparent)]
    InvalidObservation(#[from] ObservationError),
    #[error("`{0}` has never been observed")]
    UnknownUri(String),
    #[error("no collision with id {0}")]
    UnknownCollision(CollisionId),
    #[error("collision {0} is already resolved")]
    AlreadyResolved(CollisionId),
    #[error("no site with id {0}")]
    UnknownSite(SiteId),
    #[error("{address} is the current URI of site {owner}")]
    AddressInUse {
        address: OnionAddress,
        owner: SiteId,
    },
    #[error("alias {source_tag}/{alias} is the only alias of site {owner}")]
    AliasInUse {
        source_tag: String,
        alias: String,
        owner: SiteId,
    },
}
