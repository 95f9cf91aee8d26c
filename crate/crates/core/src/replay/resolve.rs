//! Shift-aware memento resolution.
//!
//! Order of attempts for a target URI-R at time T:
//! 1. ask the canonicalizer which address the site used at T and look up the
//!    target with that address substituted (path and query unchanged);
//! 2. look up the target exactly as requested;
//! 3. take the nearest capture of the target under any address in the site's
//!    timeline.
//!
//! When the era address equals the requested one, steps 1 and 2 coincide.
//! Without a canonicalizer only step 2 runs.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::lookup::{CanonLookup, LookupError};
use crate::model::{CanonicalUri, Timestamp14};
use crate::warc::{nearest, CdxEntry, CdxIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    EraSubstitution,
    Direct,
    Timeline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub step: Step,
    pub uris: Vec<String>,
    pub hit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResolutionTrace {
    pub target: String,
    pub timestamp: Timestamp14,
    /// The address the canonicalizer reported for the target at `timestamp`.
    pub era_uri: Option<String>,
    /// Why the canonicalizer was not used, if it was not.
    pub canon_status: Option<String>,
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolved {
    pub entry: CdxEntry,
    pub step: Step,
    pub trace: ResolutionTrace,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("{} not in archive", trace.target)]
    NotInArchive {
        tried: Vec<String>,
        trace: ResolutionTrace,
    },
}

/// Resolves a memento request against `index`.
pub async fn resolve_memento(
    index: &CdxIndex,
    canon: &dyn CanonLookup,
    target: &CanonicalUri,
    at: &Timestamp14,
) -> Result<Resolved, ResolveError> {
    let mut trace = ResolutionTrace {
        target: target.to_string(),
        timestamp: at.clone(),
        era_uri: None,
        canon_status: None,
        steps: Vec::new(),
    };
    let mut tried: BTreeSet<String> = BTreeSet::new();

    let era = if target.onion().is_some() {
        match canon.uri_at(&target.root(), at).await {
            Ok((_, era)) => {
                trace.era_uri = Some(era.to_string());
                era.onion().map(|a| target.with_onion(a))
            }
            Err(e) => {
                trace.canon_status = Some(status(&e));
                None
            }
        }
    } else {
        None
    };

    let mut attempt =
        |step: Step, uris: Vec<CanonicalUri>, trace: &mut ResolutionTrace| -> Option<Resolved> {
            for u in &uris {
                tried.insert(u.to_string());
            }
            let hit = nearest(
                uris.iter().flat_map(|u| index.lookup_capture(u, at).ok()),
                at,
            )
            .cloned();
            trace.steps.push(TraceStep {
                step,
                uris: uris.iter().map(ToString::to_string).collect(),
                hit: hit
                    .as_ref()
                    .map(|e| format!("{} {}", e.timestamp, e.original)),
            });
            hit.map(|entry| Resolved {
                entry,
                step,
                trace: trace.clone(),
            })
        };

    if let Some(era) = era.as_ref().filter(|e| *e != target) {
        if let Some(r) = attempt(Step::EraSubstitution, vec![era.clone()], &mut trace) {
            return Ok(r);
        }
    }
    if let Some(r) = attempt(Step::Direct, vec![target.clone()], &mut trace) {
        return Ok(r);
    }
    if era.is_some() {
        match canon.site_record(&target.root()).await {
            Ok(site) => {
                let mut uris: Vec<CanonicalUri> = Vec::new();
                for entry in &site.timeline.entries {
                    if let Some(addr) = entry.uri.onion() {
                        let u = target.with_onion(addr);
                        if !uris.contains(&u) {
                            uris.push(u);
                        }
                    }
                }
                if let Some(r) = attempt(Step::Timeline, uris, &mut trace) {
                    return Ok(r);
                }
            }
            Err(e) => trace.canon_status = Some(status(&e)),
        }
    }
    Err(ResolveError::NotInArchive {
        tried: tried.into_iter().collect(),
        trace,
    })
}

fn status(e: &LookupError) -> String {
    match e {
        LookupError::UnknownUri => "unknown_uri".into(),
        LookupError::Unavailable(detail) => format!("unavailable: {detail}"),
    }
}
