//! The onion canonicalizer.
//!
//! Ingests ⟨URI-R, source, alias, time⟩ observations and keeps, for each
//! site, the ordered list of onion URIs it has lived at. Identity is resolved
//! in this order:
//!
//! 1. the URI is the current URI of a site: the sighting is `Known` and the
//!    (source, alias) pair is merged into that site;
//! 2. the URI is new but the exact (source, alias) pair belongs to a site:
//!    the site has `Shift`ed to the new URI;
//! 3. both are new: a `NewSite` is created;
//! 4. anything ambiguous (a retired URI reappearing, a current URI reported
//!    under another site's pair, an alias reused by a different source) is
//!    held as a pending collision for an administrator. Nothing is mutated.

mod types;

use std::collections::{BTreeMap, BTreeSet, HashMap};

pub use types::*;

use crate::model::{CanonicalUri, OnionAddress, Timestamp14};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Canonicalizer {
    sites: BTreeMap<SiteId, SiteRecord>,
    by_address: HashMap<OnionAddress, SiteId>,
    by_alias: HashMap<AliasPair, SiteId>,
    by_alias_name: HashMap<String, BTreeSet<SiteId>>,
    collisions: BTreeMap<CollisionId, PendingCollision>,
    shifts: Vec<ShiftEvent>,
    next_site: u64,
    next_collision: u64,
}

impl Canonicalizer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_observation(&mut self, obs: Observation) -> Result<Outcome, CanonError> {
        obs.validate()?;
        let address = obs.address().clone();
        let pair = obs.alias_pair();
        let by_uri = self.by_address.get(&address).copied();
        let by_pair = self.by_alias.get(&pair).copied();
        let cross_source: BTreeSet<SiteId> = if by_uri.is_none() && by_pair.is_none() {
            self.by_alias_name
                .get(&obs.alias)
                .cloned()
                .unwrap_or_default()
        } else {
            BTreeSet::new()
        };

        for id in by_uri
            .iter()
            .chain(by_pair.iter())
            .chain(cross_source.iter())
        {
            self.check_not_older(*id, &obs.observed_at)?;
        }

        match (by_uri, by_pair) {
            (Some(owner), pair_owner) => {
                let is_current = self.sites[&owner].current_uri().onion() == Some(&address);
                if !is_current {
                    let candidates = [Some(owner), pair_owner].into_iter().flatten().collect();
                    Ok(self.raise(obs, candidates, CollisionReason::RetiredUri))
                } else if pair_owner.is_some_and(|p| p != owner) {
                    let candidates = [Some(owner), pair_owner].into_iter().flatten().collect();
                    Ok(self.raise(obs, candidates, CollisionReason::AliasBelongsToOtherSite))
                } else {
                    self.apply_known(owner, &obs);
                    Ok(Outcome::Known { site_id: owner })
                }
            }
            (None, Some(site_id)) => {
                self.check_can_shift(site_id, &obs.observed_at)?;
                Ok(Outcome::Shift(self.apply_shift(site_id, &obs)))
            }
            (None, None) if !cross_source.is_empty() => {
                Ok(self.raise(obs, cross_source, CollisionReason::CrossSourceAlias))
            }
            (None, None) => Ok(Outcome::NewSite {
                site_id: self.create_site(&obs),
            }),
        }
    }

    /// Applies an administrator's decision to a pending collision.
    pub fn resolve_collision(
        &mut self,
        collision_id: CollisionId,
        decision: &Resolution,
    ) -> Result<SiteId, CanonError> {
        let collision = self
            .collisions
            .get(&collision_id)
            .ok_or(CanonError::UnknownCollision(collision_id))?;
        if !collision.is_pending() {
            return Err(CanonError::AlreadyResolved(collision_id));
        }
        let obs = collision.observation.clone();
        let address = obs.address().clone();

        let (site_id, status) = match decision {
            Resolution::MergeInto { site_id } => {
                let site_id = *site_id;
                let site = self
                    .sites
                    .get(&site_id)
                    .ok_or(CanonError::UnknownSite(site_id))?;
                let already_current = site.current_uri().onion() == Some(&address);
                if !already_current {
                    self.check_address_free(&address, site_id)?;
                }
                self.check_alias_transferable(&obs.alias_pair(), site_id)?;
                if already_current {
                    self.apply_known(site_id, &obs);
                } else {
                    self.check_not_older(site_id, &obs.observed_at)?;
                    self.check_can_shift(site_id, &obs.observed_at)?;
                    self.apply_shift(site_id, &obs);
                }
                (site_id, CollisionStatus::ResolvedMerge { site_id })
            }
            Resolution::NewSite => {
                let next = SiteId(self.next_site + 1);
                self.check_address_free(&address, next)?;
                self.check_alias_transferable(&obs.alias_pair(), next)?;
                let site_id = self.create_site(&obs);
                (site_id, CollisionStatus::ResolvedNewSite { site_id })
            }
        };

        self.collisions
            .get_mut(&collision_id)
            .expect("checked above")
            .status = status;
        Ok(site_id)
    }

    /// The site owning `uri` (in any era) and its current URI-R.
    pub fn current_uri(&self, uri: &CanonicalUri) -> Result<(SiteId, CanonicalUri), CanonError> {
        let site = self.site_for(uri)?;
        Ok((site.site_id, site.current_uri().clone()))
    }

    /// The owning site's full record, whichever era's URI is asked about.
    pub fn timeline_for(&self, uri: &CanonicalUri) -> Result<&SiteRecord, CanonError> {
        self.site_for(uri)
    }

    /// The URI-R the owning site was reachable at when `at` occurred.
    pub fn uri_at(
        &self,
        uri: &CanonicalUri,
        at: &Timestamp14,
    ) -> Result<(SiteId, CanonicalUri), CanonError> {
        let site = self.site_for(uri)?;
        Ok((site.site_id, site.timeline.entry_at(at).uri.clone()))
    }

    /// Pending collisions, oldest first.
    pub fn list_pending(&self) -> Vec<&PendingCollision> {
        self.collisions
            .values()
            .filter(|c| c.is_pending())
            .collect()
    }

    pub fn collision(&self, id: CollisionId) -> Option<&PendingCollision> {
        self.collisions.get(&id)
    }

    pub fn site(&self, id: SiteId) -> Option<&SiteRecord> {
        self.sites.get(&id)
    }

    pub fn sites(&self) -> impl Iterator<Item = &SiteRecord> {
        self.sites.values()
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn shifts(&self) -> &[ShiftEvent] {
        &self.shifts
    }

    /// Every onion address with its current owner.
    pub fn addresses(&self) -> impl Iterator<Item = (&OnionAddress, SiteId)> {
        self.by_address.iter().map(|(a, s)| (a, *s))
    }

    fn site_for(&self, uri: &CanonicalUri) -> Result<&SiteRecord, CanonError> {
        uri.onion()
            .and_then(|addr| self.by_address.get(addr))
            .and_then(|id| self.sites.get(id))
            .ok_or_else(|| CanonError::UnknownUri(uri.to_string()))
    }

    fn check_not_older(&self, site_id: SiteId, at: &Timestamp14) -> Result<(), CanonError> {
        let latest = self.sites[&site_id].timeline.last_seen();
        if at < latest {
            return Err(CanonError::OutOfOrderObservation {
                site_id,
                observed_at: at.clone(),
                latest: latest.clone(),
            });
        }
        Ok(())
    }

    // A new entry must start strictly after the current one did.
    fn check_can_shift(&self, site_id: SiteId, at: &Timestamp14) -> Result<(), CanonError> {
        let current = self.sites[&site_id].timeline.current();
        if at <= &current.first_seen {
            return Err(CanonError::OutOfOrderObservation {
                site_id,
                observed_at: at.clone(),
                latest: current.first_seen.clone(),
            });
        }
        Ok(())
    }

    fn check_address_free(&self, address: &OnionAddress, target: SiteId) -> Result<(), CanonError> {
        if let Some(owner) = self.by_address.get(address).copied() {
            let owner_current = self.sites[&owner].current_uri().onion() == Some(address);
            if owner != target && owner_current {
                return Err(CanonError::AddressInUse {
                    address: address.clone(),
                    owner,
                });
            }
        }
        Ok(())
    }

    fn check_alias_transferable(&self, pair: &AliasPair, target: SiteId) -> Result<(), CanonError> {
        if let Some(owner) = self.by_alias.get(pair).copied() {
            if owner != target && self.sites[&owner].aliases.len() == 1 {
                return Err(CanonError::AliasInUse {
                    source_tag: pair.source.clone(),
                    alias: pair.alias.clone(),
                    owner,
                });
            }
        }
        Ok(())
    }

    fn raise(
        &mut self,
        obs: Observation,
        candidate_sites: BTreeSet<SiteId>,
        reason: CollisionReason,
    ) -> Outcome {
        self.next_collision += 1;
        let collision_id = CollisionId(self.next_collision);
        let raised_at = obs.observed_at.clone();
        self.collisions.insert(
            collision_id,
            PendingCollision {
                collision_id,
                observation: obs,
                candidate_sites,
                reason,
                raised_at,
                status: CollisionStatus::Pending,
            },
        );
        Outcome::Collision { collision_id }
    }

    fn create_site(&mut self, obs: &Observation) -> SiteId {
        self.next_site += 1;
        let site_id = SiteId(self.next_site);
        self.sites.insert(
            site_id,
            SiteRecord {
                site_id,
                aliases: BTreeSet::new(),
                timeline: UriTimeline::starting(obs.uri.clone(), obs.observed_at.clone()),
            },
        );
        self.by_address.insert(obs.address().clone(), site_id);
        self.attach_alias(site_id, obs.alias_pair());
        site_id
    }

    fn apply_known(&mut self, site_id: SiteId, obs: &Observation) {
        let site = self.sites.get_mut(&site_id).expect("site exists");
        let current = site.timeline.current_mut();
        if obs.observed_at > current.last_seen {
            current.last_seen = obs.observed_at.clone();
        }
        self.attach_alias(site_id, obs.alias_pair());
    }

    fn apply_shift(&mut self, site_id: SiteId, obs: &Observation) -> ShiftEvent {
        let site = self.sites.get_mut(&site_id).expect("site exists");
        let from_uri = site.current_uri().clone();
        site.timeline.entries.push(TimelineEntry {
            uri: obs.uri.clone(),
            first_seen: obs.observed_at.clone(),
            last_seen: obs.observed_at.clone(),
        });
        self.by_address.insert(obs.address().clone(), site_id);
        self.attach_alias(site_id, obs.alias_pair());
        let event = ShiftEvent {
            site_id,
            from_uri,
            to_uri: obs.uri.clone(),
            shifted_at: obs.observed_at.clone(),
        };
        self.shifts.push(event.clone());
        event
    }

    // Moves the pair to `site_id`, detaching it from any previous owner.
    fn attach_alias(&mut self, site_id: SiteId, pair: AliasPair) {
        if let Some(prev) = self.by_alias.insert(pair.clone(), site_id) {
            if prev != site_id {
                let prev_site = self.sites.get_mut(&prev).expect("alias owner exists");
                prev_site.aliases.remove(&pair);
                if !prev_site.aliases.iter().any(|p| p.alias == pair.alias) {
                    if let Some(set) = self.by_alias_name.get_mut(&pair.alias) {
                        set.remove(&prev);
                    }
                }
            }
        }
        self.by_alias_name
            .entry(pair.alias.clone())
            .or_default()
            .insert(site_id);
        self.sites
            .get_mut(&site_id)
            .expect("site exists")
            .aliases
            .insert(pair);
    }
}
