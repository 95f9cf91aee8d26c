//! Shared test support: a brute-force canonicalizer oracle, random
//! observation logs, list-snapshot fixtures and WARC checks.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::ops::RangeInclusive;
use std::path::Path;

use onion_archive::canonicalizer::{
    CanonError, Canonicalizer, CollisionReason, Observation, Outcome,
};
use onion_archive::model::{CanonicalUri, OnionVersion, Timestamp14};
use onion_archive::sim::random_address;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn ts(s: &str) -> Timestamp14 {
    Timestamp14::parse(s).unwrap()
}

// ---------------------------------------------------------------------------
// Oracle

/// (site id, alias pairs, timeline of (uri, first_seen, last_seen))
pub type SiteView = (
    u64,
    BTreeSet<(String, String)>,
    Vec<(String, String, String)>,
);
/// (collision id, uri, source, alias, observed_at, candidates, reason)
pub type PendingView = (u64, String, String, String, String, BTreeSet<u64>, String);
/// (record id, WARC-Type, first-observed URI, block length)
type RecordView = (String, String, Option<String>, usize);

/// Engine-independent view of canonicalizer state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub sites: Vec<SiteView>,
    pub pending: Vec<PendingView>,
    /// (site id, from, to, at)
    pub shifts: Vec<(u64, String, String, String)>,
}

#[derive(Debug, Clone)]
struct Entry {
    uri: String,
    host: String,
    first: String,
    last: String,
}

#[derive(Debug, Clone)]
struct Site {
    id: u64,
    aliases: Vec<(String, String)>,
    timeline: Vec<Entry>,
}

/// Applies the identity rules by linear scans over plain vectors.
#[derive(Debug, Default)]
pub struct Oracle {
    sites: Vec<Site>,
    pending: Vec<PendingView>,
    shifts: Vec<(u64, String, String, String)>,
    issued_sites: u64,
    issued_collisions: u64,
}

fn host_of(uri: &CanonicalUri) -> String {
    uri.onion().expect("onion observation").to_string()
}

impl Oracle {
    /// Returns the outcome rendered as text, e.g. `known:3` or `error:out_of_order`.
    pub fn apply(&mut self, obs: &Observation) -> String {
        let host = host_of(&obs.uri);
        let pair = (obs.source.clone(), obs.alias.clone());
        let t = obs.observed_at.as_str().to_string();
        let uri_owner = self
            .sites
            .iter()
            .position(|s| s.timeline.iter().any(|e| e.host == host));
        let pair_owner = self.sites.iter().position(|s| s.aliases.contains(&pair));
        let cross: Vec<usize> = if uri_owner.is_none() && pair_owner.is_none() {
            (0..self.sites.len())
                .filter(|&i| self.sites[i].aliases.iter().any(|(_, a)| *a == obs.alias))
                .collect()
        } else {
            Vec::new()
        };
        let involved = uri_owner
            .iter()
            .chain(pair_owner.iter())
            .chain(cross.iter());
        for &i in involved {
            if t < self.sites[i].timeline.last().unwrap().last {
                return "error:out_of_order".into();
            }
        }
        match (uri_owner, pair_owner) {
            (Some(o), p) => {
                let current = &self.sites[o].timeline.last().unwrap().host;
                let reason = if *current != host {
                    Some("retired_uri")
                } else if p.is_some_and(|p| p != o) {
                    Some("alias_belongs_to_other_site")
                } else {
                    None
                };
                if let Some(reason) = reason {
                    let cands = [Some(o), p]
                        .into_iter()
                        .flatten()
                        .map(|i| self.sites[i].id)
                        .collect();
                    return self.raise(obs, cands, reason);
                }
                let site = &mut self.sites[o];
                let cur = site.timeline.last_mut().unwrap();
                if t > cur.last {
                    cur.last = t;
                }
                if !site.aliases.contains(&pair) {
                    site.aliases.push(pair);
                }
                format!("known:{}", site.id)
            }
            (None, Some(p)) => {
                let site = &mut self.sites[p];
                let cur = site.timeline.last().unwrap();
                if t <= cur.first {
                    return "error:out_of_order".into();
                }
                let from = cur.uri.clone();
                site.timeline.push(Entry {
                    uri: obs.uri.to_string(),
                    host,
                    first: t.clone(),
                    last: t.clone(),
                });
                let id = site.id;
                self.shifts.push((id, from.clone(), obs.uri.to_string(), t));
                format!("shift:{id}:{from}->{}", obs.uri)
            }
            (None, None) if !cross.is_empty() => {
                let cands = cross.iter().map(|&i| self.sites[i].id).collect();
                self.raise(obs, cands, "cross_source_alias")
            }
            (None, None) => {
                self.issued_sites += 1;
                let id = self.issued_sites;
                self.sites.push(Site {
                    id,
                    aliases: vec![pair],
                    timeline: vec![Entry {
                        uri: obs.uri.to_string(),
                        host,
                        first: t.clone(),
                        last: t,
                    }],
                });
                format!("new_site:{id}")
            }
        }
    }

    fn raise(&mut self, obs: &Observation, cands: BTreeSet<u64>, reason: &str) -> String {
        self.issued_collisions += 1;
        let id = self.issued_collisions;
        self.pending.push((
            id,
            obs.uri.to_string(),
            obs.source.clone(),
            obs.alias.clone(),
            obs.observed_at.to_string(),
            cands,
            reason.into(),
        ));
        format!("collision:{id}")
    }

    pub fn state(&self) -> State {
        let mut sites: Vec<_> = self
            .sites
            .iter()
            .map(|s| {
                (
                    s.id,
                    s.aliases.iter().cloned().collect(),
                    s.timeline
                        .iter()
                        .map(|e| (e.uri.clone(), e.first.clone(), e.last.clone()))
                        .collect(),
                )
            })
            .collect();
        sites.sort_by_key(|s: &(u64, _, _)| s.0);
        State {
            sites,
            pending: self.pending.clone(),
            shifts: self.shifts.clone(),
        }
    }

    fn site_of(&self, host: &str) -> Option<&Site> {
        self.sites
            .iter()
            .find(|s| s.timeline.iter().any(|e| e.host == host))
    }

    /// (site id, current uri) by linear scan.
    pub fn current(&self, uri: &CanonicalUri) -> Option<(u64, String)> {
        let s = self.site_of(&host_of(uri))?;
        Some((s.id, s.timeline.last().unwrap().uri.clone()))
    }

    /// (site id, uri at `at`) by scanning every interval.
    pub fn at(&self, uri: &CanonicalUri, at: &Timestamp14) -> Option<(u64, String)> {
        let s = self.site_of(&host_of(uri))?;
        let at = at.as_str();
        let n = s.timeline.len();
        for (i, e) in s.timeline.iter().enumerate() {
            let starts = i == 0 || e.first.as_str() <= at;
            let ends = i + 1 == n || at < s.timeline[i + 1].first.as_str();
            if starts && ends {
                return Some((s.id, e.uri.clone()));
            }
        }
        unreachable!("intervals cover all time")
    }
}

pub fn render_outcome(result: &Result<Outcome, CanonError>) -> String {
    match result {
        Ok(Outcome::Known { site_id }) => format!("known:{site_id}"),
        Ok(Outcome::NewSite { site_id }) => format!("new_site:{site_id}"),
        Ok(Outcome::Shift(ev)) => format!("shift:{}:{}->{}", ev.site_id, ev.from_uri, ev.to_uri),
        Ok(Outcome::Collision { collision_id }) => format!("collision:{collision_id}"),
        Err(CanonError::OutOfOrderObservation { .. }) => "error:out_of_order".into(),
        Err(e) => format!("error:{e}"),
    }
}

pub fn engine_state(engine: &Canonicalizer) -> State {
    let sites = engine
        .sites()
        .map(|s| {
            (
                s.site_id.0,
                s.aliases
                    .iter()
                    .map(|p| (p.source.clone(), p.alias.clone()))
                    .collect(),
                s.timeline
                    .entries
                    .iter()
                    .map(|e| {
                        (
                            e.uri.to_string(),
                            e.first_seen.to_string(),
                            e.last_seen.to_string(),
                        )
                    })
                    .collect(),
            )
        })
        .collect();
    let pending = engine
        .list_pending()
        .into_iter()
        .map(|c| {
            let reason = match c.reason {
                CollisionReason::RetiredUri => "retired_uri",
                CollisionReason::AliasBelongsToOtherSite => "alias_belongs_to_other_site",
                CollisionReason::CrossSourceAlias => "cross_source_alias",
            };
            (
                c.collision_id.0,
                c.observation.uri.to_string(),
                c.observation.source.clone(),
                c.observation.alias.clone(),
                c.observation.observed_at.to_string(),
                c.candidate_sites.iter().map(|s| s.0).collect(),
                reason.to_string(),
            )
        })
        .collect();
    let shifts = engine
        .shifts()
        .iter()
        .map(|e| {
            (
                e.site_id.0,
                e.from_uri.to_string(),
                e.to_uri.to_string(),
                e.shifted_at.to_string(),
            )
        })
        .collect();
    State {
        sites,
        pending,
        shifts,
    }
}

// ---------------------------------------------------------------------------
// Random observation logs

const SOURCES: [&str; 3] = ["github", "wiki", "forum"];

struct TruthSite {
    name: String,
    current: String,
    retired: Vec<String>,
    pairs: Vec<(String, String)>,
}

fn onion_root<R: Rng>(rng: &mut R) -> String {
    let v = if rng.gen_bool(0.5) {
        OnionVersion::V2
    } else {
        OnionVersion::V3
    };
    let scheme = if rng.gen_bool(0.7) { "http" } else { "https" };
    format!("{scheme}://{}/", random_address(rng, v))
}

fn observation(uri: &str, pair: &(String, String), at: &Timestamp14) -> Observation {
    Observation::new(
        CanonicalUri::parse(uri).unwrap(),
        &pair.0,
        &pair.1,
        at.clone(),
    )
    .unwrap()
}

/// A random log over at most `max_sites` sites, with a length drawn from
/// `n_obs`. Each step shifts a site with probability `shift_p`; about one
/// step in ten injects a collision or an alias merge, and a few go back in
/// time.
pub fn random_log<R: Rng>(
    rng: &mut R,
    max_sites: usize,
    n_obs: RangeInclusive<usize>,
    shift_p: f64,
) -> Vec<Observation> {
    let n_sites = rng.gen_range(1..=max_sites);
    let n_obs = rng.gen_range(n_obs);
    let mut t = ts("20190101000000");
    let mut truth: Vec<TruthSite> = Vec::new();
    let mut log = Vec::with_capacity(n_obs);
    while log.len() < n_obs {
        match rng.gen_range(0..10) {
            0 => {}
            1..=7 => t = t.plus_seconds(rng.gen_range(1..3 * 86_400)),
            _ => t = t.plus_seconds(rng.gen_range(1..60)),
        }
        if truth.len() < n_sites && (truth.is_empty() || rng.gen_bool(0.3)) {
            let name = format!("site-{}", truth.len());
            let pair = (SOURCES.choose(rng).unwrap().to_string(), name.clone());
            let uri = onion_root(rng);
            log.push(observation(&uri, &pair, &t));
            truth.push(TruthSite {
                name,
                current: uri,
                retired: Vec::new(),
                pairs: vec![pair],
            });
            continue;
        }
        let i = rng.gen_range(0..truth.len());
        let roll: f64 = rng.gen();
        if roll < shift_p {
            let uri = onion_root(rng);
            let s = &mut truth[i];
            let pair = s.pairs.choose(rng).unwrap().clone();
            log.push(observation(&uri, &pair, &t));
            s.retired.push(std::mem::replace(&mut s.current, uri));
        } else if roll < shift_p + 0.06 {
            // Collision injections.
            let j = rng.gen_range(0..truth.len());
            match rng.gen_range(0..3) {
                0 if !truth[i].retired.is_empty() => {
                    let s = &truth[i];
                    let uri = s.retired.choose(rng).unwrap().clone();
                    log.push(observation(&uri, &s.pairs[0], &t));
                }
                1 if j != i => {
                    log.push(observation(&truth[i].current, &truth[j].pairs[0], &t));
                }
                _ => {
                    let s = &truth[i];
                    let used: Vec<&str> = s.pairs.iter().map(|p| p.0.as_str()).collect();
                    if let Some(src) = SOURCES.iter().find(|x| !used.contains(x)) {
                        let uri = onion_root(rng);
                        log.push(observation(&uri, &(src.to_string(), s.name.clone()), &t));
                    }
                }
            }
        } else if roll < shift_p + 0.10 {
            // Another source lists the site under its own name.
            let s = &mut truth[i];
            let pair = (
                SOURCES.choose(rng).unwrap().to_string(),
                format!("{} ({})", s.name, s.pairs.len()),
            );
            log.push(observation(&s.current, &pair, &t));
            if !s.pairs.contains(&pair) {
                s.pairs.push(pair);
            }
        } else if roll < shift_p + 0.13 {
            let back = t.plus_seconds(-rng.gen_range(1..5 * 86_400));
            let s = &truth[i];
            log.push(observation(&s.current, &s.pairs[0], &back));
        } else {
            let s = &truth[i];
            log.push(observation(&s.current, s.pairs.choose(rng).unwrap(), &t));
        }
    }
    log
}

/// Runs `log` through the engine and the oracle. Returns outcome counts by
/// kind, or a description of the first disagreement.
pub fn compare_with_oracle<R: Rng>(
    rng: &mut R,
    log: &[Observation],
) -> Result<BTreeMap<String, usize>, String> {
    let mut engine = Canonicalizer::new();
    let mut oracle = Oracle::default();
    let mut kinds = BTreeMap::new();
    for (i, obs) in log.iter().enumerate() {
        let got = render_outcome(&engine.register_observation(obs.clone()));
        let want = oracle.apply(obs);
        if got != want {
            return Err(format!("step {i}: engine {got}, oracle {want}"));
        }
        let kind = got.split(':').next().unwrap_or_default();
        let kind = if kind == "error" {
            got.clone()
        } else {
            kind.to_string()
        };
        *kinds.entry(kind).or_insert(0) += 1;
    }
    let (got, want) = (engine_state(&engine), oracle.state());
    if got != want {
        return Err(format!(
            "final state differs:\nengine {got:?}\noracle {want:?}"
        ));
    }
    let first = log
        .first()
        .map(|o| o.observed_at.clone())
        .unwrap_or_else(|| ts("20190101000000"));
    let last = log
        .iter()
        .map(|o| o.observed_at.clone())
        .max()
        .unwrap_or_else(|| first.clone());
    let span = first.seconds_until(&last).max(1);
    for obs in log {
        let got = engine
            .current_uri(&obs.uri)
            .ok()
            .map(|(s, u)| (s.0, u.to_string()));
        if got != oracle.current(&obs.uri) {
            return Err(format!("current_uri({}) differs", obs.uri));
        }
        for _ in 0..3 {
            let at = first.plus_seconds(rng.gen_range(-86_400..span + 86_400));
            let got = engine
                .uri_at(&obs.uri, &at)
                .ok()
                .map(|(s, u)| (s.0, u.to_string()));
            if got != oracle.at(&obs.uri, &at) {
                return Err(format!("uri_at({}, {at}) differs", obs.uri));
            }
        }
    }
    Ok(kinds)
}

// ---------------------------------------------------------------------------
// List snapshot fixtures

pub struct ListFixture {
    /// (commit time, CSV text), oldest first.
    pub commits: Vec<(Timestamp14, String)>,
    pub sites: usize,
    pub shifted: usize,
}

/// Commit history of a curated list: `sites` entries added over time, some
/// removed, one formatting rewrite, and `shifted` URI changes spread over
/// `shift_commits` of the `n_commits` commits. Each shifted site changes once.
pub fn list_history<R: Rng>(
    rng: &mut R,
    sites: usize,
    shifted: usize,
    months: i64,
    n_commits: usize,
    shift_commits: usize,
) -> ListFixture {
    assert!(shift_commits <= n_commits - 2 && shifted >= shift_commits);
    let start = ts("20190101000000");
    let span = months * 30 * 86_400;
    let mut times: Vec<i64> = (0..n_commits).map(|_| rng.gen_range(0..span)).collect();
    times.sort();
    times.dedup();
    while times.len() < n_commits {
        times.push(times.last().unwrap() + 3_600);
    }
    // Sites appear at commit 0 or later, never in the last two commits.
    let added: Vec<usize> = (0..sites)
        .map(|i| {
            if i < sites * 3 / 4 {
                0
            } else {
                rng.gen_range(1..n_commits - 2)
            }
        })
        .collect();
    // Shift commits are chosen after commit 1; the format rewrite is another commit.
    let mut candidates: Vec<usize> = (2..n_commits).collect();
    candidates.shuffle(rng);
    let shift_at: Vec<usize> = candidates[..shift_commits].to_vec();
    let format_commit = candidates[shift_commits];
    let mut order: Vec<usize> = (0..sites).collect();
    order.shuffle(rng);
    let mut change: Vec<Option<usize>> = vec![None; sites];
    let mut assigned = 0;
    for (k, &site) in order.iter().enumerate() {
        if assigned == shifted {
            break;
        }
        // Round-robin so every shift commit carries at least one change.
        let commit = shift_at[k % shift_commits];
        if added[site] < commit {
            change[site] = Some(commit);
            assigned += 1;
        }
    }
    assert_eq!(assigned, shifted, "fixture could not place every change");
    // A few unshifted sites are dropped from the list late on.
    let removed: Vec<Option<usize>> = (0..sites)
        .map(|i| (change[i].is_none() && rng.gen_bool(0.03)).then(|| n_commits - 1))
        .collect();
    let before: Vec<String> = (0..sites)
        .map(|_| random_address(rng, OnionVersion::V2).to_string())
        .collect();
    let after: Vec<String> = (0..sites)
        .map(|_| random_address(rng, OnionVersion::V3).to_string())
        .collect();

    let mut commits = Vec::new();
    for (c, &offset) in times.iter().enumerate() {
        let mut csv = String::from("alias,onion_uri,category\n");
        for i in 0..sites {
            if added[i] > c || removed[i].is_some_and(|r| c >= r) {
                continue;
            }
            let host = match change[i] {
                Some(at) if c >= at => &after[i],
                _ => &before[i],
            };
            let uri = if c >= format_commit {
                host.to_uppercase()
            } else {
                format!("https://{host}")
            };
            csv.push_str(&format!("\"Site {i}, Inc.\",{uri},news\n"));
        }
        commits.push((start.plus_seconds(offset), csv));
    }
    ListFixture {
        commits,
        sites,
        shifted,
    }
}

// ---------------------------------------------------------------------------
// WARC checks

#[derive(Debug, Default)]
pub struct WarcCheck {
    pub records: usize,
    pub responses: usize,
    /// (target uri, first observed uri) of each response record.
    pub first_observed: Vec<(String, String)>,
}

/// Reads `path` with this crate's reader and with the `warc` crate, and
/// checks that both agree record by record.
pub fn check_warc(path: &Path) -> Result<WarcCheck, String> {
    use onion_archive::warc::{read_records, RecordKind, FIRST_OBSERVED_FIELD};
    use warc::WarcReader;

    let mut ours = Vec::new();
    for r in read_records(path).map_err(|e| e.to_string())? {
        let r = r.map_err(|e| format!("{}: {e}", path.display()))?;
        for field in ["WARC-Record-ID", "WARC-Date", "WARC-Type", "Content-Length"] {
            if r.headers.get(field).is_none() {
                return Err(format!("record {} lacks {field}", r.record_id));
            }
        }
        if let Some(d) = r.headers.get("WARC-Block-Digest") {
            if *d != independent_digest(&r.block) {
                return Err(format!("block digest of {} is wrong", r.record_id));
            }
        }
        ours.push(r);
    }

    let gz = path.extension().is_some_and(|e| e == "gz");
    let theirs: Vec<RecordView> = if gz {
        let reader = WarcReader::from_path_gzip(path).map_err(|e| e.to_string())?;
        collect_third_party(reader.iter_records())?
    } else {
        // `WarcReader::from_path` opens with `create(true)` and no write
        // access, which the OS rejects, so open the file here.
        let file = std::fs::File::open(path).map_err(|e| e.to_string())?;
        collect_third_party(WarcReader::new(std::io::BufReader::new(file)).iter_records())?
    };
    if theirs.len() != ours.len() {
        return Err(format!(
            "{}: third-party reader saw {} records, ours {}",
            path.display(),
            theirs.len(),
            ours.len()
        ));
    }
    let mut check = WarcCheck::default();
    for (o, (id, kind, first, len)) in ours.iter().zip(&theirs) {
        let first_ours = o.headers.get(FIRST_OBSERVED_FIELD).map(str::to_string);
        if *id != o.record_id
            || *first != first_ours
            || *len != o.block.len()
            || !kind.eq_ignore_ascii_case(o.headers.get("WARC-Type").unwrap())
        {
            return Err(format!("record {} differs between readers", o.record_id));
        }
        check.records += 1;
        if o.kind == RecordKind::Response {
            check.responses += 1;
            check.first_observed.push((
                o.target_uri.clone().unwrap_or_default(),
                first_ours.ok_or_else(|| {
                    format!("response {} lacks {FIRST_OBSERVED_FIELD}", o.record_id)
                })?,
            ));
        }
    }
    Ok(check)
}

fn collect_third_party<I>(iter: I) -> Result<Vec<RecordView>, String>
where
    I: Iterator<Item = Result<warc::Record<warc::BufferedBody>, warc::Error>>,
{
    let mut out = Vec::new();
    for rec in iter {
        let rec = rec.map_err(|e| format!("third-party reader: {e}"))?;
        let first = rec
            .header(warc::WarcHeader::Unknown(
                "warc-x-first-observed-uri".into(),
            ))
            .map(|v| v.to_string());
        out.push((
            rec.warc_id().to_string(),
            rec.warc_type().to_string(),
            first,
            rec.content_length() as usize,
        ));
    }
    Ok(out)
}

fn independent_digest(block: &[u8]) -> String {
    use sha1::{Digest, Sha1};
    format!(
        "sha1:{}",
        data_encoding::BASE32.encode(&Sha1::digest(block))
    )
}
