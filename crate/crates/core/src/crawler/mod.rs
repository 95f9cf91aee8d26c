//! Archival crawler: canonicalizer-aware frontier, scope, robots, politeness
//! and SOCKS5 fetching, with every exchange handed to the WARC store.
//!
//! The crawl is breadth-first and level-synchronous. Each level's targets are
//! resolved against the canonicalizer as they are popped, fetched by a bounded
//! worker pool, and then written in frontier order by a single writer, so the
//! output does not depend on fetch completion order.

mod fetch;
mod frontier;
mod links;
mod robots;
mod scope;
pub mod socks;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

pub use fetch::{
    FetchConfig, FetchError, FetchLogEntry, FetchResult, Fetcher, RequestKind, RobotsMode,
    MAX_REDIRECTS,
};
pub use frontier::{consult, next_target, Frontier, FrontierEntry, Target, TargetFlag};
pub use links::{extract_links, is_html, resolve_reference};
pub(crate) use links::{reference_attr, LINK_SELECTOR};
pub use robots::RobotsRules;
pub use scope::{in_scope, LinkRole, ScopeHost, ScopePolicy};

use crate::clock::Clock;
use crate::lookup::{CanonLookup, LookupError};
use crate::model::CanonicalUri;
use crate::warc::{CdxEntry, Provenance, StoreConfig, StoreError, WarcStore};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyEndpoint {
    pub host: String,
    pub port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Politeness {
    pub delay_ms: u64,
    pub robots: RobotsMode,
}

impl Default for Politeness {
    fn default() -> Self {
        Self {
            delay_ms: 1000,
            robots: RobotsMode::Obey,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub timeout_secs: u64,
    pub max_response_bytes: u64,
    pub user_agent: String,
}

impl Default for Limits {
    fn default() -> Self {
        let fetch = FetchConfig::default();
        Self {
            timeout_secs: fetch.timeout.as_secs(),
            max_response_bytes: fetch.max_response_bytes,
            user_agent: fetch.user_agent,
        }
    }
}

/// A crawl job, loadable from TOML.
///
/// ```toml
/// name = "news"
/// seeds = ["http://bfnews3u2ox4m4ty.onion/"]
/// max_depth = 3
/// max_pages_per_host = 1000
/// workers = 4
/// output_dir = "warcs"
/// gzip = false
/// canonicalizer = "http://127.0.0.1:8700"
///
/// [scope]
/// allowed_hosts = ["bfnews3u2ox4m4ty.onion"]
/// allow_embedded_cross_host = false
///
/// [politeness]
/// delay_ms = 1000
/// robots = "obey"
///
/// [proxy]
/// host = "127.0.0.1"
/// port = 9050
///
/// [limits]
/// timeout_secs = 60
/// max_response_bytes = 67108864
/// user_agent = "onion-archive/0.1.0"
/// ```
///
/// `scope.allowed_hosts` defaults to the seeds' hosts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlJob {
    #[serde(default = "default_name")]
    pub name: String,
    pub seeds: Vec<CanonicalUri>,
    #[serde(default)]
    pub scope: ScopePolicy,
    #[serde(default)]
    pub politeness: Politeness,
    #[serde(default)]
    pub proxy: Option<ProxyEndpoint>,
    #[serde(default)]
    pub max_depth: u32,
    #[serde(default = "default_max_pages")]
    pub max_pages_per_host: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub gzip: bool,
    #[serde(default)]
    pub canonicalizer: Option<String>,
}

fn default_name() -> String {
    "crawl".into()
}

fn default_max_pages() -> usize {
    10_000
}

fn default_workers() -> usize {
    4
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("warcs")
}

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("invalid crawl job: {0}")]
    InvalidJob(String),
    #[error("warc store failure: {0}")]
    StoreFailure(#[from] StoreError),
}

impl CrawlJob {
    pub fn new(name: impl Into<String>, seeds: Vec<CanonicalUri>) -> Self {
        let scope = ScopePolicy {
            allowed_hosts: seeds.iter().map(ScopeHost::of).collect(),
            allow_embedded_cross_host: false,
        };
        Self {
            name: name.into(),
            seeds,
            scope,
            politeness: Politeness::default(),
            proxy: None,
            max_depth: 0,
            max_pages_per_host: default_max_pages(),
            workers: default_workers(),
            limits: Limits::default(),
            output_dir: default_output_dir(),
            gzip: false,
            canonicalizer: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, CrawlError> {
        let mut job: CrawlJob =
            toml::from_str(text).map_err(|e| CrawlError::InvalidJob(e.to_string()))?;
        if job.scope.allowed_hosts.is_empty() {
            job.scope.allowed_hosts = job.seeds.iter().map(ScopeHost::of).collect();
        }
        job.validate()?;
        Ok(job)
    }

    pub fn validate(&self) -> Result<(), CrawlError> {
        if self.seeds.is_empty() {
            return Err(CrawlError::InvalidJob("no seeds".into()));
        }
        if self.workers == 0 {
            return Err(CrawlError::InvalidJob("workers must be at least 1".into()));
        }
        if let Some(seed) = self.seeds.iter().find(|s| !self.scope.allows_host(s)) {
            return Err(CrawlError::InvalidJob(format!(
                "seed {seed} is outside allowed_hosts"
            )));
        }
        Ok(())
    }

    fn fetch_config(&self, proxy: Option<SocketAddr>) -> FetchConfig {
        FetchConfig {
            proxy,
            timeout: Duration::from_secs(self.limits.timeout_secs.max(1)),
            max_response_bytes: self.limits.max_response_bytes,
            user_agent: self.limits.user_agent.clone(),
            delay: Duration::from_millis(self.politeness.delay_ms),
            robots: self.politeness.robots,
        }
    }

    pub fn store_config(&self) -> StoreConfig {
        let mut cfg = StoreConfig::new(&self.output_dir, &self.name);
        cfg.gzip = self.gzip;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HostRewrite {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrawlErrorEntry {
    pub uri: String,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaptureSummary {
    pub uri: String,
    pub status: u16,
    pub timestamp: String,
    pub depth: u32,
    pub first_observed: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CrawlReport {
    /// HTTP exchanges completed, redirect hops included.
    pub fetched: usize,
    /// Exchanges written to WARC.
    pub captured: usize,
    pub skipped_scope: usize,
    pub skipped_page_limit: usize,
    pub robots_denied: usize,
    pub shifted_targets: usize,
    pub canon_unavailable: usize,
    pub errors: usize,
    pub rewrites: Vec<HostRewrite>,
    pub error_log: Vec<CrawlErrorEntry>,
    pub captures: Vec<CaptureSummary>,
    /// Hosts the crawler was allowed to contact, including rewritten ones.
    pub effective_scope: Vec<String>,
    pub fetch_log: Vec<FetchLogEntry>,
    /// Names resolved by this process rather than the proxy.
    pub local_resolutions: Vec<String>,
    pub warc_files: Vec<PathBuf>,
    #[serde(skip)]
    pub index: Vec<CdxEntry>,
}

struct Outcome {
    target: Target,
    result: Result<Vec<FetchResult>, FetchError>,
    /// Set when an unreachable host was re-resolved and retried.
    retried_as: Option<CanonicalUri>,
}

pub struct Crawler {
    job: CrawlJob,
    fetcher: Arc<Fetcher>,
    canon: Arc<dyn CanonLookup>,
    clock: Arc<dyn Clock>,
}

impl Crawler {
    /// Resolves the proxy endpoint and prepares the fetcher.
    pub async fn new(
        job: CrawlJob,
        canon: Arc<dyn CanonLookup>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, CrawlError> {
        job.validate()?;
        let proxy = match &job.proxy {
            Some(p) => Some(
                tokio::net::lookup_host((p.host.as_str(), p.port))
                    .await
                    .ok()
                    .and_then(|mut addrs| addrs.next())
                    .ok_or_else(|| {
                        CrawlError::InvalidJob(format!(
                            "cannot resolve proxy {}:{}",
                            p.host, p.port
                        ))
                    })?,
            ),
            None => None,
        };
        let fetcher = Arc::new(Fetcher::new(job.fetch_config(proxy), clock.clone()));
        Ok(Self {
            job,
            fetcher,
            canon,
            clock,
        })
    }

    pub fn fetcher(&self) -> &Fetcher {
        &self.fetcher
    }

    /// Runs the crawl, writing into a store created from the job's output settings.
    pub async fn run(&self) -> Result<CrawlReport, CrawlError> {
        let mut store = WarcStore::new(self.job.store_config())?;
        let mut report = self.run_with(&mut store).await?;
        report.warc_files = store.finish()?.into_iter().map(|(p, _)| p).collect();
        Ok(report)
    }

    /// Runs the crawl into `store`. The caller finishes the store.
    pub async fn run_with(&self, store: &mut WarcStore) -> Result<CrawlReport, CrawlError> {
        let job = &self.job;
        let mut report = CrawlReport::default();
        let mut scope = job.scope.clone();
        let mut frontier = Frontier::new();
        let mut fetched: BTreeSet<CanonicalUri> = BTreeSet::new();
        let mut pages_per_host: HashMap<ScopeHost, usize> = HashMap::new();
        let mut provenance: BTreeMap<String, Option<Provenance>> = BTreeMap::new();

        for seed in &job.seeds {
            frontier.push(FrontierEntry {
                uri: seed.clone(),
                depth: 0,
                discovered_via: None,
                enqueued_at: self.clock.peek(),
                role: LinkRole::Navigation,
            });
        }

        let mut depth = 0;
        while !frontier.is_empty() {
            // Pages of this level first, then the requisites they reference.
            let mut batch = frontier.drain_level(depth);
            while !batch.is_empty() {
                let mut targets = Vec::new();
                for entry in batch {
                    let target = consult(entry, self.canon.as_ref()).await;
                    match target.flag {
                        Some(TargetFlag::CanonUnavailable) => report.canon_unavailable += 1,
                        Some(TargetFlag::UnknownUri) | None => {}
                    }
                    if let Some(from) = &target.rewritten_from {
                        report.shifted_targets += 1;
                        report.rewrites.push(HostRewrite {
                            from: from.to_string(),
                            to: target.entry.uri.to_string(),
                        });
                        scope.allow(&target.entry.uri);
                    }
                    let uri = &target.entry.uri;
                    if !in_scope(uri, &scope, target.entry.role) {
                        report.skipped_scope += 1;
                        continue;
                    }
                    if !fetched.insert(uri.clone()) {
                        continue;
                    }
                    let host = ScopeHost::of(uri);
                    let count = pages_per_host.entry(host).or_default();
                    if *count >= job.max_pages_per_host {
                        report.skipped_page_limit += 1;
                        continue;
                    }
                    *count += 1;
                    targets.push(target);
                }

                let outcomes = self.fetch_all(targets).await;
                let mut requisites = Vec::new();
                for outcome in outcomes {
                    if let Some(retry) = &outcome.retried_as {
                        report.shifted_targets += 1;
                        report.rewrites.push(HostRewrite {
                            from: outcome.target.entry.uri.to_string(),
                            to: retry.to_string(),
                        });
                        scope.allow(retry);
                    }
                    let entry = &outcome.target.entry;
                    let hops = match outcome.result {
                        Ok(hops) => hops,
                        Err(FetchError::RobotsDenied(_)) => {
                            report.robots_denied += 1;
                            continue;
                        }
                        Err(FetchError::TooManyRedirects { hops }) => {
                            report.errors += 1;
                            report.error_log.push(CrawlErrorEntry {
                                uri: entry.uri.to_string(),
                                kind: "too_many_redirects".into(),
                                detail: format!("gave up after {} hops", hops.len()),
                            });
                            self.capture_hops(
                                store,
                                &hops,
                                entry.depth,
                                &mut fetched,
                                &mut provenance,
                                &mut report,
                            )
                            .await?;
                            continue;
                        }
                        Err(e) => {
                            report.errors += 1;
                            report.error_log.push(CrawlErrorEntry {
                                uri: entry.uri.to_string(),
                                kind: e.kind().into(),
                                detail: e.to_string(),
                            });
                            continue;
                        }
                    };
                    self.capture_hops(
                        store,
                        &hops,
                        entry.depth,
                        &mut fetched,
                        &mut provenance,
                        &mut report,
                    )
                    .await?;

                    let Some(last) = hops.last() else { continue };
                    if entry.role == LinkRole::Embedded {
                        continue;
                    }
                    let mut discovered = extract_links(&last.body, last.content_type(), &last.uri);
                    if let Some(location) = last.redirect_target() {
                        discovered.push((location, LinkRole::Navigation));
                    }
                    for (uri, role) in discovered {
                        let child_depth = match role {
                            LinkRole::Navigation => entry.depth + 1,
                            LinkRole::Embedded => entry.depth,
                        };
                        if child_depth > job.max_depth
                            || frontier.has_seen(&uri)
                            || fetched.contains(&uri)
                        {
                            continue;
                        }
                        if !in_scope(&uri, &scope, role) {
                            frontier.mark_seen(&uri);
                            report.skipped_scope += 1;
                            continue;
                        }
                        let child = FrontierEntry {
                            uri,
                            depth: child_depth,
                            discovered_via: Some(last.uri.clone()),
                            enqueued_at: self.clock.peek(),
                            role,
                        };
                        match role {
                            LinkRole::Embedded => {
                                if frontier.mark_seen(&child.uri) {
                                    requisites.push(child);
                                }
                            }
                            LinkRole::Navigation => {
                                frontier.push(child);
                            }
                        }
                    }
                }
                batch = requisites;
            }
            depth += 1;
            if depth > job.max_depth {
                break;
            }
        }

        report.effective_scope = scope
            .allowed_hosts
            .iter()
            .map(|h| String::from(h.clone()))
            .collect();
        report.fetch_log = self.fetcher.timing_log();
        report.local_resolutions = self.fetcher.local_resolutions();
        Ok(report)
    }

    async fn fetch_all(&self, targets: Vec<Target>) -> Vec<Outcome> {
        let permits = Arc::new(Semaphore::new(self.job.workers));
        let mut tasks = Vec::with_capacity(targets.len());
        for target in targets {
            // Acquiring here starts fetches in frontier order.
            let permit = permits
                .clone()
                .acquire_owned()
                .await
                .expect("semaphore never closed");
            let fetcher = self.fetcher.clone();
            let canon = self.canon.clone();
            tasks.push(tokio::spawn(async move {
                let _permit = permit;
                let result = fetcher.fetch(&target.entry.uri).await;
                if let Err(FetchError::HostUnreachable { .. }) = &result {
                    // The service may have moved since the handshake.
                    if let Some(moved) = relocated(&target.entry.uri, canon.as_ref()).await {
                        let result = fetcher.fetch(&moved).await;
                        return Outcome {
                            target,
                            result,
                            retried_as: Some(moved),
                        };
                    }
                }
                Outcome {
                    target,
                    result,
                    retried_as: None,
                }
            }));
        }
        let mut outcomes = Vec::with_capacity(tasks.len());
        for task in tasks {
            outcomes.push(task.await.expect("fetch task panicked"));
        }
        outcomes
    }

    async fn capture_hops(
        &self,
        store: &mut WarcStore,
        hops: &[FetchResult],
        depth: u32,
        fetched: &mut BTreeSet<CanonicalUri>,
        provenance: &mut BTreeMap<String, Option<Provenance>>,
        report: &mut CrawlReport,
    ) -> Result<(), CrawlError> {
        for hop in hops {
            report.fetched += 1;
            fetched.insert(hop.uri.clone());
            let key = hop.uri.root().to_string();
            if !provenance.contains_key(&key) {
                let p = self.provenance_for(&hop.uri).await;
                provenance.insert(key.clone(), p);
            }
            let p = provenance[&key].as_ref();
            let entries = store.write_capture(hop, p)?;
            report.captured += 1;
            report.captures.push(CaptureSummary {
                uri: hop.uri.to_string(),
                status: hop.status,
                timestamp: hop.fetch_started_at.to_string(),
                depth,
                first_observed: p.map(|p| p.first_observed.to_string()),
            });
            report.index.extend(entries);
        }
        Ok(())
    }

    async fn provenance_for(&self, uri: &CanonicalUri) -> Option<Provenance> {
        uri.onion()?;
        match self.canon.site_record(&uri.root()).await {
            Ok(site) => Some(Provenance {
                first_observed: site.timeline.first().uri.clone(),
                site_id: Some(site.site_id),
            }),
            Err(LookupError::UnknownUri | LookupError::Unavailable(_)) => None,
        }
    }
}

/// The target with its host replaced by the site's current address, if that differs.
async fn relocated(uri: &CanonicalUri, canon: &dyn CanonLookup) -> Option<CanonicalUri> {
    let (_, current) = canon.current_uri(&uri.root()).await.ok()?;
    let addr = current.onion()?;
    (Some(addr) != uri.onion()).then(|| uri.with_onion(addr))
}

/// Loads a job file and runs it against the given canonicalizer.
pub async fn crawl(
    job: CrawlJob,
    canon: Arc<dyn CanonLookup>,
    clock: Arc<dyn Clock>,
) -> Result<CrawlReport, CrawlError> {
    Crawler::new(job, canon, clock).await?.run().await
}
