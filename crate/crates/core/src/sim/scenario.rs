//! Scripted end-to-end scenarios over the simulated network.
//!
//! A scenario starts the simulated sites and proxy, a canonicalizer service
//! and a replay service, then runs its script under virtual time. Every
//! `assert` action is evaluated and reported with its evidence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::net::TcpListener;

use super::network::{NetworkError, ProxyAuditEntry, SimNetwork};
use super::site::SimSite;
use crate::canonicalizer::{Canonicalizer, Observation};
use crate::clock::{Clock, VirtualClock};
use crate::crawler::{
    CrawlError, CrawlJob, CrawlReport, Crawler, Limits, Politeness, ProxyEndpoint, RobotsMode,
    RobotsRules, ScopeHost, ScopePolicy,
};
use crate::lookup::{CanonLookup, Unreachable};
use crate::model::{CanonicalUri, Timestamp14};
use crate::replay::{self, parse_link_format, ReplayService};
use crate::server::RunningServer;
use crate::service::{self, CanonClient, CanonService};
use crate::warc::CdxIndex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub start: Timestamp14,
    /// Virtual seconds added after every clock read by a fetch.
    #[serde(default)]
    pub clock_step_secs: i64,
    pub sites: Vec<SimSite>,
    pub script: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    /// Observe a site's address (default: the era active now) at the current time.
    Ingest {
        site: String,
        #[serde(default)]
        era: Option<usize>,
        #[serde(default = "default_source")]
        source: String,
    },
    Advance {
        secs: i64,
    },
    AdvanceTo {
        at: Timestamp14,
    },
    /// Move time to the start of the site's next era, optionally observing it.
    Shift {
        site: String,
        #[serde(default = "default_true")]
        ingest: bool,
    },
    Crawl(CrawlAction),
    Query {
        site: String,
        #[serde(default)]
        era: Option<usize>,
        kind: QueryKind,
    },
    Assert(Check),
}

fn default_source() -> String {
    "sim-directory".into()
}

fn default_true() -> bool {
    true
}

fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Current,
    Timeline,
    At,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlAction {
    pub label: String,
    pub sites: Vec<String>,
    /// Seed with this era's address instead of the one active now.
    #[serde(default)]
    pub seed_era: Option<usize>,
    #[serde(default)]
    pub max_depth: u32,
    #[serde(default)]
    pub robots: RobotsMode,
    #[serde(default)]
    pub delay_ms: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Announce era changes to the canonicalizer while crawling.
    #[serde(default)]
    pub live_directory: bool,
    #[serde(default)]
    pub max_pages_per_host: Option<usize>,
    #[serde(default)]
    pub allow_embedded_cross_host: bool,
    /// Crawl without a canonicalizer.
    #[serde(default)]
    pub without_canonicalizer: bool,
    #[serde(default)]
    pub gzip: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Check {
    CurrentUri {
        site: String,
        era: usize,
    },
    TimelineLen {
        site: String,
        len: usize,
    },
    /// Every page reachable within the crawl depth, and each requisite of
    /// those pages, was captured exactly once.
    AllReachableCapturedOnce {
        crawl: String,
        site: String,
    },
    /// Raw replay of every capture equals what the site served.
    ReplayIdentical {
        crawl: String,
    },
    /// The TimeMap under each era address lists `mementos` captures in time
    /// order, spread over `eras` distinct original URIs.
    TimemapSpansEras {
        site: String,
        path: String,
        eras: usize,
        mementos: usize,
    },
    /// A memento requested under `request_era`'s address at `at` resolves by
    /// era substitution to a capture under `expect_era`'s address.
    EraSubstitution {
        site: String,
        path: String,
        request_era: usize,
        at: Timestamp14,
        expect_era: usize,
    },
    ShiftedTargets {
        crawl: String,
        at_least: usize,
    },
    /// Captures taken once `era` was active all use its address.
    CapturesAfterShiftUseEra {
        crawl: String,
        site: String,
        era: usize,
    },
    ScopeRespected {
        crawl: String,
    },
    PolitenessRespected {
        crawl: String,
    },
    NoLocalOnionDns {
        crawl: String,
    },
    RobotsAdherence {
        crawl: String,
        site: String,
        disallowed_captured: bool,
    },
    CaptureCount {
        crawl: String,
        equals: usize,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct AssertionOutcome {
    pub index: usize,
    pub check: Check,
    pub passed: bool,
    pub evidence: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct ActionTiming {
    pub index: usize,
    pub action: String,
    pub virtual_time: Timestamp14,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub passed: bool,
    pub assertions: Vec<AssertionOutcome>,
    pub crawls: BTreeMap<String, CrawlReport>,
    pub queries: Vec<Value>,
    pub timings: Vec<ActionTiming>,
    pub proxy_audit: Vec<ProxyAuditEntry>,
    /// `uri status payload-digest` of every capture, sorted.
    pub capture_set: Vec<String>,
    pub total_ms: f64,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("script error: {0}")]
    ScriptError(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Crawl(#[from] CrawlError),
    #[error("service: {0}")]
    Service(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::ScriptError(e.to_string()))
    }

    fn site(&self, name: &str) -> Result<&SimSite, ScenarioError> {
        self.sites
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| ScenarioError::ScriptError(format!("undefined site `{name}`")))
    }

    /// Checks that every action refers to defined sites, eras and crawls.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut names = BTreeSet::new();
        for s in &self.sites {
            s.validate().map_err(ScenarioError::ScriptError)?;
            if !names.insert(&s.name) {
                return Err(ScenarioError::ScriptError(format!(
                    "duplicate site `{}`",
                    s.name
                )));
            }
        }
        let era_ok = |site: &str, era: usize| -> Result<(), ScenarioError> {
            if era >= self.site(site)?.eras.len() {
                return Err(ScenarioError::ScriptError(format!(
                    "site `{site}` has no era {era}"
                )));
            }
            Ok(())
        };
        let mut crawls = BTreeSet::new();
        let crawl_ok = |crawls: &BTreeSet<String>, label: &str| -> Result<(), ScenarioError> {
            if !crawls.contains(label) {
                return Err(ScenarioError::ScriptError(format!(
                    "undefined crawl `{label}`"
                )));
            }
            Ok(())
        };
        for action in &self.script {
            match action {
                Action::Ingest { site, era, .. } | Action::Query { site, era, .. } => {
                    self.site(site)?;
                    if let Some(e) = era {
                        era_ok(site, *e)?;
                    }
                }
                Action::Shift { site, .. } => {
                    self.site(site)?;
                }
                Action::Advance { .. } | Action::AdvanceTo { .. } => {}
                Action::Crawl(c) => {
                    if c.sites.is_empty() {
                        return Err(ScenarioError::ScriptError(format!(
                            "crawl `{}` has no sites",
                            c.label
                        )));
                    }
                    for s in &c.sites {
                        self.site(s)?;
                        if let Some(e) = c.seed_era {
                            era_ok(s, e)?;
                        }
                    }
                    if c.workers == 0 {
                        return Err(ScenarioError::ScriptError(format!(
                            "crawl `{}` has no workers",
                            c.label
                        )));
                    }
                    if !crawls.insert(c.label.clone()) {
                        return Err(ScenarioError::ScriptError(format!(
                            "duplicate crawl `{}`",
                            c.label
                        )));
                    }
                }
                Action::Assert(check) => match check {
                    Check::CurrentUri { site, era } => era_ok(site, *era)?,
                    Check::TimelineLen { site, .. } | Check::TimemapSpansEras { site, .. } => {
                        self.site(site)?;
                    }
                    Check::EraSubstitution {
                        site,
                        request_era,
                        expect_era,
                        ..
                    } => {
                        era_ok(site, *request_era)?;
                        era_ok(site, *expect_era)?;
                    }
                    Check::AllReachableCapturedOnce { crawl, site }
                    | Check::RobotsAdherence { crawl, site, .. } => {
                        self.site(site)?;
                        crawl_ok(&crawls, crawl)?;
                    }
                    Check::CapturesAfterShiftUseEra { crawl, site, era } => {
                        era_ok(site, *era)?;
                        crawl_ok(&crawls, crawl)?;
                    }
                    Check::ReplayIdentical { crawl }
                    | Check::ShiftedTargets { crawl, .. }
                    | Check::ScopeRespected { crawl }
                    | Check::PolitenessRespected { crawl }
                    | Check::NoLocalOnionDns { crawl }
                    | Check::CaptureCount { crawl, .. } => crawl_ok(&crawls, crawl)?,
                },
            }
        }
        Ok(())
    }
}

struct CrawlRecord {
    action: CrawlAction,
    report: CrawlReport,
    audit: Vec<ProxyAuditEntry>,
}

struct Harness<'a> {
    scenario: &'a Scenario,
    clock: Arc<VirtualClock>,
    network: SimNetwork,
    canon: Arc<CanonService>,
    canon_client: Arc<CanonClient>,
    canon_server: RunningServer,
    replay: Arc<ReplayService>,
    replay_server: RunningServer,
    http: reqwest::Client,
    warc_dir: PathBuf,
    crawls: BTreeMap<String, CrawlRecord>,
    queries: Vec<Value>,
}

/// Runs `scenario` with all state under `workdir`.
pub async fn run_scenario(
    scenario: &Scenario,
    workdir: &Path,
) -> Result<ScenarioReport, ScenarioError> {
    scenario.validate()?;
    let started = Instant::now();
    let clock = Arc::new(VirtualClock::stepping(
        scenario.start.clone(),
        scenario.clock_step_secs,
    ));
    let network = SimNetwork::start(scenario.sites.clone(), clock.clone()).await?;

    let canon = Arc::new(
        CanonService::open(&workdir.join("canon"))
            .map_err(|e| ScenarioError::Service(e.to_string()))?,
    );
    let listener = TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| ScenarioError::Network(NetworkError::PortExhausted(e)))?;
    let canon_server = RunningServer::spawn(listener, service::router(canon.clone()))?;
    let canon_client = Arc::new(CanonClient::new(canon_server.base_url()));

    let warc_dir = workdir.join("warcs");
    std::fs::create_dir_all(&warc_dir)?;
    let replay = Arc::new(ReplayService::with_index(
        &warc_dir,
        CdxIndex::default(),
        canon_client.clone(),
    ));
    let listener = TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| ScenarioError::Network(NetworkError::PortExhausted(e)))?;
    let replay_server = RunningServer::spawn(listener, replay::router(replay.clone()))?;
    let http = reqwest::Client::builder()
        .no_proxy()
        .build()
        .map_err(|e| ScenarioError::Service(e.to_string()))?;

    let mut h = Harness {
        scenario,
        clock,
        network,
        canon,
        canon_client,
        canon_server,
        replay,
        replay_server,
        http,
        warc_dir,
        crawls: BTreeMap::new(),
        queries: Vec::new(),
    };

    let mut assertions = Vec::new();
    let mut timings = Vec::new();
    for (index, action) in scenario.script.iter().enumerate() {
        let t = Instant::now();
        let name = match action {
            Action::Ingest { site, era, source } => {
                h.ingest(site, *era, source)?;
                "ingest"
            }
            Action::Advance { secs } => {
                h.clock.advance(*secs);
                "advance"
            }
            Action::AdvanceTo { at } => {
                if *at > h.clock.peek() {
                    h.clock.set(at.clone());
                }
                "advance_to"
            }
            Action::Shift { site, ingest } => {
                h.shift(site, *ingest)?;
                "shift"
            }
            Action::Crawl(c) => {
                h.crawl(c).await?;
                "crawl"
            }
            Action::Query { site, era, kind } => {
                h.query(site, *era, *kind).await;
                "query"
            }
            Action::Assert(check) => {
                let (passed, evidence) = h.evaluate(check).await;
                assertions.push(AssertionOutcome {
                    index,
                    check: check.clone(),
                    passed,
                    evidence,
                });
                "assert"
            }
        };
        timings.push(ActionTiming {
            index,
            action: name.into(),
            virtual_time: h.clock.peek(),
            elapsed_ms: t.elapsed().as_secs_f64() * 1000.0,
        });
    }

    let mut capture_set: Vec<String> = h
        .replay
        .index()
        .entries()
        .iter()
        .map(|e| format!("{} {} {}", e.original, e.status, e.digest))
        .collect();
    capture_set.sort();
    let report = ScenarioReport {
        name: scenario.name.clone(),
        passed: assertions.iter().all(|a| a.passed),
        assertions,
        crawls: h
            .crawls
            .iter()
            .map(|(k, v)| (k.clone(), v.report.clone()))
            .collect(),
        queries: std::mem::take(&mut h.queries),
        timings,
        proxy_audit: h.network.audit(),
        capture_set,
        total_ms: started.elapsed().as_secs_f64() * 1000.0,
    };
    h.network.shutdown().await;
    let _ = h.canon_server.shutdown().await;
    let _ = h.replay_server.shutdown().await;
    Ok(report)
}

fn pass(passed: bool, evidence: Value) -> (bool, Value) {
    (passed, evidence)
}

impl Harness<'_> {
    fn site(&self, name: &str) -> &SimSite {
        self.scenario.site(name).expect("validated")
    }

    fn era_now(&self, site: &SimSite) -> usize {
        site.era_at(&self.clock.peek()).unwrap_or(0)
    }

    fn ingest(&self, site: &str, era: Option<usize>, source: &str) -> Result<(), ScenarioError> {
        let site = self.site(site);
        let era = era.unwrap_or_else(|| self.era_now(site));
        let obs = Observation::new(
            site.root_uri(era),
            source,
            site.name.clone(),
            self.clock.peek(),
        )
        .map_err(|e| ScenarioError::ScriptError(e.to_string()))?;
        self.canon
            .observe(obs)
            .map_err(|e| ScenarioError::Service(e.to_string()))?;
        Ok(())
    }

    fn shift(&self, site: &str, ingest: bool) -> Result<(), ScenarioError> {
        let site = self.site(site);
        let next = site.era_at(&self.clock.peek()).map_or(0, |e| e + 1);
        let Some(era) = site.eras.get(next) else {
            return Err(ScenarioError::ScriptError(format!(
                "site `{}` has no era after {}",
                site.name,
                next - 1
            )));
        };
        if era.active_from > self.clock.peek() {
            self.clock.set(era.active_from.clone());
        }
        if ingest {
            self.ingest(&site.name, Some(next), &default_source())?;
        }
        Ok(())
    }

    async fn crawl(&mut self, c: &CrawlAction) -> Result<(), ScenarioError> {
        let seeds: Vec<CanonicalUri> = c
            .sites
            .iter()
            .map(|name| {
                let site = self.site(name);
                site.root_uri(c.seed_era.unwrap_or_else(|| self.era_now(site)))
            })
            .collect();
        let job = CrawlJob {
            name: c.label.clone(),
            scope: ScopePolicy {
                allowed_hosts: seeds.iter().map(ScopeHost::of).collect(),
                allow_embedded_cross_host: c.allow_embedded_cross_host,
            },
            seeds,
            politeness: Politeness {
                delay_ms: c.delay_ms,
                robots: c.robots,
            },
            proxy: Some(ProxyEndpoint {
                host: self.network.proxy_addr().ip().to_string(),
                port: self.network.proxy_addr().port(),
            }),
            max_depth: c.max_depth,
            max_pages_per_host: c.max_pages_per_host.unwrap_or(usize::MAX),
            workers: c.workers,
            limits: Limits {
                timeout_secs: 30,
                ..Limits::default()
            },
            output_dir: self.warc_dir.clone(),
            gzip: c.gzip,
            canonicalizer: Some(self.canon_server.base_url()),
        };
        let lookup: Arc<dyn CanonLookup> = if c.without_canonicalizer {
            Arc::new(Unreachable)
        } else {
            self.canon_client.clone()
        };
        if c.live_directory {
            self.network
                .attach_directory(self.canon.clone(), default_source());
        }
        let audit_before = self.network.audit().len();
        let result = Crawler::new(job, lookup, self.clock.clone())
            .await?
            .run()
            .await;
        self.network.detach_directory();
        let report = result?;
        self.replay
            .reload()
            .map_err(|e| ScenarioError::Service(e.to_string()))?;
        let audit = self.network.audit().split_off(audit_before);
        self.crawls.insert(
            c.label.clone(),
            CrawlRecord {
                action: c.clone(),
                report,
                audit,
            },
        );
        Ok(())
    }

    async fn query(&mut self, site: &str, era: Option<usize>, kind: QueryKind) {
        let site = self.site(site);
        let uri = site.root_uri(era.unwrap_or_else(|| self.era_now(site)));
        let result = match kind {
            QueryKind::Current => self.canon_client.current(&uri).await.map(|r| json!(r)),
            QueryKind::Timeline => self.canon_client.timeline(&uri).await.map(|r| json!(r)),
            QueryKind::At => self
                .canon_client
                .at(&uri, &self.clock.peek())
                .await
                .map(|r| json!(r)),
        };
        self.queries.push(match result {
            Ok(v) => json!({"site": site.name, "kind": kind, "uri": uri.to_string(), "result": v}),
            Err(e) => json!({"site": site.name, "kind": kind, "uri": uri.to_string(), "error": e.to_string()}),
        });
    }

    fn crawl_record(&self, label: &str) -> &CrawlRecord {
        self.crawls.get(label).expect("validated crawl label")
    }

    fn snapshot(&self) -> Arc<Canonicalizer> {
        self.canon.snapshot()
    }

    async fn evaluate(&self, check: &Check) -> (bool, Value) {
        match check {
            Check::CurrentUri { site, era } => {
                let site = self.site(site);
                let expected = site.root_uri(*era);
                let got = Canonicalizer::current_uri(&self.snapshot(), &site.root_uri(0))
                    .map(|(_, u)| u.to_string());
                pass(
                    got.as_deref() == Ok(expected.to_string().as_str()),
                    json!({"expected": expected.to_string(), "got": format!("{got:?}")}),
                )
            }
            Check::TimelineLen { site, len } => {
                let site = self.site(site);
                let got = self
                    .snapshot()
                    .timeline_for(&site.root_uri(0))
                    .map(|r| r.timeline.len())
                    .unwrap_or(0);
                pass(got == *len, json!({"expected": len, "got": got}))
            }
            Check::AllReachableCapturedOnce { crawl, site } => {
                let rec = self.crawl_record(crawl);
                let site = self.site(site);
                let reachable = site.reachable(rec.action.max_depth);
                let mut expected: BTreeSet<String> = BTreeSet::new();
                for path in reachable.keys() {
                    expected.insert(path.clone());
                    if let Some(p) = site.page(path) {
                        expected.extend(p.requisites.iter().cloned());
                    }
                }
                let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                for c in &rec.report.captures {
                    let Ok(uri) = CanonicalUri::parse(&c.uri) else {
                        continue;
                    };
                    let on_site = uri.onion().is_some_and(|a| site.era_index_of(a).is_some());
                    if on_site {
                        *counts.entry(uri.request_target()).or_default() += 1;
                    }
                }
                let got: BTreeSet<String> = counts.keys().cloned().collect();
                let duplicates: Vec<&String> = counts
                    .iter()
                    .filter(|(_, n)| **n > 1)
                    .map(|(k, _)| k)
                    .collect();
                let missing: Vec<&String> = expected.difference(&got).collect();
                let extra: Vec<&String> = got.difference(&expected).collect();
                pass(
                    missing.is_empty() && extra.is_empty() && duplicates.is_empty(),
                    json!({"expected": expected.len(), "captured": got.len(), "missing": missing, "extra": extra, "duplicates": duplicates}),
                )
            }
            Check::ReplayIdentical { crawl } => self.replay_identical(crawl).await,
            Check::TimemapSpansEras {
                site,
                path,
                eras,
                mementos,
            } => self.timemap_spans(site, path, *eras, *mementos).await,
            Check::EraSubstitution {
                site,
                path,
                request_era,
                at,
                expect_era,
            } => {
                self.era_substitution(site, path, *request_era, at, *expect_era)
                    .await
            }
            Check::ShiftedTargets { crawl, at_least } => {
                let got = self.crawl_record(crawl).report.shifted_targets;
                pass(got >= *at_least, json!({"at_least": at_least, "got": got}))
            }
            Check::CapturesAfterShiftUseEra { crawl, site, era } => {
                let rec = self.crawl_record(crawl);
                let site = self.site(site);
                let from = &site.eras[*era].active_from;
                let address = &site.eras[*era].address;
                let mut after = 0;
                let mut wrong = Vec::new();
                for c in &rec.report.captures {
                    let Ok(uri) = CanonicalUri::parse(&c.uri) else {
                        continue;
                    };
                    let on_site = uri.onion().is_some_and(|a| site.era_index_of(a).is_some());
                    if !on_site || c.timestamp.as_str() < from.as_str() {
                        continue;
                    }
                    after += 1;
                    if uri.onion() != Some(address) {
                        wrong.push(c.uri.clone());
                    }
                }
                pass(
                    after > 0 && wrong.is_empty(),
                    json!({"captures_after_shift": after, "wrong_era": wrong}),
                )
            }
            Check::ScopeRespected { crawl } => {
                let rec = self.crawl_record(crawl);
                let scope: BTreeSet<ScopeHost> = rec
                    .report
                    .effective_scope
                    .iter()
                    .map(|h| ScopeHost::parse(h))
                    .collect();
                let fetched_outside: Vec<&str> = rec
                    .report
                    .fetch_log
                    .iter()
                    .filter(|f| !scope.contains(&ScopeHost::parse(&f.host)))
                    .map(|f| f.uri.as_str())
                    .collect();
                let proxied_outside: Vec<&str> = rec
                    .audit
                    .iter()
                    .filter(|a| !scope.contains(&ScopeHost::parse(&a.name)))
                    .map(|a| a.name.as_str())
                    .collect();
                pass(
                    fetched_outside.is_empty() && proxied_outside.is_empty(),
                    json!({"requests": rec.report.fetch_log.len(), "proxy_connects": rec.audit.len(),
                           "fetched_outside": fetched_outside, "proxied_outside": proxied_outside,
                           "skipped_scope": rec.report.skipped_scope}),
                )
            }
            Check::PolitenessRespected { crawl } => {
                let rec = self.crawl_record(crawl);
                let delay = rec.action.delay_ms as f64;
                let mut last: HashMap<&str, f64> = HashMap::new();
                let mut violations = Vec::new();
                let mut min_gap = f64::INFINITY;
                for f in &rec.report.fetch_log {
                    let t = f.started.as_secs_f64() * 1000.0;
                    if let Some(prev) = last.insert(&f.host, t) {
                        let gap = t - prev;
                        min_gap = min_gap.min(gap);
                        if gap < delay {
                            violations.push(json!({"host": f.host, "uri": f.uri, "gap_ms": gap}));
                        }
                    }
                }
                pass(
                    violations.is_empty(),
                    json!({"delay_ms": delay, "min_gap_ms": if min_gap.is_finite() { json!(min_gap) } else { Value::Null }, "violations": violations}),
                )
            }
            Check::NoLocalOnionDns { crawl } => {
                let rec = self.crawl_record(crawl);
                let onion: Vec<&String> = rec
                    .report
                    .local_resolutions
                    .iter()
                    .filter(|h| h.to_ascii_lowercase().ends_with(".onion"))
                    .collect();
                pass(onion.is_empty(), json!({"local_onion_resolutions": onion}))
            }
            Check::RobotsAdherence {
                crawl,
                site,
                disallowed_captured,
            } => {
                let rec = self.crawl_record(crawl);
                let site = self.site(site);
                let rules = RobotsRules::parse(
                    &Limits::default().user_agent,
                    site.robots.as_deref().unwrap_or("").as_bytes(),
                );
                let captured: Vec<&str> = rec
                    .report
                    .captures
                    .iter()
                    .filter(|c| CanonicalUri::parse(&c.uri).is_ok_and(|u| !rules.allowed(&u)))
                    .map(|c| c.uri.as_str())
                    .collect();
                pass(
                    captured.is_empty() != *disallowed_captured,
                    json!({"disallowed_captures": captured, "robots_denied": rec.report.robots_denied}),
                )
            }
            Check::CaptureCount { crawl, equals } => {
                let got = self.crawl_record(crawl).report.captured;
                pass(got == *equals, json!({"expected": equals, "got": got}))
            }
        }
    }

    async fn replay_identical(&self, crawl: &str) -> (bool, Value) {
        let rec = self.crawl_record(crawl);
        let served: HashMap<String, Vec<u8>> = self
            .network
            .served()
            .into_iter()
            .map(|s| (s.uri, s.body))
            .collect();
        let base = self.replay_server.base_url();
        let mut checked = 0;
        let mut mismatches = Vec::new();
        for c in &rec.report.captures {
            let url = format!("{base}/replay/{}id_/{}", c.timestamp, c.uri);
            let body = match self.http.get(&url).send().await {
                Ok(r) => r.bytes().await.map(|b| b.to_vec()).unwrap_or_default(),
                Err(e) => {
                    mismatches.push(json!({"uri": c.uri, "error": e.to_string()}));
                    continue;
                }
            };
            checked += 1;
            if served.get(&c.uri) != Some(&body) {
                mismatches.push(json!({"uri": c.uri, "replayed_bytes": body.len()}));
            }
        }
        pass(
            checked > 0 && mismatches.is_empty(),
            json!({"checked": checked, "mismatches": mismatches}),
        )
    }

    async fn timemap_spans(
        &self,
        site: &str,
        path: &str,
        eras: usize,
        mementos: usize,
    ) -> (bool, Value) {
        let site = self.site(site);
        let base = self.replay_server.base_url();
        let mut per_era = Vec::new();
        let mut ok = true;
        for era in 0..site.eras.len() {
            let target = site.root_uri(era).join(path).expect("valid path");
            let url = format!("{base}/timemap/link/{target}");
            let text = match self.http.get(&url).send().await {
                Ok(r) if r.status().is_success() => r.text().await.unwrap_or_default(),
                Ok(r) => {
                    ok = false;
                    per_era.push(json!({"uri": target.to_string(), "status": r.status().as_u16()}));
                    continue;
                }
                Err(e) => {
                    ok = false;
                    per_era.push(json!({"uri": target.to_string(), "error": e.to_string()}));
                    continue;
                }
            };
            let links = match parse_link_format(&text) {
                Ok(l) => l,
                Err(e) => {
                    ok = false;
                    per_era.push(json!({"uri": target.to_string(), "parse_error": e}));
                    continue;
                }
            };
            let mems: Vec<_> = links.iter().filter(|l| l.has_rel("memento")).collect();
            let times: Vec<Option<Timestamp14>> = mems
                .iter()
                .map(|l| {
                    l.param("datetime")
                        .and_then(|d| Timestamp14::from_rfc1123(d).ok())
                })
                .collect();
            let chronological =
                times.iter().all(Option::is_some) && times.windows(2).all(|w| w[0] <= w[1]);
            let originals: BTreeSet<String> = mems
                .iter()
                .filter_map(|l| {
                    l.uri
                        .split_once("/replay/")
                        .and_then(|(_, r)| r.split_once('/'))
                        .map(|(_, o)| o.to_string())
                })
                .collect();
            let era_ok = mems.len() == mementos && originals.len() == eras && chronological;
            ok &= era_ok;
            per_era.push(json!({"uri": target.to_string(), "mementos": mems.len(), "originals": originals, "chronological": chronological}));
        }
        pass(
            ok,
            json!({"expected_mementos": mementos, "expected_eras": eras, "timemaps": per_era}),
        )
    }

    async fn era_substitution(
        &self,
        site: &str,
        path: &str,
        request_era: usize,
        at: &Timestamp14,
        expect_era: usize,
    ) -> (bool, Value) {
        let site = self.site(site);
        let target = site.root_uri(request_era).join(path).expect("valid path");
        let expected_host = site.eras[expect_era].address.to_string();
        let base = self.replay_server.base_url();
        let lookup: Value = match self
            .http
            .get(format!("{base}/api/v1/lookup"))
            .query(&[("uri", target.to_string()), ("timestamp", at.to_string())])
            .send()
            .await
        {
            Ok(r) => r.json().await.unwrap_or(Value::Null),
            Err(e) => json!({"error": e.to_string()}),
        };
        let step_ok = lookup["step"] == "era_substitution";
        let capture = lookup["capture"].as_str().unwrap_or("");
        let host_ok = CanonicalUri::parse(capture)
            .is_ok_and(|u| u.onion().map(ToString::to_string) == Some(expected_host.clone()));
        let memento = self
            .http
            .get(format!("{base}/replay/{at}/{target}"))
            .send()
            .await;
        let (status, link) = match memento {
            Ok(r) => (
                r.status().as_u16(),
                r.headers()
                    .get("link")
                    .and_then(|v| v.to_str().ok())
                    .unwrap_or("")
                    .to_string(),
            ),
            Err(_) => (0, String::new()),
        };
        let original_ok = parse_link_format(&link)
            .ok()
            .and_then(|l| l.into_iter().find(|l| l.has_rel("original")))
            .is_some_and(|l| l.uri.contains(&expected_host));
        pass(
            step_ok && host_ok && status == 200 && original_ok,
            json!({"requested": target.to_string(), "lookup": lookup, "memento_status": status, "link": link}),
        )
    }
}
