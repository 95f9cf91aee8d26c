//! Desk-scale onion network: synthetic sites behind a SOCKS5 stub with
//! scripted address shifts, driving end-to-end scenarios.

mod network;
pub mod presets;
mod scenario;
mod site;

pub use network::{
    NetworkError, ProxyAuditEntry, ServedEntry, SimNetwork, REPLY_HOST_UNREACHABLE, REPLY_OK,
    REPLY_REFUSED,
};
pub use presets::{preset, random_address, PRESETS};
pub use scenario::{
    run_scenario, Action, ActionTiming, AssertionOutcome, Check, CrawlAction, QueryKind, Scenario,
    ScenarioError, ScenarioReport,
};
pub use site::{same_site_path, Era, Served, SimPage, SimSite};
