use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{CanonicalUri, Host, OnionAddress};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkRole {
    Navigation,
    Embedded,
}

/// A host allowed by scope. Onion entries cover every subdomain of the address.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum ScopeHost {
    Onion(OnionAddress),
    Name(String),
}

impl ScopeHost {
    pub fn parse(s: &str) -> Self {
        let s = s.trim().to_ascii_lowercase();
        let rest = s.split_once("://").map_or(s.as_str(), |(_, r)| r);
        let host = rest.split(['/', ':', '?']).next().unwrap_or(rest);
        match OnionAddress::from_host(host) {
            Ok((addr, _)) => ScopeHost::Onion(addr),
            Err(_) => ScopeHost::Name(host.to_string()),
        }
    }

    pub fn of(uri: &CanonicalUri) -> Self {
        match uri.host() {
            Host::Onion { address, .. } => ScopeHost::Onion(address.clone()),
            Host::Surface(h) => ScopeHost::Name(h.clone()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopePolicy {
    pub allowed_hosts: BTreeSet<ScopeHost>,
    #[serde(default)]
    pub allow_embedded_cross_host: bool,
}

impl ScopePolicy {
    pub fn for_hosts<I, S>(hosts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            allowed_hosts: hosts
                .into_iter()
                .map(|h| ScopeHost::parse(h.as_ref()))
                .collect(),
            allow_embedded_cross_host: false,
        }
    }

    pub fn allows_host(&self, uri: &CanonicalUri) -> bool {
        self.allowed_hosts.contains(&ScopeHost::of(uri))
    }

    pub fn allow(&mut self, uri: &CanonicalUri) {
        self.allowed_hosts.insert(ScopeHost::of(uri));
    }
}

impl From<String> for ScopeHost {
    fn from(s: String) -> Self {
        ScopeHost::parse(&s)
    }
}

impl From<ScopeHost> for String {
    fn from(h: ScopeHost) -> Self {
        match h {
            ScopeHost::Onion(a) => a.to_string(),
            ScopeHost::Name(n) => n,
        }
    }
}

pub fn in_scope(uri: &CanonicalUri, policy: &ScopePolicy, role: LinkRole) -> bool {
    policy.allows_host(uri) || (role == LinkRole::Embedded && policy.allow_embedded_cross_host)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uri(s: &str) -> CanonicalUri {
        CanonicalUri::parse(s).unwrap()
    }

    #[test]
    fn navigation_and_embedded() {
        let mut policy = ScopePolicy::for_hosts(["bfnews3u2ox4m4ty.onion"]);
        let on_host = uri("http://bfnews3u2ox4m4ty.onion/about");
        let off_host = uri("http://nytimes3xbfgragh.onion/");
        let css = uri("http://example.com/style.css");
        assert!(in_scope(&on_host, &policy, LinkRole::Navigation));
        assert!(!in_scope(&off_host, &policy, LinkRole::Navigation));
        assert!(!in_scope(&css, &policy, LinkRole::Embedded));
        policy.allow_embedded_cross_host = true;
        assert!(in_scope(&css, &policy, LinkRole::Embedded));
        assert!(!in_scope(&off_host, &policy, LinkRole::Navigation));
    }

    #[test]
    fn onion_subdomains_share_scope() {
        for entry in [
            "nytimes3xbfgragh.onion",
            "http://nytimes3xbfgragh.onion/",
            "www.nytimes3xbfgragh.onion:80",
        ] {
            let policy = ScopePolicy::for_hosts([entry]);
            assert!(
                policy.allows_host(&uri("https://www.nytimes3xbfgragh.onion/x")),
                "{entry}"
            );
        }
        let surface = ScopePolicy::for_hosts(["example.com"]);
        assert!(!surface.allows_host(&uri("http://www.example.com/")));
    }
}
