//! Canonical http(s) URIs.
//!
//! Canonicalization lowercases the host, drops the default port and any
//! fragment, and normalizes an empty path to `/`. Query strings are kept in
//! their original order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use super::onion::{has_onion_suffix, OnionAddress, OnionError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UriError {
    #[error("unsupported scheme `{0}`")]
    UnsupportedScheme(String),
    #[error("cannot parse `{0}` as an absolute URI")]
    Unparseable(String),
    #[error(transparent)]
    Onion(#[from] OnionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Http,
    Https,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Http => "http",
            Scheme::Https => "https",
        }
    }

    pub fn default_port(self) -> u16 {
        match self {
            Scheme::Http => 80,
            Scheme::Https => 443,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Host {
    /// An onion service, possibly below subdomain labels such as `www`.
    Onion {
        subdomain: Option<String>,
        address: OnionAddress,
    },
    Surface(String),
}

impl fmt::Display for Host {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Host::Onion {
                subdomain: Some(sub),
                address,
            } => write!(f, "{sub}.{address}"),
            Host::Onion { address, .. } => write!(f, "{address}"),
            Host::Surface(name) => f.write_str(name),
        }
    }
}

/// An absolute http(s) URI in canonical form. No fragment is ever stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalUri {
    scheme: Scheme,
    host: Host,
    port: Option<u16>,
    path: String,
    query: Option<String>,
}

impl CanonicalUri {
    pub fn parse(raw: &str) -> Result<Self, UriError> {
        let url = Url::parse(raw.trim()).map_err(|_| UriError::Unparseable(raw.to_string()))?;
        Self::from_url(&url).map_err(|e| match e {
            UriError::Unparseable(_) => UriError::Unparseable(raw.to_string()),
            other => other,
        })
    }

    pub fn from_url(url: &Url) -> Result<Self, UriError> {
        let scheme = match url.scheme() {
            "http" => Scheme::Http,
            "https" => Scheme::Https,
            other => return Err(UriError::UnsupportedScheme(other.to_string())),
        };
        let host_str = url
            .host_str()
            .filter(|h| !h.is_empty())
            .ok_or_else(|| UriError::Unparseable(url.to_string()))?
            .to_ascii_lowercase();
        let host = if has_onion_suffix(&host_str) {
            let (address, subdomain) = OnionAddress::from_host(&host_str)?;
            Host::Onion { subdomain, address }
        } else {
            Host::Surface(host_str)
        };
        let port = url.port().filter(|p| *p != scheme.default_port());
        let path = match url.path() {
            "" => "/".to_string(),
            p => p.to_string(),
        };
        Ok(Self {
            scheme,
            host,
            port,
            path,
            query: url.query().map(str::to_string),
        })
    }

    /// Resolves a (possibly relative) reference against this URI.
    pub fn join(&self, reference: &str) -> Result<Self, UriError> {
        let joined = self
            .to_url()
            .join(reference.trim())
            .map_err(|_| UriError::Unparseable(reference.to_string()))?;
        Self::from_url(&joined)
    }

    pub fn to_url(&self) -> Url {
        Url::parse(&self.to_string()).expect("canonical URIs always re-parse")
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn host(&self) -> &Host {
        &self.host
    }

    pub fn host_str(&self) -> String {
        self.host.to_string()
    }

    pub fn onion(&self) -> Option<&OnionAddress> {
        match &self.host {
            Host::Onion { address, .. } => Some(address),
            Host::Surface(_) => None,
        }
    }

    pub fn port(&self) -> Option<u16> {
        self.port
    }

    pub fn effective_port(&self) -> u16 {
        self.port.unwrap_or_else(|| self.scheme.default_port())
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn query(&self) -> Option<&str> {
        self.query.as_deref()
    }

    /// Path plus query, as sent in an HTTP request line.
    pub fn request_target(&self) -> String {
        match &self.query {
            Some(q) => format!("{}?{}", self.path, q),
            None => self.path.clone(),
        }
    }

    /// `host[:port]` as sent in a `Host` header.
    pub fn authority(&self) -> String {
        match self.port {
            Some(p) => format!("{}:{}", self.host, p),
            None => self.host.to_string(),
        }
    }

    /// The site root: same scheme, host and port with path `/` and no query.
    pub fn root(&self) -> Self {
        Self {
            path: "/".to_string(),
            query: None,
            ..self.clone()
        }
    }

    pub fn is_root(&self) -> bool {
        self.path == "/" && self.query.is_none()
    }

    /// Replaces the onion address, keeping scheme, subdomain, port, path and query.
    /// Surface hosts become the bare onion address.
    pub fn with_onion(&self, address: &OnionAddress) -> Self {
        let subdomain = match &self.host {
            Host::Onion { subdomain, .. } => subdomain.clone(),
            Host::Surface(_) => None,
        };
        Self {
            host: Host::Onion {
                subdomain,
                address: address.clone(),
            },
            ..self.clone()
        }
    }

    /// Takes scheme, host and port from `origin`, keeping this URI's path and query.
    pub fn with_origin_of(&self, origin: &CanonicalUri) -> Self {
        Self {
            scheme: origin.scheme,
            host: origin.host.clone(),
            port: origin.port,
            ..self.clone()
        }
    }

    pub fn same_origin(&self, other: &CanonicalUri) -> bool {
        self.scheme == other.scheme && self.host == other.host && self.port == other.port
    }
}

/// Canonicalizes `raw` into a [`CanonicalUri`].
pub fn canonicalize_uri(raw: &str) -> Result<CanonicalUri, UriError> {
    CanonicalUri::parse(raw)
}

impl fmt::Display for CanonicalUri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}://{}{}",
            self.scheme.as_str(),
            self.authority(),
            self.path
        )?;
        if let Some(q) = &self.query {
            write!(f, "?{q}")?;
        }
        Ok(())
    }
}

impl FromStr for CanonicalUri {
    type Err = UriError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for CanonicalUri {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CanonicalUri {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
