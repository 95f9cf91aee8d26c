//! `.onion` hostname validation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const ONION_SUFFIX: &str = ".onion";
const V2_LABEL_LEN: usize = 16;
const V3_LABEL_LEN: usize = 56;

/// Onion service address generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OnionVersion {
    V2,
    V3,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OnionError {
    #[error("`{0}` is not an .onion hostname")]
    NotOnion(String),
    #[error("onion label has length {0}, expected 16 or 56")]
    BadLength(usize),
    #[error("onion label contains `{0}`, outside the base32 alphabet [a-z2-7]")]
    BadAlphabet(char),
}

/// A validated onion service address such as `nytimes3xbfgragh.onion`.
///
/// Only the length and the base32 alphabet of the label are checked. The
/// v3 checksum embedded in the payload is not verified, so any 56 character
/// base32 label is accepted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OnionAddress {
    label: String,
    version: OnionVersion,
}

impl OnionAddress {
    /// Validates a bare onion hostname (no subdomains).
    pub fn parse(hostname: &str) -> Result<Self, OnionError> {
        let lower = hostname.to_ascii_lowercase();
        let label = lower
            .strip_suffix(ONION_SUFFIX)
            .ok_or_else(|| OnionError::NotOnion(hostname.to_string()))?;
        let len = label.chars().count();
        let version = match len {
            V2_LABEL_LEN => OnionVersion::V2,
            V3_LABEL_LEN => OnionVersion::V3,
            other => return Err(OnionError::BadLength(other)),
        };
        if let Some(bad) = label.chars().find(|c| !is_base32(*c)) {
            return Err(OnionError::BadAlphabet(bad));
        }
        Ok(Self {
            label: label.to_string(),
            version,
        })
    }

    /// Extracts the onion address from a host that may carry subdomain labels,
    /// e.g. `www.nytimes3xbfgragh.onion`. Returns the address and the subdomain
    /// prefix (without the trailing dot), if any.
    pub fn from_host(host: &str) -> Result<(Self, Option<String>), OnionError> {
        let lower = host.to_ascii_lowercase();
        let stem = lower
            .strip_suffix(ONION_SUFFIX)
            .ok_or_else(|| OnionError::NotOnion(host.to_string()))?;
        match stem.rsplit_once('.') {
            Some((sub, label)) if !sub.is_empty() => {
                let addr = Self::parse(&format!("{label}{ONION_SUFFIX}"))?;
                Ok((addr, Some(sub.to_string())))
            }
            _ => Ok((Self::parse(&lower)?, None)),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn version(&self) -> OnionVersion {
        self.version
    }
}

fn is_base32(c: char) -> bool {
    matches!(c, 'a'..='z' | '2'..='7')
}

/// Validates `hostname` as a bare `.onion` address.
pub fn validate_onion_address(hostname: &str) -> Result<OnionAddress, OnionError> {
    OnionAddress::parse(hostname)
}

/// True when the host ends in `.onion`, whether or not it is well formed.
pub fn has_onion_suffix(host: &str) -> bool {
    host.to_ascii_lowercase().ends_with(ONION_SUFFIX)
}

impl fmt::Display for OnionAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.label, ONION_SUFFIX)
    }
}

impl FromStr for OnionAddress {
    type Err = OnionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for OnionAddress {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OnionAddress {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn v2_nytimes() {
        let addr = validate_onion_address("nytimes3xbfgragh.onion").unwrap();
        assert_eq!(addr.version(), OnionVersion::V2);
        assert_eq!(addr.label(), "nytimes3xbfgragh");
        assert_eq!(addr.to_string(), "nytimes3xbfgragh.onion");
    }

    #[test]
    fn v3_internet_archive() {
        let addr = validate_onion_address(
            "archivebyd3rzt3ehjpm4c3bjkyxv3hjleiytnvxcn7x32psn2kxcuid.onion",
        )
        .unwrap();
        assert_eq!(addr.version(), OnionVersion::V3);
    }

    #[test]
    fn rejections() {
        assert!(matches!(
            validate_onion_address("example.com"),
            Err(OnionError::NotOnion(_))
        ));
        assert_eq!(
            validate_onion_address("abc.onion"),
            Err(OnionError::BadLength(3))
        );
        assert_eq!(
            validate_onion_address("nytimes3xbfgrag1.onion"),
            Err(OnionError::BadAlphabet('1'))
        );
    }

    #[test]
    fn uppercase_is_lowered() {
        let addr = validate_onion_address("NYTIMES3XBFGRAGH.ONION").unwrap();
        assert_eq!(addr.to_string(), "nytimes3xbfgragh.onion");
    }

    #[test]
    fn subdomain_split() {
        let (addr, sub) = OnionAddress::from_host("www.nytimes3xbfgragh.onion").unwrap();
        assert_eq!(addr.label(), "nytimes3xbfgragh");
        assert_eq!(sub.as_deref(), Some("www"));
        assert!(validate_onion_address("www.nytimes3xbfgragh.onion").is_err());
    }
}
