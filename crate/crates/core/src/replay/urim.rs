use std::fmt;

use thiserror::Error;

use crate::model::{CanonicalUri, Timestamp14};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UriMError {
    #[error("`{0}` does not start with the replay prefix")]
    WrongPrefix(String),
    #[error("missing 14-digit timestamp in `{0}`")]
    BadTimestamp(String),
    #[error("bad target uri in `{0}`")]
    BadTarget(String),
}

/// `<prefix>/<timestamp>/<absolute target uri>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UriM {
    pub prefix: String,
    pub timestamp: Timestamp14,
    pub target: CanonicalUri,
}

impl UriM {
    pub fn new(prefix: impl Into<String>, timestamp: Timestamp14, target: CanonicalUri) -> Self {
        Self {
            prefix: prefix.into().trim_end_matches('/').to_string(),
            timestamp,
            target,
        }
    }

    pub fn parse(prefix: &str, s: &str) -> Result<Self, UriMError> {
        let prefix = prefix.trim_end_matches('/');
        let rest = s
            .strip_prefix(prefix)
            .and_then(|r| r.strip_prefix('/'))
            .ok_or_else(|| UriMError::WrongPrefix(s.to_string()))?;
        let (ts, target) =
            split_timestamp(rest).ok_or_else(|| UriMError::BadTimestamp(s.to_string()))?;
        Ok(Self {
            prefix: prefix.to_string(),
            timestamp: ts,
            target: parse_target(target).ok_or_else(|| UriMError::BadTarget(s.to_string()))?,
        })
    }

    /// The same memento path for another resource.
    pub fn with_target(&self, target: CanonicalUri) -> Self {
        Self {
            target,
            ..self.clone()
        }
    }
}

impl fmt::Display for UriM {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.prefix, self.timestamp, self.target)
    }
}

/// Splits `20200101000000/http://...` into its timestamp and target.
pub(crate) fn split_timestamp(rest: &str) -> Option<(Timestamp14, &str)> {
    let (ts, target) = rest.split_once('/')?;
    Some((Timestamp14::parse(ts).ok()?, target))
}

/// Parses a target taken from a request path. Some clients collapse the
/// double slash after the scheme, so `http:/host/` is accepted too.
pub(crate) fn parse_target(raw: &str) -> Option<CanonicalUri> {
    if let Ok(uri) = CanonicalUri::parse(raw) {
        return Some(uri);
    }
    for scheme in ["http:/", "https:/"] {
        if let Some(rest) = raw.strip_prefix(scheme) {
            if !rest.starts_with('/') {
                return CanonicalUri::parse(&format!("{scheme}/{rest}")).ok();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn render_and_parse() {
        let m = UriM::new(
            "/replay/",
            Timestamp14::parse("20200102030405").unwrap(),
            CanonicalUri::parse("http://bfnews3u2ox4m4ty.onion/a/b?c=1").unwrap(),
        );
        let s = m.to_string();
        assert_eq!(
            s,
            "/replay/20200102030405/http://bfnews3u2ox4m4ty.onion/a/b?c=1"
        );
        assert_eq!(UriM::parse("/replay", &s).unwrap(), m);
        assert!(matches!(
            UriM::parse("/other", &s),
            Err(UriMError::WrongPrefix(_))
        ));
        assert!(matches!(
            UriM::parse("/replay", "/replay/2020/http://bfnews3u2ox4m4ty.onion/"),
            Err(UriMError::BadTimestamp(_))
        ));
        assert_eq!(
            UriM::parse(
                "/replay",
                "/replay/20200102030405/http:/bfnews3u2ox4m4ty.onion/x"
            )
            .unwrap()
            .target
            .to_string(),
            "http://bfnews3u2ox4m4ty.onion/x"
        );
    }

    proptest! {
        #[test]
        fn parse_inverts_render(
            secs in 0i64..4_000_000_000,
            path in "(/[a-z0-9]{0,6}){1,3}",
            query in proptest::option::of("[a-z]{1,4}=[0-9]{1,3}"),
            prefix in "(http://127\\.0\\.0\\.1:[0-9]{2,5})?/[a-z]{1,8}",
        ) {
            let raw = match query {
                Some(q) => format!("http://bfnews3u2ox4m4ty.onion{path}?{q}"),
                None => format!("http://bfnews3u2ox4m4ty.onion{path}"),
            };
            let m = UriM::new(prefix.clone(), Timestamp14::from_unix(secs).unwrap(), CanonicalUri::parse(&raw).unwrap());
            prop_assert_eq!(UriM::parse(&prefix, &m.to_string()).unwrap(), m);
        }
    }
}
