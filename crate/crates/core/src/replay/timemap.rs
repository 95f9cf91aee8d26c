//! Link-format TimeMaps aggregated over every address a site has used.

use std::fmt::Write as _;

use serde::Serialize;

use super::urim::UriM;
use crate::lookup::CanonLookup;
use crate::model::{CanonicalUri, Timestamp14};
use crate::warc::{CdxEntry, CdxIndex};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelatedUri {
    pub uri: CanonicalUri,
    pub first_seen: Timestamp14,
    pub last_seen: Timestamp14,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Memento {
    pub urim: String,
    pub original: String,
    pub datetime: Timestamp14,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimeMap {
    pub original: CanonicalUri,
    pub self_uri: String,
    /// The target under each address of the site's timeline, oldest first.
    /// Empty when the canonicalizer does not know the site.
    pub timeline: Vec<RelatedUri>,
    pub mementos: Vec<Memento>,
}

/// Collects the captures of `target` under every address in its site's
/// timeline, sorted by capture time. `None` when nothing is archived.
pub async fn timemap(
    index: &CdxIndex,
    canon: &dyn CanonLookup,
    target: &CanonicalUri,
    replay_prefix: &str,
    timemap_prefix: &str,
) -> Option<TimeMap> {
    let mut timeline = Vec::new();
    if target.onion().is_some() {
        if let Ok(site) = canon.site_record(&target.root()).await {
            for entry in &site.timeline.entries {
                if let Some(addr) = entry.uri.onion() {
                    timeline.push(RelatedUri {
                        uri: target.with_onion(addr),
                        first_seen: entry.first_seen.clone(),
                        last_seen: entry.last_seen.clone(),
                    });
                }
            }
        }
    }
    let mut uris: Vec<CanonicalUri> = timeline.iter().map(|r| r.uri.clone()).collect();
    if !uris.contains(target) {
        uris.push(target.clone());
    }
    let mut captures: Vec<&CdxEntry> = Vec::new();
    for u in &uris {
        let original = u.to_string();
        captures.extend(
            index
                .captures_of(u)
                .iter()
                .filter(|e| e.original == original),
        );
    }
    if captures.is_empty() {
        return None;
    }
    captures.sort_by(|a, b| (&a.timestamp, &a.original).cmp(&(&b.timestamp, &b.original)));
    captures.dedup_by(|a, b| a.timestamp == b.timestamp && a.original == b.original);
    let mementos = captures
        .into_iter()
        .map(|e| {
            let original = CanonicalUri::parse(&e.original).expect("index holds canonical uris");
            Memento {
                urim: UriM::new(replay_prefix, e.timestamp.clone(), original).to_string(),
                original: e.original.clone(),
                datetime: e.timestamp.clone(),
            }
        })
        .collect();
    Some(TimeMap {
        original: target.clone(),
        self_uri: format!("{}/{}", timemap_prefix.trim_end_matches('/'), target),
        timeline,
        mementos,
    })
}

impl TimeMap {
    /// `application/link-format` serialization.
    pub fn to_link_format(&self) -> String {
        let mut links: Vec<String> = Vec::new();
        links.push(format!("<{}>; rel=\"original\"", self.original));
        let (first, last) = (
            self.mementos.first().expect("timemaps are never empty"),
            self.mementos.last().expect("timemaps are never empty"),
        );
        links.push(format!(
            "<{}>; rel=\"self\"; type=\"application/link-format\"; from=\"{}\"; until=\"{}\"",
            self.self_uri,
            first.datetime.to_rfc1123(),
            last.datetime.to_rfc1123()
        ));
        for r in self.timeline.iter().filter(|r| r.uri != self.original) {
            links.push(format!(
                "<{}>; rel=\"related\"; from=\"{}\"; until=\"{}\"",
                r.uri,
                r.first_seen.to_rfc1123(),
                r.last_seen.to_rfc1123()
            ));
        }
        let n = self.mementos.len();
        for (i, m) in self.mementos.iter().enumerate() {
            let rel = match (i == 0, i + 1 == n) {
                (true, true) => "first last memento",
                (true, false) => "first memento",
                (false, true) => "last memento",
                (false, false) => "memento",
            };
            links.push(format!(
                "<{}>; rel=\"{}\"; datetime=\"{}\"",
                m.urim,
                rel,
                m.datetime.to_rfc1123()
            ));
        }
        let mut out = String::new();
        for (i, l) in links.iter().enumerate() {
            out.push_str(l);
            let _ = writeln!(out, "{}", if i + 1 < links.len() { "," } else { "" });
        }
        out
    }
}

/// One `<uri>; param="value"...` entry of a link-format document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkValue {
    pub uri: String,
    pub params: Vec<(String, String)>,
}

impl LinkValue {
    pub fn param(&self, name: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn has_rel(&self, rel: &str) -> bool {
        self.param("rel")
            .is_some_and(|r| r.split_ascii_whitespace().any(|x| x == rel))
    }
}

/// Parses a link-format document or `Link` header value.
pub fn parse_link_format(text: &str) -> Result<Vec<LinkValue>, String> {
    let mut out = Vec::new();
    let mut rest = text.trim_start();
    while !rest.is_empty() {
        let after = rest
            .strip_prefix('<')
            .ok_or_else(|| format!("expected `<` at `{}`", preview(rest)))?;
        let end = after.find('>').ok_or("unterminated uri")?;
        let mut link = LinkValue {
            uri: after[..end].to_string(),
            params: Vec::new(),
        };
        rest = after[end + 1..].trim_start();
        while let Some(p) = rest.strip_prefix(';') {
            let p = p.trim_start();
            let name_end = p
                .find(|c: char| c == '=' || c == ';' || c == ',' || c.is_whitespace())
                .unwrap_or(p.len());
            let name = p[..name_end].to_string();
            if name.is_empty() {
                return Err(format!("empty parameter name at `{}`", preview(p)));
            }
            let mut q = p[name_end..].trim_start();
            let mut value = String::new();
            if let Some(v) = q.strip_prefix('=') {
                let v = v.trim_start();
                if let Some(quoted) = v.strip_prefix('"') {
                    let close = quoted.find('"').ok_or("unterminated quoted value")?;
                    value = quoted[..close].to_string();
                    q = &quoted[close + 1..];
                } else {
                    let end = v.find([';', ',']).unwrap_or(v.len());
                    value = v[..end].trim().to_string();
                    q = &v[end..];
                }
            }
            link.params.push((name, value));
            rest = q.trim_start();
        }
        out.push(link);
        match rest.strip_prefix(',') {
            Some(r) => rest = r.trim_start(),
            None if rest.is_empty() => {}
            None => return Err(format!("expected `,` at `{}`", preview(rest))),
        }
    }
    Ok(out)
}

fn preview(s: &str) -> &str {
    s.char_indices().nth(20).map_or(s, |(i, _)| &s[..i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonicalizer::{Canonicalizer, Observation};
    use crate::lookup::Unreachable;
    use crate::warc::surt_key;

    const A: &str = "http://bfnews3u2ox4m4ty.onion";
    const B: &str = "http://nytimes3xbfgragh.onion";

    fn ts(s: &str) -> Timestamp14 {
        Timestamp14::parse(s).unwrap()
    }

    fn capture(u: &str, t: &str) -> CdxEntry {
        let u = CanonicalUri::parse(u).unwrap();
        CdxEntry {
            key: surt_key(&u),
            timestamp: ts(t),
            original: u.to_string(),
            digest: "sha1:X".into(),
            status: 200,
            length: 1,
            offset: 0,
            filename: "f.warc".into(),
        }
    }

    fn two_eras() -> Canonicalizer {
        let mut c = Canonicalizer::new();
        for (u, t) in [(A, "20200101000000"), (B, "20200601000000")] {
            c.register_observation(
                Observation::new(CanonicalUri::parse(u).unwrap(), "list", "news", ts(t)).unwrap(),
            )
            .unwrap();
        }
        c
    }

    #[tokio::test]
    async fn two_era_aggregation_is_chronological() {
        let idx = CdxIndex::from_entries(vec![
            capture(&format!("{A}/"), "20200201000000"),
            capture(&format!("{B}/"), "20200701000000"),
            capture(&format!("{A}/"), "20200301000000"),
            capture(&format!("{B}/"), "20200801000000"),
        ]);
        for start in [A, B] {
            let target = CanonicalUri::parse(&format!("{start}/")).unwrap();
            let tm = timemap(&idx, &two_eras(), &target, "/replay", "/timemap/link")
                .await
                .unwrap();
            let times: Vec<&str> = tm.mementos.iter().map(|m| m.datetime.as_str()).collect();
            assert_eq!(
                times,
                [
                    "20200201000000",
                    "20200301000000",
                    "20200701000000",
                    "20200801000000"
                ]
            );
            let originals: std::collections::BTreeSet<&str> =
                tm.mementos.iter().map(|m| m.original.as_str()).collect();
            assert_eq!(originals.len(), 2);
            assert_eq!(tm.mementos[0].urim, format!("/replay/20200201000000/{A}/"));
            let text = tm.to_link_format();
            assert!(text.starts_with(&format!("<{start}/>; rel=\"original\",\n")));
            assert_eq!(text.matches("memento\"").count(), 4);
            assert_eq!(text.matches("rel=\"related\"").count(), 1);
            let parsed = parse_link_format(&text).unwrap();
            assert_eq!(parsed.iter().filter(|l| l.has_rel("memento")).count(), 4);
            assert!(parsed[0].has_rel("original"));
        }
    }

    #[tokio::test]
    async fn unknown_site_falls_back_to_single_uri() {
        let idx = CdxIndex::from_entries(vec![
            capture(&format!("{A}/x"), "20200201000000"),
            capture(&format!("{A}/x"), "20200202000000"),
            capture(&format!("{A}/x"), "20200203000000"),
        ]);
        let target = CanonicalUri::parse(&format!("{A}/x")).unwrap();
        let tm = timemap(&idx, &Unreachable, &target, "/replay", "/timemap/link")
            .await
            .unwrap();
        assert_eq!(tm.mementos.len(), 3);
        assert!(tm.timeline.is_empty());
        let missing = CanonicalUri::parse(&format!("{B}/x")).unwrap();
        assert!(
            timemap(&idx, &Unreachable, &missing, "/replay", "/timemap/link")
                .await
                .is_none()
        );
    }
}
