use std::collections::{HashSet, VecDeque};

use serde::Serialize;

use super::scope::LinkRole;
use crate::lookup::{CanonLookup, LookupError};
use crate::model::{CanonicalUri, Timestamp14};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrontierEntry {
    pub uri: CanonicalUri,
    pub depth: u32,
    pub discovered_via: Option<CanonicalUri>,
    pub enqueued_at: Timestamp14,
    pub role: LinkRole,
}

/// FIFO queue that admits each canonical URI once.
#[derive(Debug, Default)]
pub struct Frontier {
    queue: VecDeque<FrontierEntry>,
    seen: HashSet<CanonicalUri>,
}

impl Frontier {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues `entry` unless its URI was queued before. Returns whether it was added.
    pub fn push(&mut self, entry: FrontierEntry) -> bool {
        if !self.seen.insert(entry.uri.clone()) {
            return false;
        }
        self.queue.push_back(entry);
        true
    }

    /// Marks a URI as seen without queueing it, e.g. a redirect hop.
    pub fn mark_seen(&mut self, uri: &CanonicalUri) -> bool {
        self.seen.insert(uri.clone())
    }

    pub fn has_seen(&self, uri: &CanonicalUri) -> bool {
        self.seen.contains(uri)
    }

    pub fn pop(&mut self) -> Option<FrontierEntry> {
        self.queue.pop_front()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Removes and returns every queued entry with depth `depth` or less.
    pub fn drain_level(&mut self, depth: u32) -> Vec<FrontierEntry> {
        let (level, rest): (Vec<_>, Vec<_>) = self.queue.drain(..).partition(|e| e.depth <= depth);
        self.queue.extend(rest);
        level
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetFlag {
    CanonUnavailable,
    UnknownUri,
}

/// A popped entry after the canonicalizer handshake.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Target {
    pub entry: FrontierEntry,
    /// The URI as queued, when the host was rewritten.
    pub rewritten_from: Option<CanonicalUri>,
    pub flag: Option<TargetFlag>,
}

/// Rewrites the entry's host to the site's current address, keeping
/// subdomain, path and query. Lookup failures leave the entry unchanged.
pub async fn consult(entry: FrontierEntry, canon: &dyn CanonLookup) -> Target {
    if entry.uri.onion().is_none() {
        return Target {
            entry,
            rewritten_from: None,
            flag: None,
        };
    }
    match canon.current_uri(&entry.uri.root()).await {
        Ok((_, current)) => match current.onion() {
            Some(addr) if Some(addr) != entry.uri.onion() => {
                let original = entry.uri.clone();
                let mut entry = entry;
                entry.uri = original.with_onion(addr);
                Target {
                    entry,
                    rewritten_from: Some(original),
                    flag: None,
                }
            }
            _ => Target {
                entry,
                rewritten_from: None,
                flag: None,
            },
        },
        Err(LookupError::UnknownUri) => Target {
            entry,
            rewritten_from: None,
            flag: Some(TargetFlag::UnknownUri),
        },
        Err(LookupError::Unavailable(_)) => Target {
            entry,
            rewritten_from: None,
            flag: Some(TargetFlag::CanonUnavailable),
        },
    }
}

/// Pops the next entry and applies the canonicalizer handshake.
pub async fn next_target(frontier: &mut Frontier, canon: &dyn CanonLookup) -> Option<Target> {
    let entry = frontier.pop()?;
    Some(consult(entry, canon).await)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonicalizer::{Canonicalizer, Observation};
    use crate::lookup::Unreachable;

    const A: &str = "http://bfnews3u2ox4m4ty.onion";
    const B: &str = "http://nytimes3xbfgragh.onion";

    fn ts(s: &str) -> Timestamp14 {
        Timestamp14::parse(s).unwrap()
    }

    fn entry(uri: &str) -> FrontierEntry {
        FrontierEntry {
            uri: CanonicalUri::parse(uri).unwrap(),
            depth: 1,
            discovered_via: None,
            enqueued_at: ts("20200101000000"),
            role: LinkRole::Navigation,
        }
    }

    fn shifted() -> Canonicalizer {
        let mut c = Canonicalizer::new();
        c.register_observation(
            Observation::new(
                CanonicalUri::parse(A).unwrap(),
                "list",
                "news",
                ts("20200101000000"),
            )
            .unwrap(),
        )
        .unwrap();
        c.register_observation(
            Observation::new(
                CanonicalUri::parse(B).unwrap(),
                "list",
                "news",
                ts("20200201000000"),
            )
            .unwrap(),
        )
        .unwrap();
        c
    }

    #[tokio::test]
    async fn handshake_cases() {
        let c = shifted();
        let t = consult(entry(&format!("{B}/a?x=1")), &c).await;
        assert_eq!(t.rewritten_from, None);
        assert_eq!(t.flag, None);

        let t = consult(entry(&format!("{A}/a?x=1")), &c).await;
        assert_eq!(t.entry.uri.to_string(), format!("{B}/a?x=1"));
        assert_eq!(t.rewritten_from.unwrap().to_string(), format!("{A}/a?x=1"));

        let t = consult(entry(&format!("{A}/a")), &Unreachable).await;
        assert_eq!(t.entry.uri.to_string(), format!("{A}/a"));
        assert_eq!(t.flag, Some(TargetFlag::CanonUnavailable));

        let t = consult(
            entry("http://zqktlwiuavvvqqt4ybvgvi7tyo4hjl5xgfuvpdf6otjiycgwqbym2qad.onion/"),
            &c,
        )
        .await;
        assert_eq!(t.flag, Some(TargetFlag::UnknownUri));
    }

    #[tokio::test]
    async fn frontier_dedup_and_levels() {
        let mut f = Frontier::new();
        assert!(f.push(entry(&format!("{A}/"))));
        assert!(!f.push(entry(&format!("{A}/"))));
        let mut deeper = entry(&format!("{A}/deep"));
        deeper.depth = 2;
        assert!(f.push(deeper));
        assert_eq!(f.drain_level(1).len(), 1);
        assert_eq!(f.len(), 1);
        let t = next_target(&mut f, &shifted()).await.unwrap();
        assert_eq!(t.entry.uri.to_string(), format!("{B}/deep"));
        assert!(next_target(&mut f, &shifted()).await.is_none());
    }
}
