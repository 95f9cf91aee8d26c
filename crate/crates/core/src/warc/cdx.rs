//! Sorted plain-text capture index.
//!
//! One line per response record:
//! `key timestamp original digest status length offset filename`
//! where `key` is the host-reversed (SURT style) form of the canonical URI.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use super::reader::{read_records, ReadError};
use super::record::RecordKind;
use crate::model::{CanonicalUri, Host, Timestamp14};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CdxEntry {
    pub key: String,
    pub timestamp: Timestamp14,
    pub original: String,
    pub digest: String,
    pub status: u16,
    pub length: u64,
    pub offset: u64,
    pub filename: String,
}

#[derive(Debug, Error)]
pub enum CdxError {
    #[error("bad CDX line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("uri `{0}` is not captured")]
    NotCaptured(String),
    #[error(transparent)]
    Read(#[from] ReadError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// `onion,nytimes3xbfgragh,www)/a?b=1` for `https://www.nytimes3xbfgragh.onion/a?b=1`.
/// The scheme is not part of the key.
pub fn surt_key(uri: &CanonicalUri) -> String {
    let host = match uri.host() {
        Host::Surface(h) => h.clone(),
        other => other.to_string(),
    };
    let mut key: String = host.split('.').rev().collect::<Vec<_>>().join(",");
    if let Some(port) = uri.port() {
        key.push_str(&format!(":{port}"));
    }
    key.push(')');
    key.push_str(&uri.request_target());
    key.to_ascii_lowercase()
}

impl CdxEntry {
    fn sort_key(&self) -> (&str, &Timestamp14, &str, &str, u64) {
        (
            &self.key,
            &self.timestamp,
            &self.original,
            &self.filename,
            self.offset,
        )
    }
}

impl fmt::Display for CdxEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {} {} {}",
            self.key,
            self.timestamp,
            self.original,
            self.digest,
            self.status,
            self.length,
            self.offset,
            self.filename
        )
    }
}

impl FromStr for CdxEntry {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = line.split(' ').collect();
        let [key, ts, original, digest, status, length, offset, filename] = parts[..] else {
            return Err(format!("expected 8 fields, found {}", parts.len()));
        };
        Ok(Self {
            key: key.to_string(),
            timestamp: Timestamp14::parse(ts).map_err(|e| e.to_string())?,
            original: original.to_string(),
            digest: digest.to_string(),
            status: status.parse().map_err(|_| "bad status".to_string())?,
            length: length.parse().map_err(|_| "bad length".to_string())?,
            offset: offset.parse().map_err(|_| "bad offset".to_string())?,
            filename: filename.to_string(),
        })
    }
}

/// In-memory index sorted by `(key, timestamp)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CdxIndex {
    entries: Vec<CdxEntry>,
}

impl CdxIndex {
    pub fn from_entries(mut entries: Vec<CdxEntry>) -> Self {
        entries.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        entries.dedup();
        Self { entries }
    }

    pub fn entries(&self) -> &[CdxEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All captures of exactly `uri`, in timestamp order.
    pub fn captures_of(&self, uri: &CanonicalUri) -> &[CdxEntry] {
        let key = surt_key(uri);
        let lo = self
            .entries
            .partition_point(|e| e.key.as_str() < key.as_str());
        let hi = lo + self.entries[lo..].partition_point(|e| e.key == key);
        &self.entries[lo..hi]
    }

    /// The capture of `uri` nearest to `at`; ties go to the earlier one.
    pub fn lookup_capture(
        &self,
        uri: &CanonicalUri,
        at: &Timestamp14,
    ) -> Result<&CdxEntry, CdxError> {
        let original = uri.to_string();
        nearest(
            self.captures_of(uri)
                .iter()
                .filter(|e| e.original == original),
            at,
        )
        .ok_or(CdxError::NotCaptured(original))
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|e| format!("{e}\n")).collect()
    }

    pub fn parse_text(text: &str) -> Result<Self, CdxError> {
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with(" CDX"))
            .map(|(i, l)| {
                l.parse().map_err(|reason| CdxError::BadLine {
                    line: i + 1,
                    reason,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_entries(entries))
    }
}

/// Nearest entry to `at`, ties toward the earlier timestamp.
pub fn nearest<'a>(
    entries: impl Iterator<Item = &'a CdxEntry>,
    at: &Timestamp14,
) -> Option<&'a CdxEntry> {
    let target = at.unix();
    entries.min_by_key(|e| {
        let t = e.timestamp.unix();
        ((t - target).abs(), t)
    })
}

/// Indexes the response records of the given WARC files.
pub fn build_index(warc_files: &[PathBuf]) -> Result<CdxIndex, CdxError> {
    let mut entries = Vec::new();
    for path in warc_files {
        entries.extend(index_file(path)?);
    }
    Ok(CdxIndex::from_entries(entries))
}

pub fn index_file(path: &Path) -> Result<Vec<CdxEntry>, CdxError> {
    let filename = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut out = Vec::new();
    for rec in read_records(path)? {
        let rec = rec?;
        if rec.kind != RecordKind::Response {
            continue;
        }
        let Some(target) = rec.target_uri.as_deref() else {
            continue;
        };
        let Ok(uri) = CanonicalUri::parse(target) else {
            continue;
        };
        out.push(CdxEntry {
            key: surt_key(&uri),
            timestamp: rec.capture_time.clone(),
            original: uri.to_string(),
            digest: rec.payload_digest(),
            status: rec.http_status().unwrap_or(0),
            length: rec.length,
            offset: rec.offset,
            filename: filename.clone(),
        });
    }
    Ok(out)
}

/// WARC files (`.warc`, `.warc.gz`) directly inside `dir`, sorted by name.
pub fn warc_files_in(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            name.ends_with(".warc") || name.ends_with(".warc.gz")
        })
        .collect();
    files.sort();
    Ok(files)
}
