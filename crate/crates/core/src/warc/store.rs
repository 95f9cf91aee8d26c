//! Capture writer: one WARC file per crawl job and target host.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;
use thiserror::Error;

use super::cdx::{surt_key, CdxEntry};
use super::record::{sha1_digest, RecordKind, WarcRecord, FIRST_OBSERVED_FIELD};
use crate::canonicalizer::SiteId;
use crate::crawler::FetchResult;
use crate::model::{CanonicalUri, Timestamp14};

pub const DEFAULT_ROLLOVER_BYTES: u64 = 1 << 30;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("warc i/o on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("payload of {size} bytes exceeds the {limit} byte record limit")]
    OversizePayload { size: u64, limit: u64 },
}

#[derive(Debug, Clone)]
pub struct StoreConfig {
    pub dir: PathBuf,
    pub job_name: String,
    pub gzip: bool,
    pub rollover_bytes: u64,
}

impl StoreConfig {
    pub fn new(dir: impl Into<PathBuf>, job_name: impl Into<String>) -> Self {
        Self {
            dir: dir.into(),
            job_name: job_name.into(),
            gzip: false,
            rollover_bytes: DEFAULT_ROLLOVER_BYTES,
        }
    }
}

/// Where a capture's site was first seen, according to the canonicalizer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub first_observed: CanonicalUri,
    pub site_id: Option<SiteId>,
}

struct OpenWarc {
    path: PathBuf,
    file: File,
    written: u64,
    seq: u32,
    warcinfo_id: String,
    records: usize,
}

pub struct WarcStore {
    config: StoreConfig,
    open: BTreeMap<String, OpenWarc>,
    finished: Vec<(PathBuf, usize)>,
}

impl WarcStore {
    pub fn new(config: StoreConfig) -> Result<Self, StoreError> {
        std::fs::create_dir_all(&config.dir).map_err(|source| StoreError::IoFailure {
            path: config.dir.clone(),
            source,
        })?;
        Ok(Self {
            config,
            open: BTreeMap::new(),
            finished: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.config.dir
    }

    /// Writes response, request and (with provenance) metadata records for one
    /// fetch. Returns the index entry of the response record.
    pub fn write_capture(
        &mut self,
        fetch: &FetchResult,
        provenance: Option<&Provenance>,
    ) -> Result<Vec<CdxEntry>, StoreError> {
        let response_block = fetch.response_block();
        let size = response_block.len() as u64;
        if size > self.config.rollover_bytes {
            return Err(StoreError::OversizePayload {
                size,
                limit: self.config.rollover_bytes,
            });
        }

        let host_key = file_safe(&fetch.uri.authority());
        let date = &fetch.fetch_started_at;
        let target = fetch.uri.to_string();
        let response_id = WarcRecord::new_id();

        let gzip = self.config.gzip;
        let file = self.file_for(&host_key, date)?;
        let warcinfo_id = file.warcinfo_id.clone();

        let mut response = WarcRecord::builder(RecordKind::Response, &response_id, date)
            .header("WARC-Target-URI", &target)
            .header("WARC-Warcinfo-ID", &warcinfo_id)
            .header("Content-Type", "application/http;msgtype=response")
            .header("WARC-Payload-Digest", sha1_digest(&fetch.body));
        if let Some(p) = provenance {
            response = response.header(FIRST_OBSERVED_FIELD, p.first_observed.to_string());
        }
        let response = response.block(response_block);

        let request = WarcRecord::builder(RecordKind::Request, &WarcRecord::new_id(), date)
            .header("WARC-Target-URI", &target)
            .header("WARC-Warcinfo-ID", &warcinfo_id)
            .header("WARC-Concurrent-To", &response_id)
            .header("Content-Type", "application/http;msgtype=request")
            .header("WARC-Payload-Digest", sha1_digest(b""))
            .block(fetch.request_head.clone());

        let (offset, length) = write_record(file, &response, gzip)?;
        write_record(file, &request, gzip)?;
        if let Some(p) = provenance {
            let mut fields = format!(
                "first-observed-uri: {}\r\ncurrent-uri: {}\r\n",
                p.first_observed,
                fetch.uri.root()
            );
            if let Some(site) = p.site_id {
                fields.push_str(&format!("site-id: {site}\r\n"));
            }
            let meta = WarcRecord::builder(RecordKind::Metadata, &WarcRecord::new_id(), date)
                .header("WARC-Target-URI", &target)
                .header("WARC-Warcinfo-ID", &warcinfo_id)
                .header("WARC-Refers-To", &response_id)
                .header("WARC-Concurrent-To", &response_id)
                .header("Content-Type", "application/warc-fields")
                .block(fields.into_bytes());
            write_record(file, &meta, gzip)?;
        }

        let filename = file
            .path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(vec![CdxEntry {
            key: surt_key(&fetch.uri),
            timestamp: date.clone(),
            original: target,
            digest: sha1_digest(&fetch.body),
            status: fetch.status,
            length,
            offset,
            filename,
        }])
    }

    fn file_for(
        &mut self,
        host_key: &str,
        date: &Timestamp14,
    ) -> Result<&mut OpenWarc, StoreError> {
        let roll = self
            .open
            .get(host_key)
            .is_some_and(|f| f.written >= self.config.rollover_bytes);
        if roll {
            let old = self.open.remove(host_key).expect("present");
            self.finished.push((old.path, old.records));
            let next = self.create_file(host_key, old.seq + 1, date)?;
            self.open.insert(host_key.to_string(), next);
        } else if !self.open.contains_key(host_key) {
            let next = self.create_file(host_key, 0, date)?;
            self.open.insert(host_key.to_string(), next);
        }
        Ok(self.open.get_mut(host_key).expect("inserted"))
    }

    fn create_file(
        &self,
        host_key: &str,
        seq: u32,
        date: &Timestamp14,
    ) -> Result<OpenWarc, StoreError> {
        let ext = if self.config.gzip { "warc.gz" } else { "warc" };
        let name = format!(
            "{}-{}-{:05}.{}",
            file_safe(&self.config.job_name),
            host_key,
            seq,
            ext
        );
        let path = self.config.dir.join(&name);
        let file = OpenOptions::new()
            .create(true)
            .truncate(true)
            .write(true)
            .open(&path)
            .map_err(|source| StoreError::IoFailure {
                path: path.clone(),
                source,
            })?;
        let warcinfo_id = WarcRecord::new_id();
        let mut open = OpenWarc {
            path,
            file,
            written: 0,
            seq,
            warcinfo_id: warcinfo_id.clone(),
            records: 0,
        };
        let info = format!(
            "software: onion-archive/{}\r\nformat: WARC File Format 1.1\r\nconformsTo: http://iipc.github.io/warc-specifications/specifications/warc-format/warc-1.1/\r\nisPartOf: {}\r\n",
            env!("CARGO_PKG_VERSION"),
            self.config.job_name
        );
        let warcinfo = WarcRecord::builder(RecordKind::Warcinfo, &warcinfo_id, date)
            .header("WARC-Filename", name)
            .header("Content-Type", "application/warc-fields")
            .block(info.into_bytes());
        write_record(&mut open, &warcinfo, self.config.gzip)?;
        Ok(open)
    }

    /// Flushes all files and returns `(path, records written)` for each.
    pub fn finish(mut self) -> Result<Vec<(PathBuf, usize)>, StoreError> {
        for (_, f) in std::mem::take(&mut self.open) {
            f.file.sync_all().map_err(|source| StoreError::IoFailure {
                path: f.path.clone(),
                source,
            })?;
            self.finished.push((f.path, f.records));
        }
        self.finished.sort();
        Ok(self.finished)
    }
}

fn write_record(
    file: &mut OpenWarc,
    record: &WarcRecord,
    gzip: bool,
) -> Result<(u64, u64), StoreError> {
    let raw = record.to_bytes();
    let bytes = if gzip {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&raw)
            .and_then(|_| enc.finish())
            .map_err(|source| StoreError::IoFailure {
                path: file.path.clone(),
                source,
            })?
    } else {
        raw
    };
    file.file
        .write_all(&bytes)
        .map_err(|source| StoreError::IoFailure {
            path: file.path.clone(),
            source,
        })?;
    let offset = file.written;
    file.written += bytes.len() as u64;
    file.records += 1;
    Ok((offset, bytes.len() as u64))
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
