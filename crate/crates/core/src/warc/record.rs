use std::fmt;

use data_encoding::BASE32;
use sha1::{Digest, Sha1};

use crate::model::Timestamp14;

pub const WARC_VERSION: &str = "WARC/1.1";
pub const FIRST_OBSERVED_FIELD: &str = "WARC-X-First-Observed-URI";

/// `sha1:` followed by the base32 SHA-1 of `bytes`.
pub fn sha1_digest(bytes: &[u8]) -> String {
    format!("sha1:{}", BASE32.encode(&Sha1::digest(bytes)))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RecordKind {
    Warcinfo,
    Request,
    Response,
    Metadata,
    Resource,
    Revisit,
    Other(String),
}

impl RecordKind {
    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "warcinfo" => RecordKind::Warcinfo,
            "request" => RecordKind::Request,
            "response" => RecordKind::Response,
            "metadata" => RecordKind::Metadata,
            "resource" => RecordKind::Resource,
            "revisit" => RecordKind::Revisit,
            _ => RecordKind::Other(s.trim().to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            RecordKind::Warcinfo => "warcinfo",
            RecordKind::Request => "request",
            RecordKind::Response => "response",
            RecordKind::Metadata => "metadata",
            RecordKind::Resource => "resource",
            RecordKind::Revisit => "revisit",
            RecordKind::Other(s) => s,
        }
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Named fields of a WARC record, in file order. Lookups ignore case.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WarcHeaders(Vec<(String, String)>);

impl WarcHeaders {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.0.push((name.into(), value.into()));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(n, v)| (n.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A record ready to be written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarcRecord {
    pub headers: WarcHeaders,
    pub block: Vec<u8>,
}

impl WarcRecord {
    pub fn new_id() -> String {
        format!("<urn:uuid:{}>", uuid::Uuid::new_v4())
    }

    /// Starts a record with the mandatory fields. `Content-Length` and the
    /// block digest are added by [`WarcRecord::to_bytes`].
    pub fn builder(kind: RecordKind, record_id: &str, date: &Timestamp14) -> Self {
        let mut headers = WarcHeaders::new();
        headers.push("WARC-Type", kind.as_str());
        headers.push("WARC-Record-ID", record_id);
        headers.push("WARC-Date", date.to_w3c());
        Self {
            headers,
            block: Vec::new(),
        }
    }

    pub fn header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push(name, value);
        self
    }

    pub fn block(mut self, block: Vec<u8>) -> Self {
        self.block = block;
        self
    }

    /// Serialized record: version line, fields, blank line, block, two CRLFs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.block.len() + 512);
        out.extend_from_slice(WARC_VERSION.as_bytes());
        out.extend_from_slice(b"\r\n");
        for (name, value) in self.headers.iter() {
            out.extend_from_slice(format!("{name}: {value}\r\n").as_bytes());
        }
        if self.headers.get("WARC-Block-Digest").is_none() {
            out.extend_from_slice(
                format!("WARC-Block-Digest: {}\r\n", sha1_digest(&self.block)).as_bytes(),
            );
        }
        out.extend_from_slice(format!("Content-Length: {}\r\n\r\n", self.block.len()).as_bytes());
        out.extend_from_slice(&self.block);
        out.extend_from_slice(b"\r\n\r\n");
        out
    }
}

/// A parsed HTTP message inside a request or response block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpMessage {
    /// Status code for responses, `None` for requests.
    pub status: Option<u16>,
    pub headers: Vec<(String, String)>,
    pub body_offset: usize,
}

impl HttpMessage {
    /// Splits an `application/http` block into head and body.
    pub fn parse(block: &[u8]) -> Option<Self> {
        let head_end = find_subslice(block, b"\r\n\r\n")? + 4;
        let head = std::str::from_utf8(&block[..head_end]).ok()?;
        let mut lines = head.split("\r\n");
        let start = lines.next()?;
        let status = if start.starts_with("HTTP/") {
            Some(start.split_whitespace().nth(1)?.parse().ok()?)
        } else {
            None
        };
        let headers = lines
            .filter(|l| !l.is_empty())
            .filter_map(|l| {
                let (n, v) = l.split_once(':')?;
                Some((n.trim().to_string(), v.trim().to_string()))
            })
            .collect();
        Some(Self {
            status,
            headers,
            body_offset: head_end,
        })
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

pub(crate) fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        // SHA-1("") = da39a3ee5e6b4b0d3255bfef95601890afd80709
        assert_eq!(sha1_digest(b""), "sha1:3I42H3S6NNFQ2MSVX7XZKYAYSCX5QBYJ");
    }

    #[test]
    fn serialized_framing() {
        let ts = Timestamp14::parse("20210601120000").unwrap();
        let rec = WarcRecord::builder(RecordKind::Resource, "<urn:x:1>", &ts)
            .header("WARC-Target-URI", "http://x/")
            .block(b"hello".to_vec());
        let bytes = rec.to_bytes();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("WARC/1.1\r\nWARC-Type: resource\r\n"));
        assert!(text.contains("WARC-Date: 2021-06-01T12:00:00Z\r\n"));
        assert!(text.ends_with("Content-Length: 5\r\n\r\nhello\r\n\r\n"));
    }

    #[test]
    fn http_message_split() {
        let block = b"HTTP/1.1 404 Not Found\r\nContent-Type: text/html\r\n\r\n<p>gone</p>";
        let msg = HttpMessage::parse(block).unwrap();
        assert_eq!(msg.status, Some(404));
        assert_eq!(msg.header("content-type"), Some("text/html"));
        assert_eq!(&block[msg.body_offset..], b"<p>gone</p>");
    }
}
