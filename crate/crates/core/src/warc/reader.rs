//! Streaming WARC reader with framing and digest verification.
//!
//! Handles plain files and files of concatenated per-record gzip members.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::Path;

use flate2::bufread::GzDecoder;
use thiserror::Error;

use super::record::{sha1_digest, HttpMessage, RecordKind, WarcHeaders, FIRST_OBSERVED_FIELD};
use crate::model::Timestamp14;

#[derive(Debug, Error)]
pub enum ReadError {
    #[error("malformed record at byte {offset}: {reason}")]
    MalformedRecord { offset: u64, reason: String },
    #[error("{field} mismatch in record at byte {offset}")]
    DigestMismatch { offset: u64, field: &'static str },
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

/// One record as read back from a WARC file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureRecord {
    pub kind: RecordKind,
    pub record_id: String,
    pub target_uri: Option<String>,
    pub capture_time: Timestamp14,
    pub headers: WarcHeaders,
    pub block: Vec<u8>,
    /// Byte offset of the record (or its gzip member) in the file.
    pub offset: u64,
    /// Length in bytes of the record (or its gzip member) in the file.
    pub length: u64,
}

impl CaptureRecord {
    pub fn first_observed_uri(&self) -> Option<&str> {
        self.headers.get(FIRST_OBSERVED_FIELD)
    }

    pub fn is_http(&self) -> bool {
        self.headers
            .get("Content-Type")
            .is_some_and(|ct| ct.to_ascii_lowercase().starts_with("application/http"))
    }

    /// The HTTP message of request/response records.
    pub fn http(&self) -> Option<HttpMessage> {
        self.is_http()
            .then(|| HttpMessage::parse(&self.block))
            .flatten()
    }

    /// The entity body for HTTP records, the whole block otherwise.
    pub fn payload(&self) -> &[u8] {
        match self.http() {
            Some(msg) => &self.block[msg.body_offset..],
            None => &self.block,
        }
    }

    pub fn payload_digest(&self) -> String {
        sha1_digest(self.payload())
    }

    pub fn http_status(&self) -> Option<u16> {
        self.http().and_then(|m| m.status)
    }
}

/// Counts bytes consumed from the underlying reader.
struct Counting<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> Read for Counting<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.pos += n as u64;
        Ok(n)
    }
}

impl<R: BufRead> BufRead for Counting<R> {
    fn fill_buf(&mut self) -> io::Result<&[u8]> {
        self.inner.fill_buf()
    }

    fn consume(&mut self, amt: usize) {
        self.pos += amt as u64;
        self.inner.consume(amt);
    }
}

/// Iterator over the records of one WARC stream.
pub struct WarcReader<R: BufRead> {
    src: Counting<R>,
    gzip: Option<bool>,
    failed: bool,
}

impl WarcReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, ReadError> {
        Ok(Self::new(BufReader::new(File::open(path)?)))
    }
}

impl<R: BufRead> WarcReader<R> {
    pub fn new(inner: R) -> Self {
        Self::starting_at(inner, 0)
    }

    /// A reader whose first byte sits at `offset` in the original file.
    pub fn starting_at(inner: R, offset: u64) -> Self {
        Self {
            src: Counting { inner, pos: offset },
            gzip: None,
            failed: false,
        }
    }

    fn next_record(&mut self) -> Result<Option<CaptureRecord>, ReadError> {
        if self.src.fill_buf()?.is_empty() {
            return Ok(None);
        }
        let gzip = *self.gzip.get_or_insert_with(|| {
            self.src
                .inner
                .fill_buf()
                .is_ok_and(|b| b.starts_with(&[0x1f, 0x8b]))
        });
        let offset = self.src.pos;
        if gzip {
            let mut member = Vec::new();
            GzDecoder::new(&mut self.src)
                .read_to_end(&mut member)
                .map_err(|e| ReadError::MalformedRecord {
                    offset,
                    reason: format!("bad gzip member: {e}"),
                })?;
            let length = self.src.pos - offset;
            let mut inner = Counting {
                inner: &member[..],
                pos: 0,
            };
            let mut rec =
                parse_record(&mut inner, 0)?.ok_or_else(|| ReadError::MalformedRecord {
                    offset,
                    reason: "empty gzip member".into(),
                })?;
            if inner.pos as usize != member.len() {
                return Err(ReadError::MalformedRecord {
                    offset,
                    reason: "trailing bytes inside gzip member".into(),
                });
            }
            rec.offset = offset;
            rec.length = length;
            verify(&rec)?;
            Ok(Some(rec))
        } else {
            let rec = parse_record(&mut self.src, offset)?;
            if let Some(rec) = &rec {
                verify(rec)?;
            }
            Ok(rec)
        }
    }
}

impl<R: BufRead> Iterator for WarcReader<R> {
    type Item = Result<CaptureRecord, ReadError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_record() {
            Ok(Some(rec)) => Some(Ok(rec)),
            Ok(None) => None,
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Reads every record of a WARC file.
pub fn read_records(path: &Path) -> Result<WarcReader<BufReader<File>>, ReadError> {
    WarcReader::open(path)
}

/// Reads the single record at `offset`, checking that it spans `length` bytes.
pub fn read_record_at(path: &Path, offset: u64, length: u64) -> Result<CaptureRecord, ReadError> {
    let mut file = File::open(path)?;
    file.seek(SeekFrom::Start(offset))?;
    let mut reader = WarcReader::starting_at(BufReader::new(file.take(length)), offset);
    let rec = reader.next().ok_or_else(|| ReadError::MalformedRecord {
        offset,
        reason: "no record at offset".into(),
    })??;
    if rec.length != length {
        return Err(ReadError::MalformedRecord {
            offset,
            reason: format!("record spans {} bytes, index says {length}", rec.length),
        });
    }
    Ok(rec)
}

fn read_line<R: BufRead>(src: &mut Counting<R>, record_offset: u64) -> Result<String, ReadError> {
    let mut line = Vec::new();
    src.read_until(b'\n', &mut line)?;
    if !line.ends_with(b"\r\n") {
        return Err(ReadError::MalformedRecord {
            offset: src.pos,
            reason: format!("truncated header in record starting at byte {record_offset}"),
        });
    }
    line.truncate(line.len() - 2);
    String::from_utf8(line).map_err(|_| ReadError::MalformedRecord {
        offset: record_offset,
        reason: "header is not UTF-8".into(),
    })
}

fn parse_record<R: BufRead>(
    src: &mut Counting<R>,
    offset: u64,
) -> Result<Option<CaptureRecord>, ReadError> {
    if src.fill_buf()?.is_empty() {
        return Ok(None);
    }
    let malformed = |reason: String| ReadError::MalformedRecord { offset, reason };

    let version = read_line(src, offset)?;
    if version != "WARC/1.1" && version != "WARC/1.0" {
        return Err(malformed(format!("unexpected version line `{version}`")));
    }

    let mut fields: Vec<(String, String)> = Vec::new();
    loop {
        let line = read_line(src, offset)?;
        if line.is_empty() {
            break;
        }
        if line.starts_with([' ', '\t']) {
            let last = fields
                .last_mut()
                .ok_or_else(|| malformed("continuation line before any field".into()))?;
            last.1.push(' ');
            last.1.push_str(line.trim());
            continue;
        }
        let (name, value) = line
            .split_once(':')
            .ok_or_else(|| malformed(format!("bad field line `{line}`")))?;
        fields.push((name.trim().to_string(), value.trim().to_string()));
    }
    let mut headers = WarcHeaders::new();
    for (n, v) in fields {
        headers.push(n, v);
    }

    let required = |name: &str| {
        headers
            .get(name)
            .map(str::to_string)
            .ok_or_else(|| malformed(format!("missing {name}")))
    };
    let kind = RecordKind::parse(&required("WARC-Type")?);
    let record_id = required("WARC-Record-ID")?;
    let date = required("WARC-Date")?;
    let capture_time =
        Timestamp14::from_w3c(&date).map_err(|_| malformed(format!("bad WARC-Date `{date}`")))?;
    let content_length: u64 = required("Content-Length")?
        .parse()
        .map_err(|_| malformed("bad Content-Length".into()))?;

    let mut block = vec![0u8; content_length as usize];
    src.read_exact(&mut block)
        .map_err(|_| ReadError::MalformedRecord {
            offset: src.pos,
            reason: format!("block truncated in record starting at byte {offset}"),
        })?;
    let mut trailer = [0u8; 4];
    src.read_exact(&mut trailer)
        .map_err(|_| ReadError::MalformedRecord {
            offset: src.pos,
            reason: format!("record trailer truncated in record starting at byte {offset}"),
        })?;
    if &trailer != b"\r\n\r\n" {
        return Err(malformed("record not terminated by CRLF CRLF".into()));
    }

    Ok(Some(CaptureRecord {
        kind,
        record_id,
        target_uri: headers.get("WARC-Target-URI").map(str::to_string),
        capture_time,
        headers,
        block,
        offset,
        length: src.pos - offset,
    }))
}

fn verify(rec: &CaptureRecord) -> Result<(), ReadError> {
    if let Some(expected) = rec.headers.get("WARC-Block-Digest") {
        if expected.starts_with("sha1:") && !expected.eq_ignore_ascii_case(&sha1_digest(&rec.block))
        {
            return Err(ReadError::DigestMismatch {
                offset: rec.offset,
                field: "WARC-Block-Digest",
            });
        }
    }
    if let Some(expected) = rec.headers.get("WARC-Payload-Digest") {
        if expected.starts_with("sha1:") && !expected.eq_ignore_ascii_case(&rec.payload_digest()) {
            return Err(ReadError::DigestMismatch {
                offset: rec.offset,
                field: "WARC-Payload-Digest",
            });
        }
    }
    Ok(())
}
