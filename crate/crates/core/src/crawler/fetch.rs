//! Protocol-level capture engine: HTTP/1.1 GET through a SOCKS5 proxy.
//!
//! Each request is made on a fresh connection with `Connection: close`.
//! Requests to one host are serialized and spaced by the politeness delay;
//! robots.txt is fetched once per host and cached for the fetcher's lifetime.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::pin::Pin;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;

use super::robots::RobotsRules;
use super::socks;
use crate::clock::Clock;
use crate::model::{CanonicalUri, Host, Scheme, Timestamp14};

pub const MAX_REDIRECTS: usize = 5;
const MAX_HEAD_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotsMode {
    #[default]
    Obey,
    Ignore,
}

/// One HTTP exchange as captured.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResult {
    pub uri: CanonicalUri,
    /// The request exactly as sent.
    pub request_head: Vec<u8>,
    pub status: u16,
    pub reason: String,
    /// Response headers in received order. `Transfer-Encoding` is removed and
    /// `Content-Length` matches `body`, since the body is stored decoded.
    pub response_headers: Vec<(String, String)>,
    pub body: Vec<u8>,
    pub fetch_started_at: Timestamp14,
    pub via_proxy: bool,
}

impl FetchResult {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.response_headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn content_type(&self) -> &str {
        self.header("Content-Type").unwrap_or("")
    }

    pub fn request_headers(&self) -> Vec<(String, String)> {
        String::from_utf8_lossy(&self.request_head)
            .split("\r\n")
            .skip(1)
            .filter_map(|l| l.split_once(':'))
            .map(|(n, v)| (n.trim().to_string(), v.trim().to_string()))
            .collect()
    }

    /// Same-scheme-agnostic redirect target, if this is a redirect.
    pub fn redirect_target(&self) -> Option<CanonicalUri> {
        if !matches!(self.status, 301 | 302 | 303 | 307 | 308) {
            return None;
        }
        self.uri.join(self.header("Location")?).ok()
    }

    /// The HTTP response as stored in a WARC response record.
    pub fn response_block(&self) -> Vec<u8> {
        let mut out = format!("HTTP/1.1 {} {}\r\n", self.status, self.reason).into_bytes();
        for (n, v) in &self.response_headers {
            out.extend_from_slice(format!("{n}: {v}\r\n").as_bytes());
        }
        out.extend_from_slice(b"\r\n");
        out.extend_from_slice(&self.body);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FetchError {
    #[error("proxy unreachable: {0}")]
    ProxyUnreachable(String),
    #[error("{host} unreachable through proxy: {}", socks::reply_message(*reply))]
    HostUnreachable { host: String, reply: u8 },
    #[error("refusing to fetch {0} without a proxy")]
    OnionWithoutProxy(String),
    #[error("connection to {0} failed: {1}")]
    Connect(String, String),
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("response body exceeds {0} bytes")]
    TooLarge(u64),
    #[error("robots.txt disallows {0}")]
    RobotsDenied(String),
    #[error("more than {MAX_REDIRECTS} redirects")]
    TooManyRedirects { hops: Vec<FetchResult> },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("tls: {0}")]
    Tls(String),
}

impl FetchError {
    pub fn kind(&self) -> &'static str {
        match self {
            FetchError::ProxyUnreachable(_) => "proxy_unreachable",
            FetchError::HostUnreachable { .. } => "host_unreachable",
            FetchError::OnionWithoutProxy(_) => "onion_without_proxy",
            FetchError::Connect(..) => "connect",
            FetchError::Timeout(_) => "timeout",
            FetchError::TooLarge(_) => "too_large",
            FetchError::RobotsDenied(_) => "robots_denied",
            FetchError::TooManyRedirects { .. } => "too_many_redirects",
            FetchError::Protocol(_) => "protocol",
            FetchError::Tls(_) => "tls",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FetchConfig {
    /// SOCKS5 proxy. Without one only surface hosts can be fetched.
    pub proxy: Option<SocketAddr>,
    pub timeout: Duration,
    pub max_response_bytes: u64,
    pub user_agent: String,
    pub delay: Duration,
    pub robots: RobotsMode,
}

impl Default for FetchConfig {
    fn default() -> Self {
        Self {
            proxy: None,
            timeout: Duration::from_secs(60),
            max_response_bytes: 64 * 1024 * 1024,
            user_agent: format!("onion-archive/{}", env!("CARGO_PKG_VERSION")),
            delay: Duration::from_millis(1000),
            robots: RobotsMode::Obey,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Page,
    Robots,
}

/// One request start, for politeness auditing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FetchLogEntry {
    pub host: String,
    pub uri: String,
    pub kind: RequestKind,
    /// Offset from the fetcher's creation.
    #[serde(with = "duration_ms")]
    pub started: Duration,
}

mod duration_ms {
    use std::time::Duration;

    pub fn serialize<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1000.0)
    }
}

#[derive(Default)]
struct HostState {
    last_start: Option<Instant>,
    robots: Option<RobotsRules>,
}

trait Stream: AsyncRead + AsyncWrite + Unpin + Send {}
impl<T: AsyncRead + AsyncWrite + Unpin + Send> Stream for T {}

pub struct Fetcher {
    config: FetchConfig,
    clock: Arc<dyn Clock>,
    hosts: Mutex<HashMap<String, Arc<tokio::sync::Mutex<HostState>>>>,
    log: Mutex<Vec<FetchLogEntry>>,
    local_resolutions: Mutex<Vec<String>>,
    epoch: Instant,
}

impl Fetcher {
    pub fn new(config: FetchConfig, clock: Arc<dyn Clock>) -> Self {
        Self {
            config,
            clock,
            hosts: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
            local_resolutions: Mutex::new(Vec::new()),
            epoch: Instant::now(),
        }
    }

    pub fn config(&self) -> &FetchConfig {
        &self.config
    }

    /// Every request start so far, in order.
    pub fn timing_log(&self) -> Vec<FetchLogEntry> {
        self.log.lock().unwrap().clone()
    }

    /// Hostnames this process resolved itself (direct surface fetches only).
    pub fn local_resolutions(&self) -> Vec<String> {
        self.local_resolutions.lock().unwrap().clone()
    }

    /// Fetches `uri`, following up to five same-host redirects. Every hop is
    /// returned as its own result, in order.
    pub async fn fetch(&self, uri: &CanonicalUri) -> Result<Vec<FetchResult>, FetchError> {
        let mut hops: Vec<FetchResult> = Vec::new();
        let mut current = uri.clone();
        loop {
            let hop = match self.fetch_one(&current).await {
                Ok(hop) => hop,
                Err(FetchError::RobotsDenied(_)) if !hops.is_empty() => return Ok(hops),
                Err(e) => return Err(e),
            };
            let next = hop
                .redirect_target()
                .filter(|t| t.host() == current.host() && t.port() == current.port());
            hops.push(hop);
            match next {
                Some(_) if hops.len() > MAX_REDIRECTS => {
                    return Err(FetchError::TooManyRedirects { hops })
                }
                Some(next) => current = next,
                None => return Ok(hops),
            }
        }
    }

    async fn fetch_one(&self, uri: &CanonicalUri) -> Result<FetchResult, FetchError> {
        let host_key = uri.authority();
        let host = self
            .hosts
            .lock()
            .unwrap()
            .entry(host_key.clone())
            .or_default()
            .clone();
        let mut state = host.lock().await;

        let mut delay = self.config.delay;
        if self.config.robots == RobotsMode::Obey {
            if state.robots.is_none() {
                let robots_uri = uri.join("/robots.txt").expect("static path joins");
                let released = self.wait_turn(&mut state, delay).await;
                self.record(&host_key, &robots_uri, RequestKind::Robots, released);
                let rules = match self.request(&robots_uri).await {
                    Ok(resp) if resp.status == 200 => {
                        RobotsRules::parse(&self.config.user_agent, &resp.body)
                    }
                    Ok(_) => RobotsRules::allow_all(),
                    Err(
                        e @ (FetchError::Timeout(_)
                        | FetchError::Protocol(_)
                        | FetchError::TooLarge(_)),
                    ) => {
                        tracing::debug!(host = %host_key, error = %e, "robots.txt unreadable, allowing all");
                        RobotsRules::allow_all()
                    }
                    Err(e) => return Err(e),
                };
                state.robots = Some(rules);
            }
            let rules = state.robots.as_ref().expect("loaded above");
            if !rules.allowed(uri) {
                return Err(FetchError::RobotsDenied(uri.to_string()));
            }
            if let Some(crawl_delay) = rules.crawl_delay() {
                delay = delay.max(crawl_delay);
            }
        }

        let released = self.wait_turn(&mut state, delay).await;
        self.record(&host_key, uri, RequestKind::Page, released);
        self.request(uri).await
    }

    /// Sleeps until `delay` has passed since the host's last request and
    /// returns the release instant.
    async fn wait_turn(&self, state: &mut HostState, delay: Duration) -> Instant {
        if let Some(last) = state.last_start {
            let due = last + delay;
            let now = Instant::now();
            if due > now {
                tokio::time::sleep(due - now).await;
            }
        }
        let released = Instant::now();
        state.last_start = Some(released);
        released
    }

    fn record(&self, host: &str, uri: &CanonicalUri, kind: RequestKind, released: Instant) {
        self.log.lock().unwrap().push(FetchLogEntry {
            host: host.to_string(),
            uri: uri.to_string(),
            kind,
            started: released.duration_since(self.epoch),
        });
    }

    /// A single GET with no politeness or robots handling.
    pub async fn request(&self, uri: &CanonicalUri) -> Result<FetchResult, FetchError> {
        let fetch_started_at = self.clock.now();
        let request_head = format!(
            "GET {} HTTP/1.1\r\nHost: {}\r\nUser-Agent: {}\r\nAccept: */*\r\nAccept-Encoding: identity\r\nConnection: close\r\n\r\n",
            uri.request_target(),
            uri.authority(),
            self.config.user_agent
        )
        .into_bytes();
        let limit = self.config.max_response_bytes;
        let exchange = async {
            let mut stream = self.connect(uri).await?;
            stream
                .write_all(&request_head)
                .await
                .map_err(|e| FetchError::Protocol(e.to_string()))?;
            read_response(&mut stream, limit).await
        };
        let raw = tokio::time::timeout(self.config.timeout, exchange)
            .await
            .map_err(|_| FetchError::Timeout(self.config.timeout))??;
        Ok(FetchResult {
            uri: uri.clone(),
            request_head,
            status: raw.status,
            reason: raw.reason,
            response_headers: raw.headers,
            body: raw.body,
            fetch_started_at,
            via_proxy: self.config.proxy.is_some(),
        })
    }

    async fn connect(&self, uri: &CanonicalUri) -> Result<Pin<Box<dyn Stream>>, FetchError> {
        let host = uri.host_str();
        let port = uri.effective_port();
        let tcp = match self.config.proxy {
            Some(proxy) => socks::connect(proxy, &host, port).await?,
            None => {
                if matches!(uri.host(), Host::Onion { .. }) {
                    return Err(FetchError::OnionWithoutProxy(host));
                }
                self.local_resolutions.lock().unwrap().push(host.clone());
                TcpStream::connect((host.as_str(), port))
                    .await
                    .map_err(|e| FetchError::Connect(host.clone(), e.to_string()))?
            }
        };
        match uri.scheme() {
            Scheme::Http => Ok(Box::pin(tcp)),
            Scheme::Https => {
                // Onion services authenticate through their address; their
                // certificates are commonly self-signed.
                let onion = matches!(uri.host(), Host::Onion { .. });
                let connector = native_tls_connector(onion)?;
                let tls = connector
                    .connect(&host, tcp)
                    .await
                    .map_err(|e| FetchError::Tls(e.to_string()))?;
                Ok(Box::pin(tls))
            }
        }
    }
}

fn native_tls_connector(
    accept_any_cert: bool,
) -> Result<tokio_native_tls::TlsConnector, FetchError> {
    let mut builder = tokio_native_tls::native_tls::TlsConnector::builder();
    if accept_any_cert {
        builder.danger_accept_invalid_certs(true);
    }
    builder
        .build()
        .map(tokio_native_tls::TlsConnector::from)
        .map_err(|e| FetchError::Tls(e.to_string()))
}

struct RawResponse {
    status: u16,
    reason: String,
    headers: Vec<(String, String)>,
    body: Vec<u8>,
}

async fn read_response<S: AsyncRead + Unpin>(
    stream: S,
    limit: u64,
) -> Result<RawResponse, FetchError> {
    let proto = |e: std::io::Error| FetchError::Protocol(e.to_string());
    let mut reader = BufReader::new(stream);
    let mut head = Vec::new();
    loop {
        let n = reader.read_until(b'\n', &mut head).await.map_err(proto)?;
        if n == 0 {
            return Err(FetchError::Protocol(
                "connection closed before response head".into(),
            ));
        }
        if head.ends_with(b"\r\n\r\n") || head == b"\r\n" {
            break;
        }
        if head.len() > MAX_HEAD_BYTES {
            return Err(FetchError::Protocol("response head too large".into()));
        }
    }

    let mut header_buf = [httparse::EMPTY_HEADER; 128];
    let mut parsed = httparse::Response::new(&mut header_buf);
    match parsed.parse(&head) {
        Ok(httparse::Status::Complete(_)) => {}
        _ => return Err(FetchError::Protocol("unparseable response head".into())),
    }
    let status = parsed.code.unwrap_or(0);
    let reason = parsed.reason.unwrap_or("").to_string();
    let mut headers: Vec<(String, String)> = parsed
        .headers
        .iter()
        .map(|h| {
            (
                h.name.to_string(),
                String::from_utf8_lossy(h.value).trim().to_string(),
            )
        })
        .collect();
    let get = |name: &str| {
        headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.clone())
    };
    let chunked =
        get("Transfer-Encoding").is_some_and(|v| v.to_ascii_lowercase().contains("chunked"));
    let content_length = get("Content-Length").and_then(|v| v.parse::<u64>().ok());

    let body = if matches!(status, 100..=199 | 204 | 304) {
        Vec::new()
    } else if chunked {
        read_chunked(&mut reader, limit).await?
    } else if let Some(len) = content_length {
        if len > limit {
            return Err(FetchError::TooLarge(limit));
        }
        let mut body = vec![0u8; len as usize];
        reader
            .read_exact(&mut body)
            .await
            .map_err(|_| FetchError::Protocol("body shorter than Content-Length".into()))?;
        body
    } else {
        let mut body = Vec::new();
        (&mut reader)
            .take(limit + 1)
            .read_to_end(&mut body)
            .await
            .map_err(proto)?;
        if body.len() as u64 > limit {
            return Err(FetchError::TooLarge(limit));
        }
        body
    };

    if chunked || content_length.is_none() {
        headers.retain(|(n, _)| {
            !n.eq_ignore_ascii_case("Transfer-Encoding")
                && !n.eq_ignore_ascii_case("Content-Length")
        });
        headers.push(("Content-Length".to_string(), body.len().to_string()));
    }
    Ok(RawResponse {
        status,
        reason,
        headers,
        body,
    })
}

async fn read_chunked<R: AsyncBufReadExt + Unpin>(
    reader: &mut R,
    limit: u64,
) -> Result<Vec<u8>, FetchError> {
    let proto = |msg: &str| FetchError::Protocol(msg.to_string());
    let mut body = Vec::new();
    loop {
        let mut line = String::new();
        reader
            .read_line(&mut line)
            .await
            .map_err(|_| proto("bad chunk size line"))?;
        let size_str = line.trim().split(';').next().unwrap_or("");
        let size = u64::from_str_radix(size_str, 16).map_err(|_| proto("bad chunk size"))?;
        if size == 0 {
            // Trailer section ends with an empty line.
            loop {
                line.clear();
                let n = reader
                    .read_line(&mut line)
                    .await
                    .map_err(|_| proto("bad trailer"))?;
                if n == 0 || line.trim().is_empty() {
                    return Ok(body);
                }
            }
        }
        if body.len() as u64 + size > limit {
            return Err(FetchError::TooLarge(limit));
        }
        let start = body.len();
        body.resize(start + size as usize, 0);
        reader
            .read_exact(&mut body[start..])
            .await
            .map_err(|_| proto("truncated chunk"))?;
        let mut crlf = [0u8; 2];
        reader
            .read_exact(&mut crlf)
            .await
            .map_err(|_| proto("missing chunk terminator"))?;
    }
}
