//! Local stand-in for the onion network: one HTTP listener per site and a
//! SOCKS5 stub that routes onion names to whichever site currently holds them.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{OriginalUri, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Router;
use serde::Serialize;
use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;

use super::site::SimSite;
use crate::canonicalizer::Observation;
use crate::clock::{Clock, VirtualClock};
use crate::model::{OnionAddress, Timestamp14};
use crate::server::RunningServer;
use crate::service::CanonService;

pub const REPLY_OK: u8 = 0x00;
pub const REPLY_HOST_UNREACHABLE: u8 = 0x04;
pub const REPLY_REFUSED: u8 = 0x05;
pub const REPLY_ADDRESS_TYPE: u8 = 0x08;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("no free local port: {0}")]
    PortExhausted(std::io::Error),
}

/// One CONNECT request seen by the stub proxy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProxyAuditEntry {
    pub name: String,
    pub port: u16,
    pub reply: u8,
    pub site: Option<String>,
    pub at: Timestamp14,
}

/// One response served by a simulated site.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ServedEntry {
    pub uri: String,
    pub status: u16,
    #[serde(skip)]
    pub body: Vec<u8>,
}

/// Publishes each site's new address to a canonicalizer once its era starts,
/// the way a directory list would.
struct Directory {
    service: Arc<CanonService>,
    source: String,
    announced: Vec<Option<usize>>,
}

struct Shared {
    sites: Vec<SimSite>,
    clock: Arc<VirtualClock>,
    audit: Mutex<Vec<ProxyAuditEntry>>,
    served: Mutex<Vec<ServedEntry>>,
    directory: Mutex<Option<Directory>>,
}

impl Shared {
    fn route(&self, name: &str) -> (u8, Option<usize>) {
        let host = name.to_ascii_lowercase();
        let Ok((address, _)) = OnionAddress::from_host(&host) else {
            return (REPLY_HOST_UNREACHABLE, None);
        };
        let now = self.clock.peek();
        for (i, site) in self.sites.iter().enumerate() {
            if let Some(era) = site.era_index_of(&address) {
                return if site.era_at(&now) == Some(era) {
                    (REPLY_OK, Some(i))
                } else {
                    // Retired or not yet live: the service does not answer.
                    (REPLY_REFUSED, Some(i))
                };
            }
        }
        (REPLY_HOST_UNREACHABLE, None)
    }

    fn announce(&self) {
        let mut guard = self.directory.lock().unwrap();
        let Some(dir) = guard.as_mut() else { return };
        let now = self.clock.peek();
        for (i, site) in self.sites.iter().enumerate() {
            if let Some(era) = site.era_at(&now).filter(|e| Some(*e) > dir.announced[i]) {
                let e = &site.eras[era];
                let obs = Observation::new(
                    site.root_uri(era),
                    dir.source.clone(),
                    site.name.clone(),
                    e.active_from.clone(),
                )
                .expect("era roots are onion uris");
                if let Err(err) = dir.service.observe(obs) {
                    tracing::warn!(site = %site.name, error = %err, "directory announcement rejected");
                }
                dir.announced[i] = Some(era);
            }
        }
    }
}

pub struct SimNetwork {
    shared: Arc<Shared>,
    proxy_addr: SocketAddr,
    proxy_task: JoinHandle<()>,
    site_servers: Vec<RunningServer>,
}

impl SimNetwork {
    /// Starts one listener per site and the stub proxy.
    pub async fn start(
        sites: Vec<SimSite>,
        clock: Arc<VirtualClock>,
    ) -> Result<Self, NetworkError> {
        let shared = Arc::new(Shared {
            sites,
            clock,
            audit: Mutex::new(Vec::new()),
            served: Mutex::new(Vec::new()),
            directory: Mutex::new(None),
        });
        let mut site_servers = Vec::new();
        let mut addrs = Vec::new();
        for i in 0..shared.sites.len() {
            let listener = TcpListener::bind("127.0.0.1:0")
                .await
                .map_err(NetworkError::PortExhausted)?;
            let router = Router::new()
                .fallback(serve_site)
                .with_state((shared.clone(), i));
            let server =
                RunningServer::spawn(listener, router).map_err(NetworkError::PortExhausted)?;
            addrs.push(server.local_addr());
            site_servers.push(server);
        }
        let listener = TcpListener::bind("127.0.0.1:0")
            .await
            .map_err(NetworkError::PortExhausted)?;
        let proxy_addr = listener.local_addr().map_err(NetworkError::PortExhausted)?;
        let proxy_shared = shared.clone();
        let addrs = Arc::new(addrs);
        let proxy_task = tokio::spawn(async move {
            loop {
                let Ok((stream, _)) = listener.accept().await else {
                    continue;
                };
                let shared = proxy_shared.clone();
                let addrs = addrs.clone();
                tokio::spawn(async move {
                    if let Err(e) = handle_socks(stream, &shared, &addrs).await {
                        tracing::debug!(error = %e, "stub proxy connection ended");
                    }
                });
            }
        });
        Ok(Self {
            shared,
            proxy_addr,
            proxy_task,
            site_servers,
        })
    }

    pub fn proxy_addr(&self) -> SocketAddr {
        self.proxy_addr
    }

    pub fn sites(&self) -> &[SimSite] {
        &self.shared.sites
    }

    pub fn site(&self, name: &str) -> Option<&SimSite> {
        self.shared.sites.iter().find(|s| s.name == name)
    }

    pub fn clock(&self) -> &Arc<VirtualClock> {
        &self.shared.clock
    }

    /// Announce era changes to `service` from now on. Eras already active
    /// count as announced.
    pub fn attach_directory(&self, service: Arc<CanonService>, source: impl Into<String>) {
        let now = self.shared.clock.peek();
        let announced = self.shared.sites.iter().map(|s| s.era_at(&now)).collect();
        *self.shared.directory.lock().unwrap() = Some(Directory {
            service,
            source: source.into(),
            announced,
        });
    }

    pub fn detach_directory(&self) {
        *self.shared.directory.lock().unwrap() = None;
    }

    /// Routing decision for `name` at the current virtual time.
    pub fn route(&self, name: &str) -> u8 {
        self.shared.route(name).0
    }

    pub fn audit(&self) -> Vec<ProxyAuditEntry> {
        self.shared.audit.lock().unwrap().clone()
    }

    pub fn served(&self) -> Vec<ServedEntry> {
        self.shared.served.lock().unwrap().clone()
    }

    pub async fn shutdown(self) {
        self.proxy_task.abort();
        for s in self.site_servers {
            let _ = s.shutdown().await;
        }
    }
}

async fn serve_site(
    State((shared, index)): State<(Arc<Shared>, usize)>,
    OriginalUri(uri): OriginalUri,
    headers: HeaderMap,
) -> Response {
    let site = &shared.sites[index];
    let host = headers
        .get(header::HOST)
        .and_then(|h| h.to_str().ok())
        .unwrap_or("")
        .to_string();
    let path = uri.path_and_query().map_or("/", |p| p.as_str());
    let served = site.serve(&host, path);
    shared.served.lock().unwrap().push(ServedEntry {
        uri: format!("http://{host}{path}"),
        status: served.status,
        body: served.body.clone(),
    });
    let mut response = (
        StatusCode::from_u16(served.status).unwrap_or(StatusCode::OK),
        served.body,
    )
        .into_response();
    let h = response.headers_mut();
    h.insert(
        header::CONTENT_TYPE,
        HeaderValue::from_static(served.content_type),
    );
    for (n, v) in served.headers {
        if let (Ok(n), Ok(v)) = (header::HeaderName::try_from(n), HeaderValue::from_str(&v)) {
            h.insert(n, v);
        }
    }
    response
}

/// SOCKS5 CONNECT with domain-name addressing only.
async fn handle_socks(
    mut stream: TcpStream,
    shared: &Shared,
    addrs: &[SocketAddr],
) -> std::io::Result<()> {
    let mut head = [0u8; 2];
    stream.read_exact(&mut head).await?;
    let mut methods = vec![0u8; head[1] as usize];
    stream.read_exact(&mut methods).await?;
    if head[0] != 0x05 || !methods.contains(&0x00) {
        stream.write_all(&[0x05, 0xff]).await?;
        return Ok(());
    }
    stream.write_all(&[0x05, 0x00]).await?;

    let mut req = [0u8; 4];
    stream.read_exact(&mut req).await?;
    if req[1] != 0x01 {
        return reply(&mut stream, 0x07).await;
    }
    if req[3] != 0x03 {
        return reply(&mut stream, REPLY_ADDRESS_TYPE).await;
    }
    let mut len = [0u8; 1];
    stream.read_exact(&mut len).await?;
    let mut name = vec![0u8; len[0] as usize];
    stream.read_exact(&mut name).await?;
    let mut port = [0u8; 2];
    stream.read_exact(&mut port).await?;
    let name = String::from_utf8_lossy(&name).into_owned();
    let port = u16::from_be_bytes(port);

    shared.announce();
    let (code, site) = shared.route(&name);
    shared.audit.lock().unwrap().push(ProxyAuditEntry {
        name: name.clone(),
        port,
        reply: code,
        site: site.map(|i| shared.sites[i].name.clone()),
        at: shared.clock.peek(),
    });
    let Some(site) = site.filter(|_| code == REPLY_OK) else {
        return reply(&mut stream, code).await;
    };
    let mut upstream = match TcpStream::connect(addrs[site]).await {
        Ok(s) => s,
        Err(_) => return reply(&mut stream, REPLY_REFUSED).await,
    };
    reply(&mut stream, REPLY_OK).await?;
    tokio::io::copy_bidirectional(&mut stream, &mut upstream).await?;
    Ok(())
}

async fn reply(stream: &mut TcpStream, code: u8) -> std::io::Result<()> {
    stream
        .write_all(&[0x05, code, 0x00, 0x01, 0, 0, 0, 0, 0, 0])
        .await
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crawler::socks;
    use crate::crawler::FetchError;
    use crate::sim::site::{Era, SimPage};

    fn ts(s: &str) -> Timestamp14 {
        Timestamp14::parse(s).unwrap()
    }

    fn site() -> SimSite {
        SimSite {
            name: "news".into(),
            eras: vec![
                Era {
                    address: "bfnews3u2ox4m4ty.onion".parse().unwrap(),
                    active_from: ts("20200101000000"),
                },
                Era {
                    address: "nytimes3xbfgragh.onion".parse().unwrap(),
                    active_from: ts("20200601000000"),
                },
            ],
            pages: vec![SimPage {
                path: "/".into(),
                ..SimPage::default()
            }],
            robots: None,
        }
    }

    #[tokio::test]
    async fn routes_by_era() {
        let clock = Arc::new(VirtualClock::new(ts("20200201000000")));
        let net = SimNetwork::start(vec![site()], clock.clone())
            .await
            .unwrap();
        let proxy = net.proxy_addr();

        let mut s = socks::connect(proxy, "bfnews3u2ox4m4ty.onion", 80)
            .await
            .unwrap();
        s.write_all(b"GET / HTTP/1.1\r\nHost: bfnews3u2ox4m4ty.onion\r\nConnection: close\r\n\r\n")
            .await
            .unwrap();
        let mut out = String::new();
        s.read_to_string(&mut out).await.unwrap();
        assert!(out.starts_with("HTTP/1.1 200"));
        assert!(out.contains("served as bfnews3u2ox4m4ty.onion/"));

        let err = socks::connect(proxy, "nytimes3xbfgragh.onion", 80)
            .await
            .unwrap_err();
        assert_eq!(
            err,
            FetchError::HostUnreachable {
                host: "nytimes3xbfgragh.onion".into(),
                reply: REPLY_REFUSED
            }
        );

        clock.set(ts("20200701000000"));
        let err = socks::connect(proxy, "bfnews3u2ox4m4ty.onion", 80)
            .await
            .unwrap_err();
        assert!(matches!(
            err,
            FetchError::HostUnreachable {
                reply: REPLY_REFUSED,
                ..
            }
        ));
        assert!(socks::connect(proxy, "www.nytimes3xbfgragh.onion", 80)
            .await
            .is_ok());

        let err = socks::connect(
            proxy,
            "zqktlwiuavvvqqt4ybvgvi7tyo4hjl5xgfuvpdf6otjiycgwqbym2qad.onion",
            80,
        )
        .await
        .unwrap_err();
        assert!(matches!(
            err,
            FetchError::HostUnreachable {
                reply: REPLY_HOST_UNREACHABLE,
                ..
            }
        ));

        let names: Vec<String> = net.audit().into_iter().map(|a| a.name).collect();
        assert_eq!(names.len(), 5);
        net.shutdown().await;
    }

    #[tokio::test]
    async fn directory_announces_new_eras() {
        let clock = Arc::new(VirtualClock::new(ts("20200201000000")));
        let net = SimNetwork::start(vec![site()], clock.clone())
            .await
            .unwrap();
        let svc = Arc::new(CanonService::in_memory());
        svc.observe(
            Observation::new(site().root_uri(0), "dir", "news", ts("20200101000000")).unwrap(),
        )
        .unwrap();
        net.attach_directory(svc.clone(), "dir");
        clock.set(ts("20200701000000"));
        let _ = socks::connect(net.proxy_addr(), "bfnews3u2ox4m4ty.onion", 80).await;
        let snap = svc.snapshot();
        let (_, current) =
            crate::canonicalizer::Canonicalizer::current_uri(&snap, &site().root_uri(0)).unwrap();
        assert_eq!(current, site().root_uri(1));
        net.shutdown().await;
    }
}
