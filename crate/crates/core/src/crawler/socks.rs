//! Minimal SOCKS5 client (RFC 1928): no authentication, CONNECT by hostname.
//!
//! The destination name is always sent as a domain-name address so the proxy
//! resolves it. Onion names cannot be resolved any other way.

use std::net::SocketAddr;

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;

use super::fetch::FetchError;

const VERSION: u8 = 0x05;
const NO_AUTH: u8 = 0x00;
const CMD_CONNECT: u8 = 0x01;
const ATYP_IPV4: u8 = 0x01;
const ATYP_DOMAIN: u8 = 0x03;
const ATYP_IPV6: u8 = 0x04;

pub fn reply_message(code: u8) -> &'static str {
    match code {
        0x01 => "general SOCKS server failure",
        0x02 => "connection not allowed by ruleset",
        0x03 => "network unreachable",
        0x04 => "host unreachable",
        0x05 => "connection refused",
        0x06 => "TTL expired",
        0x07 => "command not supported",
        0x08 => "address type not supported",
        _ => "unknown SOCKS reply",
    }
}

pub async fn connect(proxy: SocketAddr, host: &str, port: u16) -> Result<TcpStream, FetchError> {
    let mut stream = TcpStream::connect(proxy)
        .await
        .map_err(|e| FetchError::ProxyUnreachable(format!("{proxy}: {e}")))?;
    let io = |e: std::io::Error| FetchError::ProxyUnreachable(format!("{proxy}: {e}"));

    stream.write_all(&[VERSION, 1, NO_AUTH]).await.map_err(io)?;
    let mut choice = [0u8; 2];
    stream.read_exact(&mut choice).await.map_err(io)?;
    if choice != [VERSION, NO_AUTH] {
        return Err(FetchError::Protocol(format!(
            "proxy refused no-auth method (answered {choice:02x?})"
        )));
    }

    let name = host.as_bytes();
    let len = u8::try_from(name.len())
        .map_err(|_| FetchError::Protocol(format!("hostname too long for SOCKS5: {host}")))?;
    let mut req = Vec::with_capacity(7 + name.len());
    req.extend_from_slice(&[VERSION, CMD_CONNECT, 0x00, ATYP_DOMAIN, len]);
    req.extend_from_slice(name);
    req.extend_from_slice(&port.to_be_bytes());
    stream.write_all(&req).await.map_err(io)?;

    let mut head = [0u8; 4];
    stream.read_exact(&mut head).await.map_err(io)?;
    if head[0] != VERSION {
        return Err(FetchError::Protocol("bad SOCKS reply version".into()));
    }
    if head[1] != 0x00 {
        return Err(FetchError::HostUnreachable {
            host: host.to_string(),
            reply: head[1],
        });
    }
    let addr_len = match head[3] {
        ATYP_IPV4 => 4,
        ATYP_IPV6 => 16,
        ATYP_DOMAIN => {
            let mut l = [0u8; 1];
            stream.read_exact(&mut l).await.map_err(io)?;
            l[0] as usize
        }
        other => {
            return Err(FetchError::Protocol(format!(
                "unknown SOCKS address type {other}"
            )))
        }
    };
    let mut bound = vec![0u8; addr_len + 2];
    stream.read_exact(&mut bound).await.map_err(io)?;
    Ok(stream)
}
