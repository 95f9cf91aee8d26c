//! The canonicalizer as an HTTP service with a durable log, queried through
//! the client the crawler and replay use.

use std::net::SocketAddr;

use onion_archive::canonicalizer::Observation;
use onion_archive::model::{CanonicalUri, Timestamp14};
use onion_archive::service::{self, CanonClient, ServeConfig};

#[tokio::main]
async fn main() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServeConfig {
        bind: SocketAddr::from(([127, 0, 0, 1], 0)),
        data_dir: dir.path().to_path_buf(),
    };
    let (server, _service) = service::serve(&config).await.unwrap();
    println!("listening on {}", server.base_url());

    let client = CanonClient::new(server.base_url());
    let old = CanonicalUri::parse("http://expyuzz4wqqyqhjn.onion/").unwrap();
    let new = CanonicalUri::parse(
        "http://2gzyxa5ihm7nsggfxnu52rck2vv4rvmdlkiu3zzui5du4xyclen53wid.onion/",
    )
    .unwrap();
    for (uri, at) in [(&old, "20200101000000"), (&new, "20210715000000")] {
        let obs = Observation::new(
            uri.clone(),
            "wiki",
            "Tor Project",
            Timestamp14::parse(at).unwrap(),
        )
        .unwrap();
        let outcome = client.observe(&obs).await.unwrap();
        println!("observe {uri}: {}", outcome.kind());
    }

    let current = client.current(&old).await.unwrap();
    println!("current: {}", serde_json::to_string(&current).unwrap());
    let timeline = client.timeline(&new).await.unwrap();
    println!(
        "timeline: {}",
        serde_json::to_string_pretty(&timeline).unwrap()
    );
    let at = client
        .at(&new, &Timestamp14::parse("20200601000000").unwrap())
        .await
        .unwrap();
    println!("at 2020-06-01: {}", serde_json::to_string(&at).unwrap());
    server.shutdown().await.unwrap();

    // Everything acknowledged survives a restart.
    let (server, service) = service::serve(&config).await.unwrap();
    println!("after restart: {} site(s)", service.snapshot().site_count());
    server.shutdown().await.unwrap();
}
