//! Crawls a simulated onion site through the simulator's SOCKS proxy and
//! writes WARC files.

use std::sync::Arc;

use onion_archive::canonicalizer::{Canonicalizer, Observation};
use onion_archive::clock::VirtualClock;
use onion_archive::crawler::{crawl, CrawlJob, ProxyEndpoint};
use onion_archive::model::{OnionVersion, Timestamp14};
use onion_archive::sim::{random_address, Era, SimNetwork, SimSite};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[tokio::main]
async fn main() {
    let start = Timestamp14::parse("20220101000000").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let era = Era {
        address: random_address(&mut rng, OnionVersion::V3),
        active_from: start.clone(),
    };
    let site = SimSite::generated("library", vec![era], 25, 7);
    let seed = site.root_uri(0);
    println!("{} pages reachable within depth 3", site.reachable(3).len());

    let clock = Arc::new(VirtualClock::stepping(start.clone(), 1));
    let network = SimNetwork::start(vec![site], clock.clone()).await.unwrap();

    let mut canon = Canonicalizer::new();
    canon
        .register_observation(Observation::new(seed.clone(), "example", "library", start).unwrap())
        .unwrap();

    let out = tempfile::tempdir().unwrap();
    let mut job = CrawlJob::new("library", vec![seed]);
    job.max_depth = 3;
    job.output_dir = out.path().to_path_buf();
    job.proxy = Some(ProxyEndpoint {
        host: "127.0.0.1".into(),
        port: network.proxy_addr().port(),
    });
    job.politeness.delay_ms = 10;

    let report = crawl(job, Arc::new(canon), clock).await.unwrap();
    println!(
        "fetched {}, captured {}, robots denied {}, errors {}",
        report.fetched, report.captured, report.robots_denied, report.errors
    );
    for c in report.captures.iter().take(5) {
        println!("  {} {} depth {}", c.status, c.uri, c.depth);
    }
    for f in &report.warc_files {
        println!("wrote {}", f.display());
    }
    network.shutdown().await;
}
