//! Writes captures to WARC, reads them back, and builds a CDX index.

use onion_archive::crawler::FetchResult;
use onion_archive::model::{CanonicalUri, Timestamp14};
use onion_archive::warc::{build_index, read_records, Provenance, StoreConfig, WarcStore};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = StoreConfig::new(dir.path(), "demo");
    config.gzip = std::env::args().any(|a| a == "--gzip");
    let mut store = WarcStore::new(config).unwrap();

    let first = CanonicalUri::parse("http://expyuzz4wqqyqhjn.onion/").unwrap();
    let now = CanonicalUri::parse(
        "http://2gzyxa5ihm7nsggfxnu52rck2vv4rvmdlkiu3zzui5du4xyclen53wid.onion/",
    )
    .unwrap();
    for (i, path) in ["/", "/about.html"].iter().enumerate() {
        let uri = now.join(path).unwrap();
        let body = format!("<html><body>page {path}</body></html>").into_bytes();
        let fetch = FetchResult {
            request_head: format!("GET {path} HTTP/1.1\r\nHost: {}\r\n\r\n", uri.authority())
                .into_bytes(),
            uri,
            status: 200,
            reason: "OK".into(),
            response_headers: vec![
                ("Content-Type".into(), "text/html".into()),
                ("Content-Length".into(), body.len().to_string()),
            ],
            body,
            fetch_started_at: Timestamp14::parse("20230301120000")
                .unwrap()
                .plus_seconds(i as i64),
            via_proxy: true,
        };
        let provenance = Provenance {
            first_observed: first.clone(),
            site_id: None,
        };
        store.write_capture(&fetch, Some(&provenance)).unwrap();
    }

    let files = store.finish().unwrap();
    for (path, records) in &files {
        println!("{} ({records} records)", path.display());
        for rec in read_records(path).unwrap() {
            let rec = rec.unwrap();
            println!(
                "  {:<9} {} first-observed={}",
                rec.kind.as_str(),
                rec.target_uri.as_deref().unwrap_or("-"),
                rec.first_observed_uri().unwrap_or("-")
            );
        }
    }
    let paths: Vec<_> = files.into_iter().map(|(p, _)| p).collect();
    print!("{}", build_index(&paths).unwrap().to_text());
}
