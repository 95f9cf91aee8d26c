//! Property tests for the identity, ingest, WARC and replay invariants.

mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{compare_with_oracle, random_log, ts};
use onion_archive::canonicalizer::{Canonicalizer, Observation, SiteId};
use onion_archive::crawler::FetchResult;
use onion_archive::ingest::{diff_lists, parse_list, SourceSpec};
use onion_archive::lookup::{CanonLookup, Unreachable};
use onion_archive::model::{CanonicalUri, OnionAddress, OnionVersion, Timestamp14};
use onion_archive::replay::{resolve_memento, Step};
use onion_archive::sim::random_address;
use onion_archive::warc::{
    build_index, read_records, warc_files_in, CdxEntry, CdxIndex, RecordKind, StoreConfig,
    WarcStore,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rt() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread()
        .build()
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn onion_validation_matches_regex(label in "[a-zA-Z0-9]{0,60}|[a-z2-7]{16}|[a-z2-7]{56}|[A-Z2-7]{56}") {
        let re = regex::Regex::new(r"^(?i)([a-z2-7]{16}|[a-z2-7]{56})\.onion$").unwrap();
        let host = format!("{label}.onion");
        let ours = OnionAddress::parse(&host);
        prop_assert_eq!(ours.is_ok(), re.is_match(&host), "{}", host);
        if let Ok(a) = ours {
            let v = if label.len() == 16 { OnionVersion::V2 } else { OnionVersion::V3 };
            prop_assert_eq!(a.version(), v);
            prop_assert_eq!(a.to_string(), host.to_ascii_lowercase());
        }
    }

    #[test]
    fn canonicalizer_matches_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log = random_log(&mut rng, 12, 1..=60, 0.15);
        if let Err(e) = compare_with_oracle(&mut rng, &log) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn canonicalizer_invariants(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log = random_log(&mut rng, 15, 1..=80, 0.2);
        let mut engine = Canonicalizer::new();
        for obs in &log {
            let _ = engine.register_observation(obs.clone());
        }
        // Every address belongs to exactly one site.
        let mut owners: BTreeMap<String, BTreeSet<SiteId>> = BTreeMap::new();
        let mut pairs: BTreeMap<(String, String), BTreeSet<SiteId>> = BTreeMap::new();
        let mut shifts_per_site: BTreeMap<SiteId, usize> = BTreeMap::new();
        for ev in engine.shifts() {
            *shifts_per_site.entry(ev.site_id).or_default() += 1;
        }
        for site in engine.sites() {
            let entries = &site.timeline.entries;
            prop_assert!(!entries.is_empty());
            prop_assert_eq!(entries.len() - 1, shifts_per_site.get(&site.site_id).copied().unwrap_or(0));
            for w in entries.windows(2) {
                prop_assert!(w[0].first_seen < w[1].first_seen);
            }
            for e in entries {
                prop_assert!(e.first_seen <= e.last_seen);
                owners.entry(e.uri.onion().unwrap().to_string()).or_default().insert(site.site_id);
            }
            for p in &site.aliases {
                pairs.entry((p.source.clone(), p.alias.clone())).or_default().insert(site.site_id);
            }
        }
        prop_assert!(owners.values().all(|s| s.len() == 1));
        prop_assert!(pairs.values().all(|s| s.len() == 1));
        // Lookups by any era's URI land on the same site, and answers come
        // from its timeline.
        for site in engine.sites() {
            let current = site.current_uri().clone();
            for e in &site.timeline.entries {
                let (id, cur) = engine.current_uri(&e.uri).unwrap();
                prop_assert_eq!(id, site.site_id);
                prop_assert_eq!(&cur, &current);
                prop_assert_eq!(engine.timeline_for(&e.uri).unwrap(), site);
                let (_, at) = engine.uri_at(&e.uri, &e.first_seen).unwrap();
                prop_assert_eq!(&at, &e.uri);
                let (_, before) = engine.uri_at(&e.uri, &ts("19990101000000")).unwrap();
                prop_assert_eq!(&before, &site.timeline.entries[0].uri);
            }
        }
    }

    #[test]
    fn diffing_a_list_against_itself_is_empty(n in 0usize..30, seed in any::<u64>()) {
        let rows = list_rows(n, seed);
        let obs = parse(&rows);
        let diff = diff_lists(&obs, &obs);
        prop_assert!(diff.observations.is_empty());
        prop_assert!(diff.removed.is_empty());
        let from_empty = diff_lists(&[], &obs);
        prop_assert_eq!(from_empty.observations.len(), n);
    }

    #[test]
    fn row_order_does_not_matter(n in 1usize..30, seed in any::<u64>(), rot in 0usize..30) {
        let mut rows = list_rows(n, seed);
        let a = parse(&rows);
        rows.rotate_left(rot % n);
        rows.reverse();
        let b = parse(&rows);
        prop_assert_eq!(diff_lists(&[], &a), diff_lists(&[], &b));
        prop_assert!(diff_lists(&a, &b).observations.is_empty());
    }

    #[test]
    fn nearest_capture_matches_brute_force(
        times in prop::collection::vec(0i64..10_000, 1..20),
        at in -100i64..10_100,
    ) {
        let base = ts("20200101000000");
        let uri = CanonicalUri::parse("http://expyuzz4wqqyqhjn.onion/").unwrap();
        let entries: Vec<CdxEntry> = times.iter().map(|t| entry(&uri, &base.plus_seconds(*t))).collect();
        let index = CdxIndex::from_entries(entries);
        let at = base.plus_seconds(at);
        let got = index.lookup_capture(&uri, &at).unwrap().timestamp.clone();
        let best = times
            .iter()
            .map(|t| base.plus_seconds(*t))
            .min_by_key(|t| ((t.unix() - at.unix()).abs(), t.unix()))
            .unwrap();
        prop_assert_eq!(got, best);
    }

    #[test]
    fn warc_round_trip(
        bodies in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..2048), 1..6),
        gzip in any::<bool>(),
        rollover in prop::option::of(512u64..4096),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let mut config = StoreConfig::new(dir.path(), "prop");
        config.gzip = gzip;
        if let Some(r) = rollover {
            config.rollover_bytes = r;
        }
        let limit = config.rollover_bytes;
        let mut store = WarcStore::new(config).unwrap();
        let mut written = Vec::new();
        for (i, body) in bodies.iter().enumerate() {
            let fetch = fetch(i, body.clone());
            match store.write_capture(&fetch, None) {
                Ok(_) => written.push((fetch.uri.to_string(), body.clone())),
                Err(_) => prop_assert!(fetch.response_block().len() as u64 > limit),
            }
        }
        let files = store.finish().unwrap();
        let on_disk = warc_files_in(dir.path()).unwrap();
        prop_assert_eq!(files.len(), on_disk.len());
        let mut got = Vec::new();
        for f in &on_disk {
            for r in read_records(f).unwrap() {
                let r = r.unwrap();
                if r.kind == RecordKind::Response {
                    got.push((r.target_uri.clone().unwrap(), r.payload().to_vec()));
                }
            }
        }
        got.sort();
        written.sort();
        prop_assert_eq!(&got, &written);
        prop_assert_eq!(build_index(&on_disk).unwrap().len(), written.len());
    }

    #[test]
    fn truncated_warc_is_an_error_not_a_panic(cut in 1usize..400, gzip in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let mut config = StoreConfig::new(dir.path(), "cut");
        config.gzip = gzip;
        let mut store = WarcStore::new(config).unwrap();
        store.write_capture(&fetch(0, b"<html>hello</html>".to_vec()), None).unwrap();
        let (path, _) = store.finish().unwrap().remove(0);
        let bytes = std::fs::read(&path).unwrap();
        let keep = bytes.len().saturating_sub(cut).max(1);
        std::fs::write(&path, &bytes[..keep]).unwrap();
        let results: Vec<_> = read_records(&path).unwrap().collect();
        prop_assert!(results.iter().any(|r| r.is_err()));
    }

    #[test]
    fn resolution_keeps_path_and_query(
        seed in any::<u64>(),
        path in "/[a-z]{1,8}(/[a-z]{1,8})?",
        query in prop::option::of("[a-z]=[0-9]{1,3}"),
        capture_era in 0usize..3,
        request_era in 0usize..3,
        at in 0i64..400,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let roots: Vec<CanonicalUri> = (0..3)
            .map(|_| CanonicalUri::parse(&format!("http://{}/", random_address(&mut rng, OnionVersion::V3))).unwrap())
            .collect();
        let base = ts("20200101000000");
        let mut engine = Canonicalizer::new();
        for (i, r) in roots.iter().enumerate() {
            let obs = Observation::new(r.clone(), "list", "site", base.plus_seconds(100 * i as i64 * 86_400)).unwrap();
            engine.register_observation(obs).unwrap();
        }
        let suffix = match &query {
            Some(q) => format!("{path}?{q}"),
            None => path.clone(),
        };
        let captured = roots[capture_era].join(&suffix).unwrap();
        let index = CdxIndex::from_entries(vec![entry(&captured, &base.plus_seconds(150 * 86_400))]);
        let target = roots[request_era].join(&suffix).unwrap();
        let at = base.plus_seconds(at * 86_400);
        let rt = rt();
        let resolved = rt.block_on(resolve_memento(&index, &engine as &dyn CanonLookup, &target, &at)).unwrap();
        let got = CanonicalUri::parse(&resolved.entry.original).unwrap();
        prop_assert_eq!(got.path(), target.path());
        prop_assert_eq!(got.query(), target.query());

        // Without a canonicalizer only the exact URI resolves.
        let degraded = rt.block_on(resolve_memento(&index, &Unreachable, &target, &at));
        prop_assert_eq!(degraded.is_ok(), capture_era == request_era);
        if let Ok(r) = degraded {
            prop_assert_eq!(r.step, Step::Direct);
            prop_assert!(r.trace.canon_status.is_some());
        }
    }
}

fn list_rows(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            format!(
                "site {i},http://{}",
                random_address(&mut rng, OnionVersion::V2)
            )
        })
        .collect()
}

fn parse(rows: &[String]) -> Vec<Observation> {
    let csv = format!("alias,onion_uri\n{}\n", rows.join("\n"));
    let spec = SourceSpec::new("list").observed_at(ts("20200101000000"));
    parse_list(csv.as_bytes(), &spec).unwrap().observations
}

fn entry(uri: &CanonicalUri, at: &Timestamp14) -> CdxEntry {
    CdxEntry {
        key: onion_archive::warc::surt_key(uri),
        timestamp: at.clone(),
        original: uri.to_string(),
        digest: "sha1:AAAA".into(),
        status: 200,
        length: 1,
        offset: 0,
        filename: "x.warc".into(),
    }
}

fn fetch(i: usize, body: Vec<u8>) -> FetchResult {
    let uri = CanonicalUri::parse(&format!("http://expyuzz4wqqyqhjn.onion/page-{i}.html")).unwrap();
    FetchResult {
        request_head: format!(
            "GET /page-{i}.html HTTP/1.1\r\nHost: expyuzz4wqqyqhjn.onion\r\n\r\n"
        )
        .into_bytes(),
        uri,
        status: 200,
        reason: "OK".into(),
        response_headers: vec![
            ("Content-Type".into(), "application/octet-stream".into()),
            ("Content-Length".into(), body.len().to_string()),
        ],
        body,
        fetch_started_at: ts("20200101000000").plus_seconds(i as i64),
        via_proxy: true,
    }
}
