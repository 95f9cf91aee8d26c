//! Archives a site before and after it moves, then replays it: a request
//! for the new address at an old date is answered from the old address.

use std::sync::Arc;

use onion_archive::model::CanonicalUri;
use onion_archive::replay::ReplayService;
use onion_archive::service::CanonService;
use onion_archive::sim::{presets, run_scenario};

#[tokio::main]
async fn main() {
    let scenario = presets::two_era_shift(10, 4);
    let work = tempfile::tempdir().unwrap();
    let report = run_scenario(&scenario, work.path()).await.unwrap();
    println!("scenario passed: {}", report.passed);

    let canon = Arc::new(CanonService::open(&work.path().join("canon")).unwrap());
    let replay = ReplayService::open(work.path().join("warcs"), canon).unwrap();
    let site = &scenario.sites[0];
    let new_root: CanonicalUri = site.root_uri(1);

    let when = scenario.start.plus_seconds(31 * 86_400);
    let resolved = replay.resolve(&new_root, &when).await.unwrap();
    println!("request {new_root} at {when}");
    println!(
        "served {} captured {} via {:?}",
        resolved.entry.original, resolved.entry.timestamp, resolved.step
    );
    println!("{}", serde_json::to_string_pretty(&resolved.trace).unwrap());

    let timemap = replay
        .timemap(&new_root, "http://localhost:8080")
        .await
        .unwrap();
    print!("{}", timemap.to_link_format());
}
