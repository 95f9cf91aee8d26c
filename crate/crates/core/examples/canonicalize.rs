//! Site identity across address changes: register sightings, watch a shift
//! and a collision happen, then ask what the site was called at a given time.

use onion_archive::canonicalizer::{Canonicalizer, Observation, Resolution};
use onion_archive::model::{CanonicalUri, Timestamp14};

fn obs(uri: &str, source: &str, alias: &str, at: &str) -> Observation {
    Observation::new(
        CanonicalUri::parse(uri).unwrap(),
        source,
        alias,
        Timestamp14::parse(at).unwrap(),
    )
    .unwrap()
}

fn main() {
    let mut canon = Canonicalizer::new();
    let v2 = "http://bfnews3u2ox4m4ty.onion/";
    let v3 = "https://bfnews3u2ox4m4tyjljtkmlf5sq6wmwduhhbqvhsfwxyg3xamkbo25id.onion/";

    let steps = [
        obs(v2, "github", "BuzzFeed News", "20200301000000"),
        obs(v2, "wiki", "BuzzFeed", "20200415000000"),
        obs(v3, "github", "BuzzFeed News", "20210110000000"),
        // The retired address shows up again: held for review.
        obs(v2, "github", "BuzzFeed News", "20210201000000"),
    ];
    for o in steps {
        let at = o.observed_at.clone();
        match canon.register_observation(o) {
            Ok(outcome) => println!(
                "{at} {} {}",
                outcome.kind(),
                serde_json::to_string(&outcome).unwrap()
            ),
            Err(e) => println!("{at} rejected: {e}"),
        }
    }

    let old = CanonicalUri::parse(v2).unwrap();
    let (site, current) = canon.current_uri(&old).unwrap();
    println!("site {site} is now at {current}");
    for at in ["20200601000000", "20210301000000"] {
        let (_, uri) = canon
            .uri_at(&old, &Timestamp14::parse(at).unwrap())
            .unwrap();
        println!("at {at} it was {uri}");
    }

    for c in canon
        .list_pending()
        .into_iter()
        .map(|c| c.collision_id)
        .collect::<Vec<_>>()
    {
        let merged = canon
            .resolve_collision(c, &Resolution::MergeInto { site_id: site })
            .unwrap();
        println!("collision {c} merged into site {merged}");
    }
}
