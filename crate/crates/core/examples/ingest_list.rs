//! Two snapshots of a curated onion list: the diff becomes observations,
//! and the one changed address becomes a shift.

use onion_archive::canonicalizer::{Canonicalizer, Outcome};
use onion_archive::ingest::{diff_snapshots, parse_list, SourceSpec};
use onion_archive::model::Timestamp14;

const JANUARY: &str = "\
alias,onion_uri,category
ProPublica,https://p53lf57qovyuvwsc6xnrppyply3vtqm7l6pcobkmyqsiofyeznfu5uqd.onion,news
Keybase,http://keybase5wmilwokqirssclfnsqrjdsi7jdir5wy7y7iu3tanwmtp6oid.onion,tools
Tor Project,expyuzz4wqqyqhjn.onion,project
";

const JUNE: &str = "\
alias,onion_uri,category
ProPublica,https://p53lf57qovyuvwsc6xnrppyply3vtqm7l6pcobkmyqsiofyeznfu5uqd.onion/,news
Tor Project,http://2gzyxa5ihm7nsggfxnu52rck2vv4rvmdlkiu3zzui5du4xyclen53wid.onion,project
DuckDuckGo,https://duckduckgogg42xjoc72x3sjasowoarfbgcmvfimaftt6twagswzczad.onion,search
";

fn main() {
    let snapshots: Vec<_> = [("20210115000000", JANUARY), ("20210610000000", JUNE)]
        .into_iter()
        .map(|(at, csv)| {
            let spec = SourceSpec::new("github").observed_at(Timestamp14::parse(at).unwrap());
            let parsed = parse_list(csv.as_bytes(), &spec).unwrap();
            for skip in &parsed.skipped {
                println!("skipped row {}: {:?}", skip.row, skip.reason);
            }
            parsed.observations
        })
        .collect();

    let (observations, removed) = diff_snapshots(&snapshots);
    println!("{} observations, removed: {removed:?}", observations.len());

    let mut canon = Canonicalizer::new();
    for o in observations {
        let alias = o.alias.clone();
        match canon.register_observation(o).unwrap() {
            Outcome::Shift(ev) => println!(
                "{alias}: moved {} -> {} at {}",
                ev.from_uri, ev.to_uri, ev.shifted_at
            ),
            other => println!("{alias}: {}", other.kind()),
        }
    }
    let shifted = canon.sites().filter(|s| s.timeline.len() > 1).count();
    println!("{shifted} of {} sites changed address", canon.site_count());
}
