//! Ready-made scenarios and address generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{Action, Check, CrawlAction, Scenario};
use super::site::{Era, SimPage, SimSite};
use crate::crawler::RobotsMode;
use crate::model::{OnionAddress, OnionVersion, Timestamp14};

const BASE32: &[u8] = b"abcdefghijklmnopqrstuvwxyz234567";
const DAY: i64 = 86_400;

/// A well-formed random onion address.
pub fn random_address<R: Rng + ?Sized>(rng: &mut R, version: OnionVersion) -> OnionAddress {
    let len = match version {
        OnionVersion::V2 => 16,
        OnionVersion::V3 => 56,
    };
    let label: String = (0..len)
        .map(|_| BASE32[rng.gen_range(0..32)] as char)
        .collect();
    OnionAddress::parse(&format!("{label}.onion")).expect("base32 label of valid length")
}

fn start() -> Timestamp14 {
    Timestamp14::parse("20200101000000").expect("valid")
}

fn eras<R: Rng>(rng: &mut R, starts: &[Timestamp14]) -> Vec<Era> {
    starts
        .iter()
        .map(|t| Era {
            address: random_address(rng, OnionVersion::V3),
            active_from: t.clone(),
        })
        .collect()
}

fn crawl(label: &str, sites: &[&str], max_depth: u32) -> CrawlAction {
    CrawlAction {
        label: label.into(),
        sites: sites.iter().map(|s| s.to_string()).collect(),
        seed_era: None,
        max_depth,
        robots: RobotsMode::Obey,
        delay_ms: 0,
        workers: 4,
        live_directory: false,
        max_pages_per_host: None,
        allow_embedded_cross_host: false,
        without_canonicalizer: false,
        gzip: false,
    }
}

fn ingest(site: &str) -> Action {
    Action::Ingest {
        site: site.into(),
        era: None,
        source: "sim-directory".into(),
    }
}

fn policy_checks(label: &str) -> Vec<Action> {
    vec![
        Action::Assert(Check::ScopeRespected {
            crawl: label.into(),
        }),
        Action::Assert(Check::PolitenessRespected {
            crawl: label.into(),
        }),
        Action::Assert(Check::NoLocalOnionDns {
            crawl: label.into(),
        }),
    ]
}

/// Two unshifted sites crawled together at depth 3, then replayed.
pub fn two_sites(pages_per_site: usize, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = start();
    let sites = vec![
        SimSite::generated(
            "market",
            eras(&mut rng, std::slice::from_ref(&t0)),
            pages_per_site,
            seed,
        ),
        SimSite::generated(
            "forum",
            eras(&mut rng, std::slice::from_ref(&t0)),
            pages_per_site,
            seed.wrapping_add(1),
        ),
    ];
    let mut c = crawl("both", &["market", "forum"], 3);
    c.delay_ms = 20;
    let mut script = vec![
        ingest("market"),
        ingest("forum"),
        Action::Advance { secs: 60 },
        Action::Crawl(c),
    ];
    for site in ["market", "forum"] {
        script.push(Action::Assert(Check::AllReachableCapturedOnce {
            crawl: "both".into(),
            site: site.into(),
        }));
    }
    script.push(Action::Assert(Check::ReplayIdentical {
        crawl: "both".into(),
    }));
    script.extend(policy_checks("both"));
    Scenario {
        name: "two-sites".into(),
        start: t0,
        clock_step_secs: 1,
        sites,
        script,
    }
}

/// One site moves to a new address between two crawls; the second crawl
/// starts from the stale address.
pub fn two_era_shift(pages: usize, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = start();
    let shift_at = t0.plus_seconds(150 * DAY);
    let sites = vec![SimSite::generated(
        "news",
        eras(&mut rng, &[t0.clone(), shift_at]),
        pages,
        seed,
    )];
    let mut after = crawl("after", &["news"], 2);
    after.seed_era = Some(0);
    let mut script = vec![
        ingest("news"),
        Action::Advance { secs: 30 * DAY },
        Action::Crawl(crawl("before", &["news"], 2)),
        Action::Assert(Check::AllReachableCapturedOnce {
            crawl: "before".into(),
            site: "news".into(),
        }),
        Action::Shift {
            site: "news".into(),
            ingest: true,
        },
        Action::Advance { secs: 30 * DAY },
        Action::Crawl(after),
        Action::Query {
            site: "news".into(),
            era: Some(0),
            kind: super::scenario::QueryKind::Timeline,
        },
        Action::Assert(Check::CurrentUri {
            site: "news".into(),
            era: 1,
        }),
        Action::Assert(Check::TimelineLen {
            site: "news".into(),
            len: 2,
        }),
        Action::Assert(Check::ShiftedTargets {
            crawl: "after".into(),
            at_least: 1,
        }),
        Action::Assert(Check::CapturesAfterShiftUseEra {
            crawl: "after".into(),
            site: "news".into(),
            era: 1,
        }),
        Action::Assert(Check::AllReachableCapturedOnce {
            crawl: "after".into(),
            site: "news".into(),
        }),
        Action::Assert(Check::TimemapSpansEras {
            site: "news".into(),
            path: "/".into(),
            eras: 2,
            mementos: 2,
        }),
        Action::Assert(Check::EraSubstitution {
            site: "news".into(),
            path: "/".into(),
            request_era: 1,
            at: t0.plus_seconds(31 * DAY),
            expect_era: 0,
        }),
        Action::Assert(Check::ReplayIdentical {
            crawl: "before".into(),
        }),
        Action::Assert(Check::ReplayIdentical {
            crawl: "after".into(),
        }),
    ];
    script.extend(policy_checks("before"));
    script.extend(policy_checks("after"));
    Scenario {
        name: "two-era-shift".into(),
        start: t0,
        clock_step_secs: 1,
        sites,
        script,
    }
}

/// The site moves while a single-worker crawl is running. A live directory
/// feed tells the canonicalizer, and the crawler follows the move.
pub fn mid_crawl_shift(pages: usize, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = start();
    // Each fetch advances virtual time by a second, so the move lands
    // partway through the crawl.
    let shift_at = t0.plus_seconds(60 + pages as i64 / 2);
    let sites = vec![SimSite::generated(
        "news",
        eras(&mut rng, &[t0.clone(), shift_at]),
        pages,
        seed,
    )];
    let mut c = crawl("live", &["news"], 4);
    c.workers = 1;
    c.live_directory = true;
    let mut script = vec![
        ingest("news"),
        Action::Advance { secs: 60 },
        Action::Crawl(c),
        Action::Assert(Check::CurrentUri {
            site: "news".into(),
            era: 1,
        }),
        Action::Assert(Check::CapturesAfterShiftUseEra {
            crawl: "live".into(),
            site: "news".into(),
            era: 1,
        }),
        Action::Assert(Check::ReplayIdentical {
            crawl: "live".into(),
        }),
    ];
    script.extend(policy_checks("live"));
    Scenario {
        name: "mid-crawl-shift".into(),
        start: t0,
        clock_step_secs: 1,
        sites,
        script,
    }
}

/// A site whose robots.txt disallows part of it, crawled once obeying and
/// once ignoring the rules.
pub fn robots_policy(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = start();
    let page = |path: &str, links: &[&str]| SimPage {
        path: path.into(),
        links: links.iter().map(|s| s.to_string()).collect(),
        ..SimPage::default()
    };
    let site = SimSite {
        name: "board".into(),
        eras: eras(&mut rng, std::slice::from_ref(&t0)),
        pages: vec![
            page("/", &["/about.html", "/private/", "/members/list.html"]),
            page("/about.html", &["/"]),
            page("/private/", &["/private/keys.html"]),
            page("/private/keys.html", &[]),
            page("/members/list.html", &["/members/1.html"]),
            page("/members/1.html", &[]),
        ],
        robots: Some(
            "User-agent: *\nDisallow: /private/\nDisallow: /members/1.html\nCrawl-delay: 0\n"
                .into(),
        ),
    };
    let mut obey = crawl("obey", &["board"], 3);
    obey.delay_ms = 10;
    let mut ignore = crawl("ignore", &["board"], 3);
    ignore.robots = RobotsMode::Ignore;
    ignore.delay_ms = 10;
    let mut script = vec![
        ingest("board"),
        Action::Crawl(obey),
        Action::Crawl(ignore),
        Action::Assert(Check::RobotsAdherence {
            crawl: "obey".into(),
            site: "board".into(),
            disallowed_captured: false,
        }),
        Action::Assert(Check::CaptureCount {
            crawl: "obey".into(),
            equals: 3,
        }),
        Action::Assert(Check::RobotsAdherence {
            crawl: "ignore".into(),
            site: "board".into(),
            disallowed_captured: true,
        }),
        Action::Assert(Check::AllReachableCapturedOnce {
            crawl: "ignore".into(),
            site: "board".into(),
        }),
    ];
    script.extend(policy_checks("obey"));
    script.extend(policy_checks("ignore"));
    Scenario {
        name: "robots-policy".into(),
        start: t0,
        clock_step_secs: 1,
        sites: vec![site],
        script,
    }
}

/// Looks up a preset by name.
pub fn preset(name: &str, seed: u64) -> Option<Scenario> {
    Some(match name {
        "two-sites" => two_sites(50, seed),
        "two-era-shift" => two_era_shift(20, seed),
        "mid-crawl-shift" => mid_crawl_shift(30, seed),
        "robots-policy" => robots_policy(seed),
        _ => return None,
    })
}

pub const PRESETS: [&str; 4] = [
    "two-sites",
    "two-era-shift",
    "mid-crawl-shift",
    "robots-policy",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            preset(name, 1).unwrap().validate().unwrap();
        }
        assert!(preset("nope", 1).is_none());
    }

    #[test]
    fn random_addresses_parse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for v in [OnionVersion::V2, OnionVersion::V3] {
            let a = random_address(&mut rng, v);
            assert_eq!(a.version(), v);
        }
    }
}
