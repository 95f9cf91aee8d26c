//! Runs a named simulator preset and prints each assertion's result.
//!
//! `cargo run --example scenario -- mid-crawl-shift 42`

use onion_archive::sim::{preset, run_scenario, PRESETS};

#[tokio::main]
async fn main() {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "two-era-shift".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let Some(scenario) = preset(&name, seed) else {
        eprintln!("unknown preset {name}; try one of {PRESETS:?}");
        std::process::exit(2);
    };
    let work = tempfile::tempdir().unwrap();
    let report = run_scenario(&scenario, work.path()).await.unwrap();
    for a in &report.assertions {
        let verdict = if a.passed { "ok  " } else { "FAIL" };
        println!(
            "{verdict} {} {}",
            serde_json::to_string(&a.check).unwrap(),
            a.evidence
        );
    }
    for (label, crawl) in &report.crawls {
        println!(
            "crawl {label}: {} captured, {} shifted targets",
            crawl.captured, crawl.shifted_targets
        );
    }
    println!(
        "{} in {:.0} ms",
        if report.passed { "passed" } else { "failed" },
        report.total_ms
    );
}
