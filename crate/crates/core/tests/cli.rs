use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

fn onionarc() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_onionarc"));
    cmd.env_remove("ONIONARC_CANON").env_remove("ONIONARC_LOG");
    cmd
}

fn json_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("not JSON: {l}: {e}")))
        .collect()
}

struct Service {
    child: Child,
    url: String,
}

impl Service {
    fn start(data_dir: &Path) -> Self {
        let mut child = onionarc()
            .args(["canon", "serve", "--bind", "127.0.0.1:0", "--data-dir"])
            .arg(data_dir)
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let started: Value = serde_json::from_str(&line).unwrap();
        let url = format!("http://{}", started["listening"].as_str().unwrap());
        Self { child, url }
    }

    fn run(&self, args: &[&str]) -> Output {
        onionarc()
            .args(args)
            .args(["--canon", &self.url])
            .output()
            .unwrap()
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = onionarc().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = onionarc().args(["query", "current"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ingest_then_query() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Service::start(&dir.path().join("canon"));
    let list = dir.path().join("master.csv");
    std::fs::write(
        &list,
        "alias,onion_uri\nBuzzfeed News,https://bfnews3u2ox4m4ty.onion\nSurface,https://example.com\n",
    )
    .unwrap();

    let out = svc.run(&[
        "ingest",
        list.to_str().unwrap(),
        "--source",
        "github",
        "--observed-at",
        "20200101000000",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lines = json_lines(&out);
    assert_eq!(lines[0]["skipped"]["reason"], "not_onion");
    assert_eq!(lines.last().unwrap()["summary"]["outcomes"]["new_site"], 1);

    let out = svc.run(&["query", "current", "--uri", "http://bfnews3u2ox4m4ty.onion"]);
    assert_eq!(out.status.code(), Some(0));
    let current = &json_lines(&out)[0];
    assert_eq!(current["current_uri"], "https://bfnews3u2ox4m4ty.onion/");

    let out = svc.run(&[
        "query",
        "timeline",
        "--uri",
        "https://bfnews3u2ox4m4ty.onion/",
    ]);
    let timeline = &json_lines(&out)[0];
    assert_eq!(timeline["timeline"].as_array().unwrap().len(), 1);

    let out = svc.run(&[
        "query",
        "at",
        "--uri",
        "https://bfnews3u2ox4m4ty.onion/",
        "--at",
        "20210101000000",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        json_lines(&out)[0]["uri_at"],
        "https://bfnews3u2ox4m4ty.onion/"
    );

    let out = svc.run(&["query", "current", "--uri", "http://nytimes3xbfgragh.onion"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(json_lines(&out)[0]["error"]
        .as_str()
        .unwrap()
        .contains("unknown_uri"));

    let out = svc.run(&["collisions", "list"]);
    assert_eq!(json_lines(&out)[0]["pending"], Value::Array(vec![]));
}

#[test]
fn unreachable_service_is_an_operational_error() {
    let out = onionarc()
        .args([
            "query",
            "current",
            "--uri",
            "http://bfnews3u2ox4m4ty.onion",
            "--canon",
            "http://127.0.0.1:9",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn scenario_then_verify_warcs() {
    let dir = tempfile::tempdir().unwrap();
    let out = onionarc()
        .args(["scenario", "run", "--preset", "robots-policy", "--workdir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json_lines(&out)[0]["passed"], true);

    let warcs: Vec<_> = std::fs::read_dir(dir.path().join("warcs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert!(!warcs.is_empty());
    let out = onionarc()
        .args(["warc", "verify"])
        .args(&warcs)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let reports = json_lines(&out);
    let records: u64 = reports.iter().map(|r| r["records"].as_u64().unwrap()).sum();
    // obey (3 captures) + ignore (6), three records each, plus one warcinfo per file.
    assert_eq!(warcs.len(), 2);
    assert_eq!(records, 27 + 2);
    assert!(reports.iter().all(|r| r["ok"] == true));

    let broken = dir.path().join("broken.warc");
    let bytes = std::fs::read(&warcs[0]).unwrap();
    std::fs::write(&broken, &bytes[..bytes.len() - 40]).unwrap();
    let out = onionarc()
        .args(["warc", "verify"])
        .arg(&broken)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(json_lines(&out)[0]["error"]
        .as_str()
        .unwrap()
        .contains("malformed"));
}

#[test]
fn failing_scenario_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = onionarc()
        .args(["scenario", "show", "robots-policy"])
        .output()
        .unwrap();
    let mut scenario = json_lines(&out).remove(0);
    scenario["script"]
        .as_array_mut()
        .unwrap()
        .push(serde_json::json!({"action": "assert", "check": "capture_count", "crawl": "obey", "equals": 42}));
    let path = dir.path().join("broken.json");
    std::fs::File::create(&path)
        .unwrap()
        .write_all(scenario.to_string().as_bytes())
        .unwrap();
    let out = onionarc()
        .args(["scenario", "run"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let report = &json_lines(&out)[0];
    assert_eq!(report["passed"], false);
    assert_eq!(
        report["assertions"].as_array().unwrap().last().unwrap()["passed"],
        false
    );
}
