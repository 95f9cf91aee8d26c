//! The `onionarc` command line.
//!
//! Structured output goes to stdout as JSON, logs go to stderr. Exit status
//! is 0 on success, 1 on operational errors and 2 on usage errors.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::canonicalizer::{CollisionId, Observation, Resolution, SiteId};
use crate::clock::SystemClock;
use crate::crawler::{crawl, CrawlJob};
use crate::ingest::{diff_snapshots, parse_list, ColumnMap, ColumnRef, SourceFormat, SourceSpec};
use crate::lookup::{CanonLookup, Unreachable};
use crate::model::{CanonicalUri, Timestamp14};
use crate::replay::{self, ReplayConfig};
use crate::server::RunningServer;
use crate::service::{self, CanonClient, ServeConfig};
use crate::sim::{preset, run_scenario, Scenario, PRESETS};
use crate::warc::{read_records, RecordKind};

const DEFAULT_CANON: &str = "http://127.0.0.1:8700";

#[derive(Debug, Parser)]
#[command(
    name = "onionarc",
    version,
    about = "Archive shifting .onion sites",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(flatten)]
    pub config: CliConfig,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CliConfig {
    /// Canonicalizer service endpoint.
    #[arg(long, global = true, env = "ONIONARC_CANON", default_value = DEFAULT_CANON)]
    pub canon: String,
    /// Log filter for stderr, e.g. `info` or `onion_archive=debug`.
    #[arg(long, global = true, env = "ONIONARC_LOG", default_value = "warn")]
    pub log: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Canonicalizer service.
    #[command(subcommand)]
    Canon(CanonCommand),
    /// Send observations from onion list files to the canonicalizer.
    Ingest(IngestArgs),
    /// Run a crawl job described by a TOML file.
    Crawl { jobfile: PathBuf },
    /// Replay service.
    #[command(subcommand)]
    Replay(ReplayCommand),
    /// Ask the canonicalizer about a URI.
    Query {
        #[arg(value_enum)]
        kind: QueryKind,
        #[arg(long)]
        uri: String,
        /// Required for `at`: 14-digit timestamp.
        #[arg(long)]
        at: Option<String>,
    },
    /// Inspect WARC files.
    #[command(subcommand)]
    Warc(WarcCommand),
    /// List or resolve pending collisions.
    #[command(subcommand)]
    Collisions(CollisionCommand),
    /// Run simulated-network scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
}

#[derive(Debug, Subcommand)]
pub enum CanonCommand {
    /// Serve the HTTP API, keeping state in an append-only log under `--data-dir`.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8700")]
        bind: SocketAddr,
        #[arg(long, default_value = "canon-data")]
        data_dir: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReplayCommand {
    /// Serve mementos and TimeMaps from the WARC files in `--warc-dir`.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long, default_value = "warcs")]
        warc_dir: PathBuf,
        /// Serve without a canonicalizer (single-URI replay).
        #[arg(long)]
        no_canon: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum QueryKind {
    Current,
    Timeline,
    At,
}

#[derive(Debug, Subcommand)]
pub enum WarcCommand {
    /// Re-read files, checking framing and digests.
    Verify {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CollisionCommand {
    /// Print collisions awaiting a decision.
    List,
    /// Merge a held observation into a site, or start a new site from it.
    Resolve {
        id: u64,
        /// Attach the observation to this site.
        #[arg(
            long,
            conflicts_with = "new_site",
            required_unless_present = "new_site"
        )]
        merge_into: Option<u64>,
        /// Make the observation a site of its own.
        #[arg(long)]
        new_site: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    /// Run a scenario file or a built-in preset and print the report.
    Run {
        #[arg(required_unless_present = "preset", conflicts_with = "preset")]
        file: Option<PathBuf>,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        preset: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Keep state here instead of a temporary directory.
        #[arg(long)]
        workdir: Option<PathBuf>,
    },
    /// Print a preset as a scenario file.
    Show {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        preset: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    ChangeLog,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// One CSV list, or with `--format change-log` successive snapshots oldest first.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Tag recorded with each observation, e.g. `github` or `wiki`.
    #[arg(long)]
    pub source: String,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    #[arg(long, default_value = "alias")]
    pub alias_column: String,
    #[arg(long, default_value = "onion_uri")]
    pub uri_column: String,
    #[arg(long)]
    pub time_column: Option<String>,
    /// Observation time for rows without one.
    #[arg(long)]
    pub observed_at: Option<String>,
}

#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

/// Parses `std::env::args` and runs the command.
pub fn main() -> ExitCode {
    main_from(std::env::args_os())
}

pub fn main_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_logging(&cli.config.log);
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(code) => code,
        Err(Failure(msg)) => {
            tracing::error!("{msg}");
            emit(&json!({ "error": msg }));
            ExitCode::from(1)
        }
    }
}

fn init_logging(filter: &str) {
    let filter = tracing_subscriber::EnvFilter::try_new(filter).unwrap_or_else(|_| "warn".into());
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn emit<T: Serialize>(value: &T) {
    use std::io::Write;
    let line = serde_json::to_string(value).expect("serializable output");
    // A closed pipe (e.g. `| head`) is not worth a panic.
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

async fn run(cli: Cli) -> Result<ExitCode, Failure> {
    let client = CanonClient::new(&cli.config.canon);
    match cli.command {
        Command::Canon(CanonCommand::Serve { bind, data_dir }) => {
            let (server, service) = service::serve(&ServeConfig { bind, data_dir }).await?;
            emit(&json!({
                "listening": server.local_addr().to_string(),
                "sites": service.snapshot().site_count(),
            }));
            serve_until_signal(server).await?;
        }
        Command::Ingest(args) => ingest(&client, args).await?,
        Command::Crawl { jobfile } => {
            let text = std::fs::read_to_string(&jobfile)
                .map_err(|e| format!("{}: {e}", jobfile.display()))?;
            let job = CrawlJob::from_toml(&text)?;
            let canon: Arc<dyn CanonLookup> = match &job.canonicalizer {
                Some(url) => Arc::new(CanonClient::new(url)),
                None => Arc::new(client),
            };
            let report = crawl(job, canon, Arc::new(SystemClock)).await?;
            emit(&report);
        }
        Command::Replay(ReplayCommand::Serve {
            bind,
            warc_dir,
            no_canon,
        }) => {
            let canon: Arc<dyn CanonLookup> = if no_canon {
                Arc::new(Unreachable)
            } else {
                Arc::new(client)
            };
            let (server, service) = replay::serve(&ReplayConfig { bind, warc_dir }, canon).await?;
            emit(&json!({
                "listening": server.local_addr().to_string(),
                "captures": service.index().len(),
            }));
            serve_until_signal(server).await?;
        }
        Command::Query { kind, uri, at } => {
            let uri = CanonicalUri::parse(&uri)?;
            let answer = match kind {
                QueryKind::Current => serde_json::to_value(client.current(&uri).await?)?,
                QueryKind::Timeline => serde_json::to_value(client.timeline(&uri).await?)?,
                QueryKind::At => {
                    let at = at.ok_or("`query at` needs --at <timestamp>")?;
                    serde_json::to_value(client.at(&uri, &Timestamp14::parse(&at)?).await?)?
                }
            };
            emit(&answer);
        }
        Command::Warc(WarcCommand::Verify { files }) => return Ok(verify(&files)),
        Command::Collisions(CollisionCommand::List) => {
            emit(&json!({ "pending": client.pending().await? }));
        }
        Command::Collisions(CollisionCommand::Resolve { id, merge_into, .. }) => {
            let decision = match merge_into {
                Some(site) => Resolution::MergeInto {
                    site_id: SiteId(site),
                },
                None => Resolution::NewSite,
            };
            let site = client.resolve(CollisionId(id), &decision).await?;
            emit(&json!({ "collision_id": id, "site_id": site }));
        }
        Command::Scenario(ScenarioCommand::Run {
            file,
            preset: name,
            seed,
            workdir,
        }) => {
            let scenario = match (file, name) {
                (Some(path), _) => Scenario::from_json(
                    &std::fs::read_to_string(&path)
                        .map_err(|e| format!("{}: {e}", path.display()))?,
                )?,
                (None, Some(name)) => preset(&name, seed).ok_or("unknown preset")?,
                (None, None) => unreachable!("clap requires one"),
            };
            let temp;
            let dir = match &workdir {
                Some(d) => d.as_path(),
                None => {
                    temp = tempfile::tempdir()?;
                    temp.path()
                }
            };
            let report = run_scenario(&scenario, dir).await?;
            emit(&report);
            if !report.passed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Scenario(ScenarioCommand::Show { preset: name, seed }) => {
            emit(&preset(&name, seed).ok_or("unknown preset")?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

async fn serve_until_signal(server: RunningServer) -> Result<(), Failure> {
    #[cfg(unix)]
    {
        let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())?;
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    tokio::signal::ctrl_c().await?;
    tracing::info!("shutting down");
    server.shutdown().await?;
    Ok(())
}

async fn ingest(client: &CanonClient, args: IngestArgs) -> Result<(), Failure> {
    let spec = SourceSpec {
        source_tag: args.source.clone(),
        format: match args.format {
            FormatArg::Csv => SourceFormat::Csv,
            FormatArg::ChangeLog => SourceFormat::ChangeLog,
        },
        column_map: ColumnMap {
            alias: ColumnRef::Name(args.alias_column),
            uri: ColumnRef::Name(args.uri_column),
            observed_at: args.time_column.map(ColumnRef::Name),
        },
        default_observed_at: args
            .observed_at
            .as_deref()
            .map(Timestamp14::parse)
            .transpose()?,
    };
    if matches!(spec.format, SourceFormat::Csv) && args.files.len() != 1 {
        return Err(Failure("csv format takes exactly one file".into()));
    }
    let mut snapshots = Vec::new();
    for path in &args.files {
        let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let parsed = parse_list(file, &spec)?;
        for skipped in &parsed.skipped {
            emit(&json!({ "file": path, "skipped": skipped }));
        }
        snapshots.push(parsed.observations);
    }
    let (mut observations, removed): (Vec<Observation>, Vec<String>) = match spec.format {
        SourceFormat::Csv => (snapshots.pop().unwrap_or_default(), Vec::new()),
        SourceFormat::ChangeLog => diff_snapshots(&snapshots),
    };
    for alias in &removed {
        emit(&json!({ "removed": alias }));
    }
    // The canonicalizer wants each site's observations in time order.
    observations.sort_by(|a, b| a.observed_at.cmp(&b.observed_at));
    let mut counts = std::collections::BTreeMap::<&'static str, usize>::new();
    for obs in &observations {
        let line: Value = match client.observe(obs).await {
            Ok(outcome) => {
                *counts.entry(outcome_kind(&outcome)).or_default() += 1;
                json!({ "uri": obs.uri.to_string(), "alias": obs.alias, "outcome": outcome })
            }
            Err(e @ crate::service::ClientError::Unavailable(_)) => return Err(e.into()),
            Err(e) => {
                *counts.entry("rejected").or_default() += 1;
                json!({ "uri": obs.uri.to_string(), "alias": obs.alias, "rejected": e.to_string() })
            }
        };
        emit(&line);
    }
    emit(
        &json!({ "summary": { "observations": observations.len(), "removed": removed.len(), "outcomes": counts } }),
    );
    Ok(())
}

fn outcome_kind(outcome: &crate::canonicalizer::Outcome) -> &'static str {
    use crate::canonicalizer::Outcome;
    match outcome {
        Outcome::Known { .. } => "known",
        Outcome::NewSite { .. } => "new_site",
        Outcome::Shift(_) => "shift",
        Outcome::Collision { .. } => "collision",
    }
}

#[derive(Serialize)]
struct VerifyReport {
    file: PathBuf,
    ok: bool,
    records: usize,
    responses: usize,
    requests: usize,
    metadata: usize,
    with_first_observed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn verify(files: &[PathBuf]) -> ExitCode {
    let mut all_ok = true;
    for file in files {
        let mut report = VerifyReport {
            file: file.clone(),
            ok: true,
            records: 0,
            responses: 0,
            requests: 0,
            metadata: 0,
            with_first_observed: 0,
            error: None,
        };
        match read_records(file) {
            Ok(reader) => {
                for record in reader {
                    match record {
                        Ok(r) => {
                            report.records += 1;
                            match r.kind {
                                RecordKind::Response => report.responses += 1,
                                RecordKind::Request => report.requests += 1,
                                RecordKind::Metadata => report.metadata += 1,
                                _ => {}
                            }
                            if r.first_observed_uri().is_some() {
                                report.with_first_observed += 1;
                            }
                        }
                        Err(e) => {
                            report.ok = false;
                            report.error = Some(e.to_string());
                            break;
                        }
                    }
                }
            }
            Err(e) => {
                report.ok = false;
                report.error = Some(e.to_string());
            }
        }
        all_ok &= report.ok;
        emit(&report);
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_from(["onionarc"]), ExitCode::from(2));
        assert_eq!(
            main_from(["onionarc", "query", "sideways", "--uri", "x"]),
            ExitCode::from(2)
        );
        assert_eq!(
            main_from(["onionarc", "collisions", "resolve", "3"]),
            ExitCode::from(2)
        );
        assert_eq!(main_from(["onionarc", "--help"]), ExitCode::SUCCESS);
    }

    #[test]
    fn resolve_flags() {
        let cli = Cli::try_parse_from([
            "onionarc",
            "collisions",
            "resolve",
            "3",
            "--merge-into",
            "1",
        ])
        .unwrap();
        assert!(matches!(
            cli.command,
            Command::Collisions(CollisionCommand::Resolve {
                id: 3,
                merge_into: Some(1),
                new_site: false
            })
        ));
        assert!(Cli::try_parse_from([
            "onionarc",
            "collisions",
            "resolve",
            "3",
            "--merge-into",
            "1",
            "--new-site"
        ])
        .is_err());
    }
}
