//! Curated onion lists (CSV) into observation streams.
//!
//! A list is a CSV file with a header row. Which columns hold the alias, the
//! onion URI and (optionally) the sighting time is configured per source.
//! Successive snapshots of the same list are compared with [`diff_lists`] so
//! only new sites and changed URIs reach the canonicalizer.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonicalizer::{Observation, ObservationError};
use crate::model::{CanonicalUri, Timestamp14, UriError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl ColumnRef {
    fn resolve(&self, headers: &csv::StringRecord) -> Option<usize> {
        match self {
            ColumnRef::Index(i) => (*i < headers.len()).then_some(*i),
            ColumnRef::Name(name) => headers.iter().position(|h| h.trim() == name),
        }
    }

    fn describe(&self) -> String {
        match self {
            ColumnRef::Index(i) => format!("#{i}"),
            ColumnRef::Name(name) => name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub alias: ColumnRef,
    pub uri: ColumnRef,
    #[serde(default)]
    pub observed_at: Option<ColumnRef>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            alias: ColumnRef::Name("alias".into()),
            uri: ColumnRef::Name("onion_uri".into()),
            observed_at: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    #[default]
    Csv,
    /// A series of list snapshots, compared pairwise.
    ChangeLog,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub source_tag: String,
    #[serde(default)]
    pub format: SourceFormat,
    #[serde(default)]
    pub column_map: ColumnMap,
    #[serde(default)]
    pub default_observed_at: Option<Timestamp14>,
}

impl SourceSpec {
    pub fn new(source_tag: impl Into<String>) -> Self {
        Self {
            source_tag: source_tag.into(),
            format: SourceFormat::Csv,
            column_map: ColumnMap::default(),
            default_observed_at: None,
        }
    }

    pub fn observed_at(mut self, at: Timestamp14) -> Self {
        self.default_observed_at = Some(at);
        self
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("column `{0}` not found in the header row")]
    MissingColumn(String),
    #[error("no timestamp column is mapped and no default observation time was given")]
    NoTimestampAvailable,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// A data row that produced no observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRow {
    /// 1-based data row number (the header is row 0).
    pub row: usize,
    pub value: String,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NotOnion,
    MalformedUri,
    EmptyField,
    BadTimestamp,
    ShortRow,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedList {
    pub observations: Vec<Observation>,
    pub skipped: Vec<SkippedRow>,
}

/// Parses one list snapshot into observations, one per valid onion row.
pub fn parse_list<R: Read>(input: R, spec: &SourceSpec) -> Result<ParsedList, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(ParsedList::default());
    }
    let cols = &spec.column_map;
    let column = |c: &ColumnRef| {
        c.resolve(&headers)
            .ok_or_else(|| IngestError::MissingColumn(c.describe()))
    };
    let alias_col = column(&cols.alias)?;
    let uri_col = column(&cols.uri)?;
    let time_col = cols.observed_at.as_ref().map(column).transpose()?;
    if time_col.is_none() && spec.default_observed_at.is_none() {
        return Err(IngestError::NoTimestampAvailable);
    }

    let mut parsed = ParsedList::default();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let skip = |value: &str, reason| SkippedRow {
            row,
            value: value.to_string(),
            reason,
        };
        let (Some(alias), Some(raw_uri)) = (record.get(alias_col), record.get(uri_col)) else {
            parsed.skipped.push(skip("", SkipReason::ShortRow));
            continue;
        };
        let observed_at = match time_col {
            Some(c) => match record.get(c).map(parse_time) {
                Some(Some(ts)) => ts,
                _ => {
                    parsed
                        .skipped
                        .push(skip(record.get(c).unwrap_or(""), SkipReason::BadTimestamp));
                    continue;
                }
            },
            None => spec.default_observed_at.clone().expect("checked above"),
        };
        let uri = match parse_list_uri(raw_uri) {
            Ok(uri) => uri,
            Err(UriError::Onion(_)) => {
                parsed.skipped.push(skip(raw_uri, SkipReason::NotOnion));
                continue;
            }
            Err(_) => {
                parsed.skipped.push(skip(raw_uri, SkipReason::MalformedUri));
                continue;
            }
        };
        match Observation::new(uri, &spec.source_tag, alias, observed_at) {
            Ok(obs) => parsed.observations.push(obs),
            Err(ObservationError::NotOnion(_)) => {
                parsed.skipped.push(skip(raw_uri, SkipReason::NotOnion))
            }
            Err(ObservationError::EmptyField(_)) => {
                parsed.skipped.push(skip(raw_uri, SkipReason::EmptyField))
            }
        }
    }
    Ok(parsed)
}

// Lists often carry bare hostnames.
fn parse_list_uri(raw: &str) -> Result<CanonicalUri, UriError> {
    if raw.contains("://") {
        CanonicalUri::parse(raw)
    } else {
        CanonicalUri::parse(&format!("http://{raw}"))
    }
}

fn parse_time(raw: &str) -> Option<Timestamp14> {
    Timestamp14::parse(raw)
        .or_else(|_| Timestamp14::from_w3c(raw))
        .ok()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListDiff {
    /// New sites and changed URIs, ordered by alias.
    pub observations: Vec<Observation>,
    /// Aliases present in the old snapshot but not the new one. Reported only.
    pub removed: Vec<String>,
}

/// Compares two snapshots of one source, matching rows by alias.
pub fn diff_lists(old: &[Observation], new: &[Observation]) -> ListDiff {
    let by_alias = |list: &[Observation]| -> BTreeMap<String, Observation> {
        list.iter().map(|o| (o.alias.clone(), o.clone())).collect()
    };
    let old = by_alias(old);
    let new = by_alias(new);
    let observations = new
        .iter()
        .filter(|(alias, obs)| old.get(*alias).is_none_or(|prev| prev.uri != obs.uri))
        .map(|(_, obs)| obs.clone())
        .collect();
    let removed = old
        .keys()
        .filter(|alias| !new.contains_key(*alias))
        .cloned()
        .collect();
    ListDiff {
        observations,
        removed,
    }
}

/// Flattens a chronological series of snapshots into the observations that
/// matter: everything in the first snapshot, then each successive diff.
pub fn diff_snapshots(snapshots: &[Vec<Observation>]) -> (Vec<Observation>, Vec<String>) {
    let mut out = Vec::new();
    let mut removed = Vec::new();
    let mut prev: &[Observation] = &[];
    for snap in snapshots {
        let diff = diff_lists(prev, snap);
        out.extend(diff.observations);
        removed.extend(diff.removed);
        prev = snap;
    }
    (out, removed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SourceSpec {
        SourceSpec::new("github").observed_at(Timestamp14::parse("20200101000000").unwrap())
    }

    #[test]
    fn buzzfeed_row() {
        let csv = "alias,onion_uri\nBuzzfeed News,https://bfnews3u2ox4m4ty.onion\n";
        let parsed = parse_list(csv.as_bytes(), &spec()).unwrap();
        assert_eq!(parsed.observations.len(), 1);
        let obs = &parsed.observations[0];
        assert_eq!(obs.uri.to_string(), "https://bfnews3u2ox4m4ty.onion/");
        assert_eq!(obs.source, "github");
        assert_eq!(obs.alias, "Buzzfeed News");
        assert!(parsed.skipped.is_empty());
    }

    #[test]
    fn empty_file() {
        assert_eq!(
            parse_list("".as_bytes(), &spec()).unwrap(),
            ParsedList::default()
        );
        let header_only = parse_list("alias,onion_uri\n".as_bytes(), &spec()).unwrap();
        assert!(header_only.observations.is_empty());
    }

    #[test]
    fn surface_and_malformed_rows_are_reported() {
        let csv = "alias,onion_uri\nEx,example.com\nBad,http://abc.onion\nNo scheme,nytimes3xbfgragh.onion\nBlank,\n";
        let parsed = parse_list(csv.as_bytes(), &spec()).unwrap();
        assert_eq!(parsed.observations.len(), 1);
        assert_eq!(
            parsed.observations[0].uri.to_string(),
            "http://nytimes3xbfgragh.onion/"
        );
        let reasons: Vec<_> = parsed
            .skipped
            .iter()
            .map(|s| (s.row, s.reason.clone()))
            .collect();
        assert_eq!(
            reasons,
            vec![
                (1, SkipReason::NotOnion),
                (2, SkipReason::NotOnion),
                (4, SkipReason::MalformedUri)
            ]
        );
    }

    #[test]
    fn column_errors() {
        let csv = "name,url\nx,y\n";
        assert!(matches!(
            parse_list(csv.as_bytes(), &spec()),
            Err(IngestError::MissingColumn(c)) if c == "alias"
        ));
        let no_time = SourceSpec::new("github");
        assert!(matches!(
            parse_list("alias,onion_uri\n".as_bytes(), &no_time),
            Err(IngestError::NoTimestampAvailable)
        ));
    }

    #[test]
    fn per_row_timestamp_and_index_columns() {
        let mut spec = SourceSpec::new("wiki");
        spec.column_map = ColumnMap {
            alias: ColumnRef::Index(1),
            uri: ColumnRef::Index(0),
            observed_at: Some(ColumnRef::Name("seen".into())),
        };
        let csv = "u,a,seen\nbfnews3u2ox4m4ty.onion,BF,20210304050607\nnytimes3xbfgragh.onion,NYT,2021-01-01T00:00:00Z\nnytimes3xbfgragh.onion,NYT,yesterday\n";
        let parsed = parse_list(csv.as_bytes(), &spec).unwrap();
        assert_eq!(parsed.observations.len(), 2);
        assert_eq!(
            parsed.observations[0].observed_at.as_str(),
            "20210304050607"
        );
        assert_eq!(
            parsed.observations[1].observed_at.as_str(),
            "20210101000000"
        );
        assert_eq!(parsed.skipped[0].reason, SkipReason::BadTimestamp);
    }

    #[test]
    fn diff_changes_and_removals() {
        let old = parse_list(
            "alias,onion_uri\nA,aaaaaaaaaaaaaaaa.onion\nB,bbbbbbbbbbbbbbbb.onion\nC,cccccccccccccccc.onion\n".as_bytes(),
            &spec(),
        )
        .unwrap()
        .observations;
        let new = parse_list(
            "alias,onion_uri\nB,bbbbbbbbbbbbbbb2.onion\nA,aaaaaaaaaaaaaaaa.onion\nD,dddddddddddddddd.onion\n".as_bytes(),
            &spec(),
        )
        .unwrap()
        .observations;
        assert!(diff_lists(&old, &old).observations.is_empty());
        let diff = diff_lists(&old, &new);
        let aliases: Vec<_> = diff.observations.iter().map(|o| o.alias.as_str()).collect();
        assert_eq!(aliases, vec!["B", "D"]);
        assert_eq!(diff.removed, vec!["C".to_string()]);
    }
}
