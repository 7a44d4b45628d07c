//! Text formats for systems, solved tables, datasets and reports.
//!
//! Every file starts with a magic line `<kind> <version>`. Systems and
//! tables are JSON after that line; datasets and reports are comma
//! separated with `#` comment lines, so their magic line is a comment too
//! (`# opttopo-dataset 1`).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use opttopo_core::identification::Dataset;
use opttopo_core::{build_graph, NodeTable, Settings, SolveError, SolvedSystem, SystemSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const VERSION: u32 = 1;
pub const SYSTEM_MAGIC: &str = "opttopo-system";
pub const TABLE_MAGIC: &str = "opttopo-table";
pub const DATASET_MAGIC: &str = "opttopo-dataset";
pub const COMPARE_MAGIC: &str = "opttopo-compare";
pub const BENCH_MAGIC: &str = "opttopo-bench";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("expected a `{expected} {VERSION}` header, found `{found}`")]
    Magic { expected: &'static str, found: String },
    #[error("{kind} version {found} is not supported, this build reads version {VERSION}")]
    Version { kind: &'static str, found: String },
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed table: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {reason}")]
    Field { line: u64, reason: String },
    #[error("stored table is unusable: {0}")]
    Table(String),
}

pub fn read_file(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn write_file(path: &Path, text: &str) -> Result<(), FormatError> {
    fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.to_owned(),
        source,
    })
}

fn header(kind: &str) -> String {
    format!("{kind} {VERSION}")
}

/// Checks a `<kind> <version>` line.
fn check_magic(line: &str, kind: &'static str) -> Result<(), FormatError> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(kind) {
        return Err(FormatError::Magic {
            expected: kind,
            found: line.chars().take(40).collect(),
        });
    }
    match parts.next() {
        Some(v) if v == VERSION.to_string() && parts.next().is_none() => Ok(()),
        other => Err(FormatError::Version {
            kind,
            found: other.unwrap_or("").into(),
        }),
    }
}

fn split_json<'a>(text: &'a str, kind: &'static str) -> Result<&'a str, FormatError> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    check_magic(first.trim_end_matches('\r'), kind)?;
    Ok(body)
}

pub fn write_system(spec: &SystemSpec) -> String {
    let body = serde_json::to_string_pretty(spec).expect("system documents serialize");
    format!("{}\n{body}\n", header(SYSTEM_MAGIC))
}

pub fn parse_system(text: &str) -> Result<SystemSpec, FormatError> {
    Ok(serde_json::from_str(split_json(text, SYSTEM_MAGIC)?)?)
}

pub fn load_system(path: &Path) -> Result<SystemSpec, FormatError> {
    parse_system(&read_file(path)?)
}

/// Stored form of a solved system: the document it was solved from, the
/// settings and the node tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TableDocument {
    system: SystemSpec,
    settings: Settings,
    eval_count: u64,
    candidates: u64,
    wall_time: Duration,
    tables: Vec<NodeTable>,
}

pub fn write_table(s: &SolvedSystem) -> String {
    let doc = TableDocument {
        system: s.graph.spec().clone(),
        settings: s.settings.clone(),
        eval_count: s.eval_count,
        candidates: s.candidates,
        wall_time: s.wall_time,
        tables: s.tables.clone(),
    };
    let body = serde_json::to_string(&doc).expect("tables serialize");
    format!("{}\n{body}\n", header(TABLE_MAGIC))
}

pub fn parse_table(text: &str) -> Result<SolvedSystem, FormatError> {
    let doc: TableDocument = serde_json::from_str(split_json(text, TABLE_MAGIC)?)?;
    let graph = build_graph(&doc.system).map_err(|e| FormatError::Table(e.to_string()))?;
    SolvedSystem::from_parts(
        graph,
        doc.settings,
        doc.tables,
        doc.eval_count,
        doc.candidates,
        doc.wall_time,
    )
    .map_err(|e| match e {
        SolveError::Corrupt(m) => FormatError::Table(m),
        e => FormatError::Table(e.to_string()),
    })
}

pub fn load_table(path: &Path) -> Result<SolvedSystem, FormatError> {
    parse_table(&read_file(path)?)
}

/// Reads a dataset: a header row of dimension names, then numbers. Lines
/// starting with `#` are comments; a leading magic comment is checked when
/// present, so files from other tools load as well. Empty fields and `nan`
/// read as NaN and are dropped by the fit.
pub fn parse_dataset(text: &str, provenance: &str) -> Result<Dataset, FormatError> {
    if let Some(first) = text.lines().next() {
        let rest = first.trim_start_matches('#').trim();
        if first.starts_with('#') && rest.starts_with(DATASET_MAGIC) {
            check_magic(rest, DATASET_MAGIC)?;
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let columns: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut data = Dataset::new(columns, provenance);
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .map(|f| {
                if f.is_empty() {
                    Ok(f64::NAN)
                } else {
                    f.parse::<f64>().map_err(|_| FormatError::Field {
                        line,
                        reason: format!("`{f}` is not a number"),
                    })
                }
            })
            .collect::<Result<Vec<f64>, _>>()?;
        data.push(row).map_err(|e| FormatError::Field {
            line,
            reason: e.to_string(),
        })?;
    }
    Ok(data)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, FormatError> {
    parse_dataset(&read_file(path)?, &path.display().to_string())
}

pub fn write_dataset(data: &Dataset) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&data.columns).expect("in-memory write");
    for r in &data.rows {
        w.write_record(r.iter().map(|v| v.to_string())).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8");
    let mut out = format!("# {}\n", header(DATASET_MAGIC));
    if !data.provenance.is_empty() {
        out.push_str(&format!("# {}\n", data.provenance.replace('\n', " ")));
    }
    out.push_str(&body);
    out
}

/// Serializes report rows as CSV below a magic comment line.
pub fn write_report<T: Serialize>(kind: &str, rows: &[T]) -> Result<String, FormatError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let body = w.into_inner().map_err(|e| e.into_error())?;
    let body = String::from_utf8(body).expect("csv output is utf-8");
    Ok(format!("# {}\n{body}", header(kind)))
}

pub fn read_report<T: for<'de> Deserialize<'de>>(
    kind: &'static str,
    text: &str,
) -> Result<Vec<T>, FormatError> {
    let first = text.lines().next().unwrap_or("");
    check_magic(first.trim_start_matches('#').trim(), kind)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    Ok(rdr.deserialize().collect::<Result<Vec<T>, _>>()?)
}

impl From<io::Error> for FormatError {
    fn from(source: io::Error) -> Self {
        FormatError::Io {
            // unpathed errors come from writing the output stream
            path: PathBuf::from("<stdout>"),
            source,
        }
    }
}
