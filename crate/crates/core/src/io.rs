//! Reading data and layouts, and writing results.
//!
//! Data files are numeric CSV with scans as rows; an optional header row is
//! recognised by containing a field that does not parse as a number. Layout
//! files list `name,width` per region in column order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dependence::TestOutcome;
use crate::error::{Error, Result};
use crate::experiment::{ExperimentResult, MethodResult};
use crate::network::{Adjacency, NetworkEstimate};
use crate::panel::{ComponentPanel, RegionLayout};

/// Version of the [`ResultDocument`] layout.
pub const SCHEMA_VERSION: u32 = 1;

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn parse_error(row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column,
        message: message.into(),
    }
}

/// Reads a numeric matrix. Rows and columns in errors are 1-based file
/// coordinates.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv_reader(path)?;
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (k, record) in reader.records().enumerate() {
        let line = k + 1;
        let record = record.map_err(|e| parse_error(line, 0, e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if k == 0 && record.iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_error(
                    line,
                    record.len().min(w) + 1,
                    format!("expected {w} fields, found {}", record.len()),
                ))
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(line, c + 1, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_error(line, c + 1, format!("non-finite value {field:?}")));
            }
            values.push(v);
        }
        rows += 1;
    }
    let width = width.ok_or(Error::EmptyInput("data file has no numeric rows"))?;
    Ok(DMatrix::from_row_slice(rows, width, &values))
}

/// Reads `name,width` lines; a first line whose width is not an integer is
/// taken as a header.
pub fn read_layout(path: &Path) -> Result<RegionLayout> {
    let mut reader = csv_reader(path)?;
    let mut names = Vec::new();
    let mut widths = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 1;
        let record = record.map_err(|e| parse_error(line, 0, e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != 2 {
            return Err(parse_error(line, 1, "layout lines are `name,width`"));
        }
        let width = match record[1].parse::<usize>() {
            Ok(w) => w,
            Err(_) if k == 0 => continue,
            Err(_) => return Err(parse_error(line, 2, format!("not a width: {:?}", &record[1]))),
        };
        names.push(record[0].to_string());
        widths.push(width);
    }
    if names.is_empty() {
        return Err(Error::EmptyInput("layout file lists no regions"));
    }
    RegionLayout::new(names, widths)
}

/// Reads a data file and splits it by its layout. Every panel is checked for
/// zero-variance columns.
pub fn read_panel_csv(data: &Path, layout: &Path) -> Result<(Vec<ComponentPanel>, RegionLayout)> {
    let layout = read_layout(layout)?;
    let m = read_matrix_csv(data)?;
    let panels = layout
        .split(&m)?
        .into_iter()
        .map(ComponentPanel::validate)
        .collect::<Result<_>>()?;
    Ok((panels, layout))
}

/// Everything a run produced, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema_version: u32,
    /// Version of the producing library.
    pub version: String,
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// Run settings as given.
    pub spec_echo: BTreeMap<String, String>,
    pub outcomes: Vec<TestOutcome>,
    pub network: Option<NetworkEstimate>,
    pub experiment: Option<ExperimentResult>,
}

impl ResultDocument {
    pub fn new(seed: Option<u64>, spec_echo: BTreeMap<String, String>) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            timestamp,
            spec_echo,
            outcomes: Vec::new(),
            network: None,
            experiment: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s).map_err(|e| parse_error(e.line(), e.column(), e.to_string()))?;
        if doc.schema_version > SCHEMA_VERSION {
            return Err(Error::Domain(format!(
                "document schema {} is newer than supported {SCHEMA_VERSION}",
                doc.schema_version
            )));
        }
        Ok(doc)
    }
}

fn region_name(names: &[String], s: usize) -> String {
    names.get(s).cloned().unwrap_or_else(|| format!("R{}", s + 1))
}

/// Tab-separated table with one row per pair.
pub fn outcome_table(outcomes: &[TestOutcome], names: &[String]) -> String {
    let mut out = String::from("region_s\tregion_t\tmethod\td_st\tstatistic\tp_value\tthreshold\treject\targmax\n");
    for o in outcomes {
        let argmax = o
            .argmax
            .map(|(i, j)| format!("{},{}", i + 1, j + 1))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6e}\t{:.6}\t{}\t{}",
            region_name(names, o.pair.0),
            region_name(names, o.pair.1),
            o.method,
            o.d_st,
            o.statistic,
            o.p_value,
            o.threshold,
            o.reject as u8,
            argmax
        );
    }
    out
}

/// `p` lines of comma-separated 0/1 values.
pub fn adjacency_grid(a: &Adjacency) -> String {
    let mut out = String::new();
    for row in a.grid() {
        let cells: Vec<&str> = row.iter().map(|&c| if c { "1" } else { "0" }).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// One `s,t` line per edge, using region names.
pub fn edge_list(a: &Adjacency, names: &[String]) -> String {
    a.edges()
        .into_iter()
        .map(|(s, t)| format!("{},{}\n", region_name(names, s), region_name(names, t)))
        .collect()
}

/// Parses a 0/1 grid as written by [`adjacency_grid`].
pub fn parse_adjacency_grid(text: &str) -> Result<Adjacency> {
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(c, f)| match f.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(parse_error(k + 1, c + 1, format!("expected 0 or 1, found {other:?}"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("empty adjacency grid"));
    }
    Adjacency::from_grid(&rows)
}

pub fn read_adjacency_grid(path: &Path) -> Result<Adjacency> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_adjacency_grid(&text)
}

/// Tab-separated summary with one row per method.
pub fn experiment_table(r: &ExperimentResult) -> String {
    let dims: Vec<String> = r.spec.dims.iter().map(|d| d.to_string()).collect();
    let prefix = format!(
        "{:?}\t{}\t{}\t{}\t{}",
        r.spec.kind,
        r.spec.model,
        r.spec.n,
        dims.join(","),
        r.spec.replicates
    )
    .to_lowercase();
    let network = r.results.iter().any(|m| matches!(m, MethodResult::Network { .. }));
    let mut out = if network {
        String::from("kind\tmodel\tn\tdims\treplicates\tmethod\tnettpr\tfwer\tfdr\tnettpr_se\tfwer_se\n")
    } else {
        String::from("kind\tmodel\tn\tdims\treplicates\tmethod\trate\tse\n")
    };
    for m in &r.results {
        let _ = match m {
            MethodResult::Rate { method, rate, se, .. } => {
                writeln!(out, "{prefix}\t{method}\t{rate:.6}\t{se:.6}")
            }
            MethodResult::Network {
                method,
                metrics,
                nettpr_se,
                fwer_se,
                ..
            } => writeln!(
                out,
                "{prefix}\t{method}\t{:.6}\t{:.6}\t{:.6}\t{nettpr_se:.6}\t{fwer_se:.6}",
                metrics.nettpr, metrics.fwer, metrics.fdr
            ),
        };
    }
    out
}
