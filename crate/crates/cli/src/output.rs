//! CSV output with a commented header.

use std::io::Write;
use std::path::Path;

use crate::config::Scenario;
use crate::sweep::{Row, COLUMNS};

pub const COUNTING: &str = "Q > 0: electrons leave the left reservoir per period";

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.12e}")
    }
}

/// Writes the table to `out`. Header lines start with `#`; the resolved
/// scenario is embedded so the file reproduces its own run.
pub fn write_table<W: Write>(out: W, scenario: &Scenario, rows: &[Row]) -> std::io::Result<()> {
    let mut out = out;
    writeln!(out, "# rcpump {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "# counting: {COUNTING}")?;
    let axes: Vec<&str> = scenario.axes.iter().map(|a| a.param.as_str()).collect();
    writeln!(out, "# axes: {}", if axes.is_empty() { "none".into() } else { axes.join(", ") })?;
    writeln!(out, "# config:")?;
    for line in scenario.to_toml().lines() {
        writeln!(out, "#   {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for row in rows {
        let v = row.values();
        let mut rec: Vec<String> = v[..13].iter().map(|&x| format_value(x)).collect();
        rec.push(row.status.clone());
        rec.push(format_value(v[13]));
        w.write_record(&rec)?;
    }
    w.flush()
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial table.
pub fn write_atomic(path: &Path, scenario: &Scenario, rows: &[Row]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    write_table(std::io::BufWriter::new(tmp.as_file_mut()), scenario, rows)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Parsed table: numeric columns by name plus the status column.
#[derive(Clone, Debug)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_table(path: &Path) -> std::io::Result<Table> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok(Table { headers, rows })
}
