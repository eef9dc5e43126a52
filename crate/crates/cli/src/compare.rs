//! Column-wise comparison of two result tables.

use crate::output::Table;

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnDiff {
    pub column: String,
    pub max_abs: f64,
    pub max_rel: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub columns: Vec<ColumnDiff>,
    /// Rows whose status differs.
    pub status_mismatches: usize,
}

impl Comparison {
    pub fn within(&self, rtol: f64, atol: f64) -> bool {
        self.status_mismatches == 0 && self.columns.iter().all(|c| c.max_abs <= atol || c.max_rel <= rtol)
    }
}

/// Compares every shared column except timing. Both NaN counts as equal,
/// one NaN as an infinite difference.
pub fn compare(a: &Table, b: &Table) -> Result<Comparison, String> {
    if a.headers != b.headers {
        return Err(format!("column mismatch: [{}] vs [{}]", a.headers.join(","), b.headers.join(",")));
    }
    if a.rows.len() != b.rows.len() {
        return Err(format!("row count mismatch: {} vs {}", a.rows.len(), b.rows.len()));
    }
    let mut columns = Vec::new();
    let mut status_mismatches = 0;
    for (j, name) in a.headers.iter().enumerate() {
        if name == "wall_ms" {
            continue;
        }
        if name == "status" {
            status_mismatches = a.rows.iter().zip(&b.rows).filter(|(x, y)| x[j] != y[j]).count();
            continue;
        }
        let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            let x: f64 = ra[j].parse().map_err(|_| format!("bad number `{}` in column {name}", ra[j]))?;
            let y: f64 = rb[j].parse().map_err(|_| format!("bad number `{}` in column {name}", rb[j]))?;
            let d = match (x.is_nan(), y.is_nan()) {
                (true, true) => 0.0,
                (false, false) => (x - y).abs(),
                _ => f64::INFINITY,
            };
            max_abs = max_abs.max(d);
            if d > 0.0 {
                max_rel = max_rel.max(d / x.abs().max(y.abs()));
            }
        }
        columns.push(ColumnDiff {
            column: name.clone(),
            max_abs,
            max_rel,
        });
    }
    Ok(Comparison {
        columns,
        status_mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[[&str; 3]]) -> Table {
        Table {
            headers: vec!["Q".into(), "status".into(), "wall_ms".into()],
            rows: rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        }
    }

    #[test]
    fn nan_and_timing_handling() {
        let a = table(&[["1.0", "ok", "5"], ["NaN", "ok", "1"]]);
        let b = table(&[["1.0", "ok", "9"], ["NaN", "ok", "2"]]);
        let c = compare(&a, &b).unwrap();
        assert!(c.within(0.0, 0.0));
        let d = table(&[["1.0", "ok", "5"], ["2.0", "ok", "1"]]);
        assert!(!compare(&a, &d).unwrap().within(1e-3, 1e-3));
        let e = table(&[["1.001", "ok", "5"], ["NaN", "failed", "1"]]);
        let c = compare(&a, &e).unwrap();
        assert_eq!(c.status_mismatches, 1);
        assert!((c.columns[0].max_rel - 0.001 / 1.001).abs() < 1e-12);
    }
}
