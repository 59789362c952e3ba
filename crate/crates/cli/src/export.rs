//! Plot-ready tables with fixed, typed schemas, plus `figures_manifest.json`
//! describing which figure each table feeds.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Number, Value};
use trajlab::analysis::{CLUSTERS_HEADER, CORRELATIONS_HEADER};
use trajlab::eval::PERFORMANCE_HEADER;
use trajlab::io::write_atomic;

use crate::analyze::{
    ALIGNMENT_FILE, ALIGNMENT_HEADER, CLUSTERS_FILE, CORRELATIONS_FILE, KAPPA_FILE, KAPPA_HEADER, PEAKS_FILE,
    PEAKS_HEADER,
};
use crate::error::{CliError, Result};
use crate::manifest::ExportFormat;

pub const FIGURES_MANIFEST: &str = "figures_manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Col {
    Str,
    Int,
    Float,
    OptInt,
    OptFloat,
}

impl Col {
    fn name(self) -> &'static str {
        match self {
            Col::Str => "string",
            Col::Int => "integer",
            Col::Float => "number",
            Col::OptInt => "integer?",
            Col::OptFloat => "number?",
        }
    }

    fn parse(self, cell: &str) -> Option<Value> {
        if cell.is_empty() {
            return match self {
                Col::Str => Some(Value::String(String::new())),
                Col::OptInt | Col::OptFloat => Some(Value::Null),
                _ => None,
            };
        }
        match self {
            Col::Str => Some(Value::String(cell.to_string())),
            Col::Int | Col::OptInt => cell.parse::<u64>().ok().map(Value::from),
            Col::Float | Col::OptFloat => cell
                .parse::<f64>()
                .ok()
                .and_then(Number::from_f64)
                .map(Value::Number),
        }
    }
}

pub struct Table {
    pub name: &'static str,
    /// Relative to the output root.
    pub source: &'static str,
    pub columns: Vec<(&'static str, Col)>,
    pub required: bool,
    /// Command that produces the source.
    pub producer: &'static str,
}

fn cols(header: &[&'static str], types: &[Col]) -> Vec<(&'static str, Col)> {
    header.iter().copied().zip(types.iter().copied()).collect()
}

pub fn tables() -> Vec<Table> {
    use Col::*;
    vec![
        Table {
            name: "trajectories",
            source: "eval/performance.csv",
            columns: cols(&PERFORMANCE_HEADER, &[Str, Int, OptFloat, Str, Str, Str, Float]),
            required: true,
            producer: "trajlab eval",
        },
        Table {
            name: "correlations",
            source: analysis_path(CORRELATIONS_FILE),
            columns: cols(&CORRELATIONS_HEADER, &[Str, Str, Str, OptInt, OptFloat]),
            required: true,
            producer: "trajlab analyze",
        },
        Table {
            name: "curve_peaks",
            source: analysis_path(PEAKS_FILE),
            columns: cols(&PEAKS_HEADER, &[Str, Str, Str, Float, OptInt, OptFloat, Int, OptFloat]),
            required: true,
            producer: "trajlab analyze",
        },
        Table {
            name: "clusters",
            source: analysis_path(CLUSTERS_FILE),
            columns: cols(&CLUSTERS_HEADER, &[Str, Str, Str, Int]),
            required: false,
            producer: "trajlab analyze --k",
        },
        Table {
            name: "kappa",
            source: analysis_path(KAPPA_FILE),
            columns: cols(&KAPPA_HEADER, &[Str, Int, Int, Float]),
            required: false,
            producer: "trajlab analyze --kappa",
        },
        Table {
            name: "alignment",
            source: analysis_path(ALIGNMENT_FILE),
            columns: cols(&ALIGNMENT_HEADER, &[Str, Int, Str, Int, OptFloat]),
            required: false,
            producer: "trajlab analyze --align",
        },
    ]
}

fn analysis_path(file: &'static str) -> &'static str {
    match file {
        CORRELATIONS_FILE => "analysis/correlations.csv",
        PEAKS_FILE => "analysis/curve_peaks.csv",
        CLUSTERS_FILE => "analysis/clusters.csv",
        KAPPA_FILE => "analysis/kappa.csv",
        ALIGNMENT_FILE => "analysis/alignment.csv",
        _ => unreachable!("unknown analysis file {file}"),
    }
}

/// Rows of a table as JSON objects, checked against its schema.
pub fn read_table(path: &Path, table: &Table) -> Result<Vec<Map<String, Value>>> {
    let bad = |line: usize, message: String| {
        CliError::Core(trajlab::Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(0, e.to_string()))?;
    let header = r.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let expected: Vec<&str> = table.columns.iter().map(|c| c.0).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(bad(1, format!("expected columns {}", expected.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(i + 2, e.to_string()))?;
        let mut obj = Map::new();
        for ((name, col), cell) in table.columns.iter().zip(rec.iter()) {
            let v = col
                .parse(cell)
                .ok_or_else(|| bad(i + 2, format!("column {name}: {cell:?} is not a {}", col.name())))?;
            obj.insert(name.to_string(), v);
        }
        rows.push(obj);
    }
    Ok(rows)
}

/// Same rows read back from a JSON export.
pub fn read_json_table(path: &Path) -> Result<Vec<Map<String, Value>>> {
    let text = trajlab::io::read_to_string(path)?;
    let v: Value = serde_json::from_str(&text).map_err(|e| {
        CliError::Core(trajlab::Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    })?;
    Ok(v.get("rows")
        .and_then(Value::as_array)
        .map(|rows| rows.iter().filter_map(|r| r.as_object().cloned()).collect())
        .unwrap_or_default())
}

fn json_table(table: &Table, rows: Vec<Map<String, Value>>) -> Value {
    json!({
        "table": table.name,
        "columns": table.columns.iter().map(|(n, c)| json!({"name": n, "type": c.name()})).collect::<Vec<_>>(),
        "rows": rows,
    })
}

fn figures_manifest(format: ExportFormat, present: &[&Table]) -> Value {
    let ext = match format {
        ExportFormat::Csv => "csv",
        ExportFormat::Json => "json",
    };
    let has = |n: &str| present.iter().any(|t| t.name == n);
    let mut group_by = vec!["field", "linguistics_term"];
    if has("clusters") {
        group_by.push("cluster_id");
    }
    let mut plots = vec![json!({
        "kind": "trajectories",
        "table": "trajectories",
        "x_axis": ["steps", "perplexity"],
        "group_by": group_by,
    })];
    plots.push(json!({
        "kind": "correlation_curves",
        "table": "correlations",
        "annotations": "curve_peaks",
        "x_axis": ["steps"],
    }));
    if has("clusters") {
        plots.push(json!({
            "kind": "cluster_panels",
            "table": "clusters",
            "join": {"table": "trajectories", "on": "challenge_uid"},
            "group_by": ["cluster_id", "field"],
        }));
    }
    let tables: Map<String, Value> = present
        .iter()
        .map(|t| {
            let kinds: Vec<&str> = match t.name {
                "trajectories" if has("clusters") => vec!["trajectories", "cluster_panels"],
                "trajectories" => vec!["trajectories"],
                "correlations" | "curve_peaks" => vec!["correlation_curves"],
                "clusters" => vec!["cluster_panels"],
                _ => vec![],
            };
            (
                t.name.to_string(),
                json!({
                    "file": format!("{}.{ext}", t.name),
                    "columns": t.columns.iter().map(|c| c.0).collect::<Vec<_>>(),
                    "plots": kinds,
                }),
            )
        })
        .collect();
    json!({ "format": ext, "tables": tables, "plots": plots })
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("json value serializes");
    s.push(b'\n');
    s
}

/// Writes every available table from `root` into `out_dir` and returns the
/// files written. Required tables that are missing are all reported at once.
pub fn export_tables(root: &Path, out_dir: &Path, format: ExportFormat) -> Result<Vec<PathBuf>> {
    let all = tables();
    let missing: Vec<String> = all
        .iter()
        .filter(|t| t.required && !root.join(t.source).is_file())
        .map(|t| format!("{} (run `{}` or `trajlab run`)", t.source, t.producer))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingArtifacts {
            dir: root.to_path_buf(),
            missing,
        });
    }
    let present: Vec<&Table> = all.iter().filter(|t| root.join(t.source).is_file()).collect();
    let mut written = Vec::new();
    for t in &present {
        let src = root.join(t.source);
        let rows = read_table(&src, t)?;
        let (path, bytes) = match format {
            ExportFormat::Csv => (out_dir.join(format!("{}.csv", t.name)), std::fs::read(&src).map_err(|e| trajlab::Error::io(&src, e))?),
            ExportFormat::Json => (out_dir.join(format!("{}.json", t.name)), pretty(&json_table(t, rows))),
        };
        write_atomic(&path, &bytes)?;
        written.push(path);
    }
    let fm = out_dir.join(FIGURES_MANIFEST);
    write_atomic(&fm, &pretty(&figures_manifest(format, &present)))?;
    written.push(fm);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn typed_cells() {
        assert_eq!(Col::OptFloat.parse(""), Some(Value::Null));
        assert_eq!(Col::Float.parse(""), None);
        assert_eq!(Col::Int.parse("12"), Some(json!(12)));
        assert_eq!(Col::Int.parse("1.5"), None);
        assert_eq!(Col::Float.parse("0.1"), Some(json!(0.1)));
        assert_eq!(Col::Float.parse("NaN"), None);
    }

    #[test]
    fn missing_required_tables_are_listed() {
        let d = tempfile::tempdir().unwrap();
        let e = export_tables(d.path(), &d.path().join("x"), ExportFormat::Csv).unwrap_err();
        let msg = e.to_string();
        for f in ["eval/performance.csv", "analysis/correlations.csv", "analysis/curve_peaks.csv"] {
            assert!(msg.contains(f), "{msg}");
        }
        assert!(!msg.contains("kappa"));
        assert_eq!(e.exit_code(), 1);
    }
}
