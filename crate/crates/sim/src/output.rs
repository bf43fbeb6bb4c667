//! Series files and the run summary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use bosetracer_core::diagnostics::DiagnosticsRecord;
use bosetracer_core::microscopic::MicroObservables;
use serde_json::{Map, Value};

use crate::runner::{IntermediateRow, MacroRow, RunArtifact};
use crate::SimError;

/// Header and rows of one series.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

const AXES: [&str; 3] = ["x", "y", "z"];

fn axis_names(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    AXES[..d].iter().map(move |a| format!("{prefix}_{a}"))
}

pub fn micro_table(rows: &[MicroObservables], d: usize) -> Table {
    let mut header = vec!["t".to_string(), "norm".into()];
    header.extend(axis_names("mean_x", d));
    header.push("var_x".into());
    header.extend(axis_names("mean_v", d));
    header.push("var_v".into());
    header.push("energy".into());
    header.extend(axis_names("mean_force", d));
    let rows = rows
        .iter()
        .map(|o| {
            let mut r = vec![o.t, o.norm];
            r.extend(&o.mean_x[..d]);
            r.push(o.var_x);
            r.extend(&o.mean_v[..d]);
            r.push(o.var_v);
            r.push(o.energy);
            r.extend(&o.mean_force[..d]);
            r
        })
        .collect();
    Table { header, rows }
}

pub fn macro_table(rows: &[MacroRow], d: usize) -> Table {
    let m = rows.first().map_or(1, |r| r.positions.len());
    let mut header = vec!["t".to_string()];
    for k in 0..m {
        header.extend(axis_names(&format!("X{k}"), d));
        header.extend(axis_names(&format!("V{k}"), d));
        header.push(format!("force{k}"));
    }
    for c in ["eps_l2", "overlap_abs", "phi_ref_l2", "phi_ref_linf", "phi_ref_grad_linf"] {
        header.push(c.into());
    }
    let rows = rows
        .iter()
        .map(|r| {
            let mut out = vec![r.t];
            for k in 0..m {
                out.extend(&r.positions[k][..d]);
                out.extend(&r.velocities[k][..d]);
                out.push(r.force_norms[k]);
            }
            out.extend([r.eps_l2, r.overlap_abs, r.phi_ref_l2, r.phi_ref_linf, r.phi_ref_grad_linf]);
            out
        })
        .collect();
    Table { header, rows }
}

pub fn intermediate_table(rows: &[IntermediateRow]) -> Table {
    let header = ["t", "norm", "diff_l2", "free_linf", "gronwall_ok"].iter().map(|s| s.to_string()).collect();
    let rows = rows
        .iter()
        .map(|r| vec![r.t, r.norm, r.diff_l2, r.free_linf, if r.gronwall_ok { 1.0 } else { 0.0 }])
        .collect();
    Table { header, rows }
}

pub fn diagnostics_table(rows: &[DiagnosticsRecord]) -> Table {
    Table {
        header: DiagnosticsRecord::COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows: rows.iter().map(|r| r.values().to_vec()).collect(),
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> SimError + '_ {
    move |e| SimError::Io(format!("{}: {e}", path.display()))
}

pub fn write_csv(path: &Path, table: &Table) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| SimError::Io(format!("{}: {e}", path.display()));
    w.write_record(&table.header).map_err(csv_err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(io(path))
}

pub fn write_jsonl(path: &Path, table: &Table) -> Result<(), SimError> {
    let mut w = BufWriter::new(File::create(path).map_err(io(path))?);
    for row in &table.rows {
        let obj: Map<String, Value> = table
            .header
            .iter()
            .zip(row)
            .map(|(k, v)| (k.clone(), serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number)))
            .collect();
        serde_json::to_writer(&mut w, &obj).map_err(|e| SimError::Io(e.to_string()))?;
        w.write_all(b"\n").map_err(io(path))?;
    }
    w.flush().map_err(io(path))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), SimError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| SimError::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io(path))
}

/// Writes `micro.csv`, `macro.csv`, `intermediate.csv`, `diagnostics.csv`
/// and `summary.json` (plus `.jsonl` series when asked).
pub fn write_artifact(dir: &Path, art: &RunArtifact, jsonl: bool) -> Result<(), SimError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let d = art.config.d;
    let tables = [
        ("micro", micro_table(&art.micro, d)),
        ("macro", macro_table(&art.macro_rows, d)),
        ("intermediate", intermediate_table(&art.intermediate)),
        ("diagnostics", diagnostics_table(&art.diagnostics)),
    ];
    for (name, table) in &tables {
        write_csv(&dir.join(format!("{name}.csv")), table)?;
        if jsonl {
            write_jsonl(&dir.join(format!("{name}.jsonl")), table)?;
        }
    }
    write_json(&dir.join("summary.json"), &art.summary)
}

/// Reads a CSV of numbers written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Table, SimError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    let header = r
        .headers()
        .map_err(|e| SimError::Io(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| SimError::Io(e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| SimError::Io(format!("{}: bad number {s:?}", path.display()))))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}
