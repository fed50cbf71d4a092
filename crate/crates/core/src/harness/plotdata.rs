//! Tidy per-panel CSVs derived from a trace, for the plotting scripts.
//!
//! Every panel file is long-form with columns `t,series,role,value`
//! (`role` is `desired` or `actual`), except `path.csv` which carries
//! `t,role,x,y`. A `panels.json` manifest lists the files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::trace::{TraceLog, TraceRecord, TRACE_SCHEMA_VERSION};
use crate::error::Result;

pub const PANELS: [&str; 7] = ["path", "positions", "speed", "roll", "pitch", "thrust", "tau"];

#[derive(Debug, Serialize)]
pub struct PanelManifest {
    pub schema_version: u32,
    pub n_records: usize,
    pub panels: Vec<PanelEntry>,
}

#[derive(Debug, Serialize)]
pub struct PanelEntry {
    pub kind: String,
    pub file: String,
    pub rows: usize,
}

type Row = (f64, &'static str, &'static str, f64);

fn long_rows(trace: &TraceLog, f: impl Fn(&TraceRecord) -> Vec<(&'static str, &'static str, f64)>) -> Vec<Row> {
    trace
        .records
        .iter()
        .flat_map(|r| f(r).into_iter().map(move |(s, role, v)| (r.t, s, role, v)))
        .collect()
}

fn panel_rows(trace: &TraceLog, kind: &str) -> Vec<Row> {
    match kind {
        "positions" => long_rows(trace, |r| {
            vec![
                ("p1", "actual", r.x.p.x),
                ("p2", "actual", r.x.p.y),
                ("p3", "actual", r.x.p.z),
                ("p1", "desired", r.reference.p.x),
                ("p2", "desired", r.reference.p.y),
                ("p3", "desired", r.reference.p.z),
            ]
        }),
        "speed" => long_rows(trace, |r| {
            vec![("speed", "actual", r.x.v.norm()), ("speed", "desired", r.reference.v.norm())]
        }),
        "roll" => long_rows(trace, |r| vec![("phi", "actual", r.u.phi)]),
        "pitch" => long_rows(trace, |r| vec![("theta", "actual", r.u.theta)]),
        "thrust" => long_rows(trace, |r| {
            vec![("f", "actual", r.u.f), ("sat_f", "actual", if r.sat.thrust { 1.0 } else { 0.0 })]
        }),
        "tau" => long_rows(trace, |r| vec![("tau", "actual", r.tau), ("tau", "desired", r.t)]),
        _ => Vec::new(),
    }
}

/// Writes one CSV per panel plus `panels.json` into `out_dir`.
pub fn write_panels(trace: &TraceLog, out_dir: impl AsRef<Path>) -> Result<PanelManifest> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut panels = Vec::new();
    for kind in PANELS {
        let file = format!("{kind}.csv");
        let mut w = csv::Writer::from_path(dir.join(&file))?;
        let rows = if kind == "path" {
            w.write_record(["t", "role", "x", "y"])?;
            for r in &trace.records {
                w.write_record([r.t.to_string(), "actual".into(), r.x.p.x.to_string(), r.x.p.y.to_string()])?;
                w.write_record([
                    r.t.to_string(),
                    "desired".into(),
                    r.reference.p.x.to_string(),
                    r.reference.p.y.to_string(),
                ])?;
            }
            2 * trace.len()
        } else {
            w.write_record(["t", "series", "role", "value"])?;
            let rows = panel_rows(trace, kind);
            for (t, series, role, value) in &rows {
                w.write_record([t.to_string(), series.to_string(), role.to_string(), value.to_string()])?;
            }
            rows.len()
        };
        w.flush()?;
        panels.push(PanelEntry {
            kind: kind.to_string(),
            file,
            rows,
        });
    }
    let manifest = PanelManifest {
        schema_version: TRACE_SCHEMA_VERSION,
        n_records: trace.len(),
        panels,
    };
    fs::write(dir.join("panels.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
