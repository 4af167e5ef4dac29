//! File writers: CSV tables, legacy VTK snapshots, provenance manifest, plot scripts.

use fsi_core::coupled::CoupledState;
use fsi_core::driver::Problem;
use fsi_core::fourier::PeriodicField;
use fsi_core::geometry::hanzawa::HanzawaMap;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

pub type IoResult<T> = Result<T, String>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> String {
    format!("{}: {e}", path.display())
}

/// Writes a header and rows; `None` cells are left empty.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<Option<f64>>]) -> IoResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        let cells: Vec<String> = r.iter().map(|c| c.map(cell).unwrap_or_default()).collect();
        w.write_record(&cells).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Integers print plainly, everything else in round-trip scientific notation.
fn cell(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:e}")
    }
}

pub fn full(row: &[f64]) -> Vec<Option<f64>> {
    row.iter().map(|&v| Some(v)).collect()
}

pub fn write_json(path: &Path, value: &impl Serialize) -> IoResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub subcommand: String,
    pub version: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub termination: Option<String>,
}

/// Beam modes `k = -K..K` of displacement and velocity as complex coefficients.
pub fn write_beam_modes(path: &Path, state: &CoupledState) -> IoResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["field", "k", "re", "im"]).map_err(|e| io_err(path, e))?;
    for (name, modes) in [("eta", &state.eta), ("w", &state.w)] {
        let f = PeriodicField::from_real_modes(modes);
        let k = f.kmax() as i64;
        for m in -k..=k {
            let c = f.coeff(m);
            w.write_record([name.to_string(), m.to_string(), format!("{:e}", c.re), format!("{:e}", c.im)])
                .map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Legacy ASCII unstructured grid of the deformed domain: vertices are pushed
/// forward by the Hanzawa map of the state's displacement, velocity and
/// pressure are attached at the vertices.
pub fn write_vtk(path: &Path, problem: &Problem, state: &CoupledState) -> IoResult<()> {
    let eta = PeriodicField::from_real_modes(&state.eta);
    let map = HanzawaMap::new(&problem.geom, &eta).map_err(|e| io_err(path, e))?;
    let space = &problem.space;
    let nv = space.n_vertices;
    let p = state.pressure();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "fsi state t = {}", state.t);
    let _ = writeln!(s, "ASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {nv} double");
    for x in &space.nodes[..nv] {
        let y = map.apply(*x).map_err(|e| io_err(path, e))?;
        let _ = writeln!(s, "{:e} {:e} 0", y.x, y.y);
    }
    let tris = &space.mesh.triangles;
    let _ = writeln!(s, "CELLS {} {}", tris.len(), 4 * tris.len());
    for t in tris {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", tris.len());
    for _ in tris {
        let _ = writeln!(s, "5");
    }
    let _ = writeln!(s, "POINT_DATA {nv}");
    let _ = writeln!(s, "VECTORS velocity double");
    for i in 0..nv {
        let _ = writeln!(s, "{:e} {:e} 0", state.u[2 * i], state.u[2 * i + 1]);
    }
    let _ = writeln!(s, "SCALARS pressure double 1\nLOOKUP_TABLE default");
    for v in &p[..nv] {
        let _ = writeln!(s, "{v:e}");
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(s.as_bytes()).map_err(|e| io_err(path, e))
}

/// Self-contained matplotlib script plotting every column of `csv_path`
/// against the first numeric column.
pub fn plot_script(csv_path: &Path) -> IoResult<String> {
    let mut r = csv::Reader::from_path(csv_path).map_err(|e| io_err(csv_path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| io_err(csv_path, e))?.iter().map(str::to_string).collect();
    let first = r.records().next().transpose().map_err(|e| io_err(csv_path, e))?;
    let numeric: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| first.as_ref().and_then(|rec| rec.get(*i)).map(|v| v.is_empty() || v.parse::<f64>().is_ok()).unwrap_or(true))
        .map(|(_, h)| h.clone())
        .collect();
    if numeric.len() < 2 {
        return Err(format!("{}: need at least two numeric columns, found {numeric:?}", csv_path.display()));
    }
    let name = csv_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let cols: Vec<String> = numeric.iter().map(|c| format!("{c:?}")).collect();
    Ok(format!(
        r#"#!/usr/bin/env python3
# Plots {name}, which must sit next to this script.
import csv
import math
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
CSV = os.path.join(HERE, {name:?})
COLUMNS = [{cols}]


def num(v):
    try:
        return float(v)
    except ValueError:
        return math.nan


with open(CSV, newline="") as f:
    rows = list(csv.DictReader(f))

x = [num(r[COLUMNS[0]]) for r in rows]
fig, axes = plt.subplots(len(COLUMNS) - 1, 1, figsize=(7, 2.4 * (len(COLUMNS) - 1)), squeeze=False)
for ax, col in zip(axes[:, 0], COLUMNS[1:]):
    ax.plot(x, [num(r[col]) for r in rows], marker=".")
    ax.set_ylabel(col)
    ax.grid(True, alpha=0.3)
axes[-1, 0].set_xlabel(COLUMNS[0])
fig.tight_layout()
out = os.path.splitext(CSV)[0] + ".png"
fig.savefig(out, dpi=120)
print(out)
"#,
        cols = cols.join(", ")
    ))
}
