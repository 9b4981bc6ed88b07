//! Legacy VTK and CSV writers.
//!
//! Numbers are written with `{:e}`, the shortest scientific form that
//! parses back to the same `f64`.

use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;
use crate::optimizer::ObjectiveRecord;
use crate::oracles::{Comparison, OracleReport};
use std::fmt::Write as _;
use std::path::Path;

pub const HISTORY_HEADER: &str = "iter,energy,dirichlet,objective,volume,lambda_shift,phi_change_l1,max_abs_phi";
pub const ORACLE_HEADER: &str = "name,passed,measured,expected,tolerance,comparison";

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Internal(format!("cannot write {}: {e}", path.display())))
}

/// ASCII legacy VTK unstructured grid of triangles with nodal scalars.
pub fn vtk_string(mesh: &Mesh, fields: &[(&str, &[f64])]) -> Result<String> {
    let mut s = String::new();
    let n = mesh.num_nodes();
    let ne = mesh.num_elements();
    writeln!(s, "# vtk DataFile Version 3.0").unwrap();
    writeln!(s, "heatopt").unwrap();
    writeln!(s, "ASCII").unwrap();
    writeln!(s, "DATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(s, "POINTS {n} double").unwrap();
    for p in &mesh.nodes {
        writeln!(s, "{:e} {:e} 0", p[0], p[1]).unwrap();
    }
    writeln!(s, "CELLS {ne} {}", 4 * ne).unwrap();
    for t in &mesh.elements {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {ne}").unwrap();
    for _ in 0..ne {
        writeln!(s, "5").unwrap();
    }
    if !fields.is_empty() {
        writeln!(s, "POINT_DATA {n}").unwrap();
    }
    for (name, values) in fields {
        if values.len() != n {
            return Err(invalid(format!("field {name} has {} values, mesh has {n} nodes", values.len())));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(invalid(format!("field name `{name}` must be a non-empty word")));
        }
        writeln!(s, "SCALARS {name} double 1").unwrap();
        writeln!(s, "LOOKUP_TABLE default").unwrap();
        for v in *values {
            writeln!(s, "{v:e}").unwrap();
        }
    }
    Ok(s)
}

pub fn write_vtk(path: &Path, mesh: &Mesh, fields: &[(&str, &[f64])]) -> Result<()> {
    write_file(path, &vtk_string(mesh, fields)?)
}

pub fn history_csv(history: &[ObjectiveRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in history {
        let change = r.phi_change_l1.map(|v| format!("{v:e}")).unwrap_or_default();
        writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{:e},{},{:e}",
            r.iter, r.energy, r.dirichlet, r.objective, r.volume, r.lambda_shift, change, r.max_abs_phi
        )
        .unwrap();
    }
    s
}

pub fn write_history(path: &Path, history: &[ObjectiveRecord]) -> Result<()> {
    write_file(path, &history_csv(history))
}

/// Inverse of [`history_csv`].
pub fn parse_history_csv(text: &str) -> Result<Vec<ObjectiveRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_HEADER) {
        return Err(invalid("history csv: unexpected header"));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 8 {
                return Err(invalid(format!("history csv: bad row `{line}`")));
            }
            let num = |i: usize| -> Result<f64> {
                c[i].parse()
                    .map_err(|_| invalid(format!("history csv: bad number `{}`", c[i])))
            };
            Ok(ObjectiveRecord {
                iter: c[0].parse().map_err(|_| invalid("history csv: bad iteration"))?,
                energy: num(1)?,
                dirichlet: num(2)?,
                objective: num(3)?,
                volume: num(4)?,
                lambda_shift: num(5)?,
                phi_change_l1: if c[6].is_empty() { None } else { Some(num(6)?) },
                max_abs_phi: num(7)?,
            })
        })
        .collect()
}

pub fn oracle_csv(reports: &[OracleReport]) -> String {
    let mut s = String::from(ORACLE_HEADER);
    s.push('\n');
    for r in reports {
        let cmp = match r.comparison {
            Comparison::Within => "within",
            Comparison::AtMost => "at_most",
            Comparison::AtLeast => "at_least",
        };
        writeln!(
            s,
            "{},{},{:e},{:e},{:e},{cmp}",
            r.name, r.passed, r.measured, r.expected, r.tolerance
        )
        .unwrap();
    }
    s
}

pub fn write_oracle_csv(path: &Path, reports: &[OracleReport]) -> Result<()> {
    write_file(path, &oracle_csv(reports))
}

/// Writes plain text, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::Internal(format!("cannot create {}: {e}", dir.display())))?;
    }
    write_file(path, text)
}
