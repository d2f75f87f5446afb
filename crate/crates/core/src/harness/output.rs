//! File outputs: CSV tables, JSON summaries, legacy VTK fields and nodal
//! initial-condition files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{CellKind, Mesh};
use crate::stepping::FieldPair;

use super::{EocReport, GrowthSeries, SimulationTrace};

pub const TRACE_HEADER: &str = "step,t,du_rate,dv_rate,nonlin_iters,inner_iters,wall_ms";
pub const EOC_HEADER: &str = "level,tau,n,E_u,E_v,alpha_u,alpha_v";
pub const GROWTH_HEADER: &str = "step,t,ratio,theory";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

pub fn trace_csv(trace: &SimulationTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{:?},{:e},{:e},{},{},{:.3}",
            r.step, r.t, r.du_rate, r.dv_rate, r.nonlin_iters, r.inner_iters, r.wall_ms
        );
    }
    out
}

pub fn write_trace_csv(trace: &SimulationTrace, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &trace_csv(trace))
}

pub fn eoc_csv(report: &EocReport) -> String {
    let mut out = String::from(EOC_HEADER);
    out.push('\n');
    for l in &report.levels {
        let _ = writeln!(
            out,
            "{},{:?},{},{:e},{:e},{},{}",
            l.level,
            l.tau,
            l.n,
            l.e_u,
            l.e_v,
            opt(l.alpha_u),
            opt(l.alpha_v)
        );
    }
    out
}

pub fn write_eoc_csv(report: &EocReport, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &eoc_csv(report))
}

pub fn growth_csv(series: &GrowthSeries) -> String {
    let mut out = String::from(GROWTH_HEADER);
    out.push('\n');
    for p in &series.points {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?}",
            p.step, p.t, p.ratio, series.theory
        );
    }
    out
}

pub fn write_growth_csv(series: &GrowthSeries, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &growth_csv(series))
}

pub fn write_json(value: &serde_json::Value, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Evaluation(format!("cannot serialise summary: {e}")))?;
    text.push('\n');
    write_file(path.as_ref(), &text)
}

/// Legacy ASCII VTK unstructured grid with point scalars `u` and `v`.
pub fn vtk_string(mesh: &Mesh, fields: &FieldPair, title: &str) -> Result<String> {
    let n = mesh.n_vertices();
    if fields.u.len() != n || fields.v.len() != n {
        return Err(Error::InvalidArgument(format!(
            "fields of length {}/{} on a mesh with {n} vertices",
            fields.u.len(),
            fields.v.len()
        )));
    }
    let k = mesh.cell_size();
    let cell_type = match (mesh.kind(), mesh.dim()) {
        (CellKind::Quadrilateral, _) => 9,
        (CellKind::Simplex, 2) => 5,
        _ => 10,
    };
    let mut out = String::new();
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {n} double");
    for p in mesh.vertices() {
        let _ = writeln!(out, "{:?} {:?} {:?}", p[0], p[1], p[2]);
    }
    let nc = mesh.n_cells();
    let _ = writeln!(out, "CELLS {nc} {}", nc * (k + 1));
    for cell in mesh.cells() {
        let idx: Vec<String> = cell.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "{k} {}", idx.join(" "));
    }
    let _ = writeln!(out, "CELL_TYPES {nc}");
    for _ in 0..nc {
        let _ = writeln!(out, "{cell_type}");
    }
    let _ = writeln!(out, "POINT_DATA {n}");
    for (name, values) in [("u", &fields.u), ("v", &fields.v)] {
        let _ = writeln!(out, "SCALARS {name} double 1");
        let _ = writeln!(out, "LOOKUP_TABLE default");
        for x in values.iter() {
            let _ = writeln!(out, "{x:?}");
        }
    }
    Ok(out)
}

pub fn write_vtk(mesh: &Mesh, fields: &FieldPair, path: impl AsRef<Path>) -> Result<()> {
    let text = vtk_string(mesh, fields, &format!("rdfem fields at t = {}", fields.t))?;
    write_file(path.as_ref(), &text)
}

/// Parse a nodal file: one `u v` pair per line, `#` comments allowed.
pub fn parse_nodal(text: &str, n_vertices: usize) -> Result<FieldPair> {
    let mut u = Vec::with_capacity(n_vertices);
    let mut v = Vec::with_capacity(n_vertices);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("cannot parse `{line}`"),
            })?;
        let [a, b] = vals[..] else {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected two values, found {}", vals.len()),
            });
        };
        u.push(a);
        v.push(b);
    }
    if u.len() != n_vertices {
        return Err(Error::Validation(format!(
            "nodal file has {} records for a mesh with {n_vertices} vertices",
            u.len()
        )));
    }
    FieldPair::new(u, v, 0.0)
}

pub fn nodal_string(fields: &FieldPair) -> String {
    let mut out = String::new();
    for (a, b) in fields.u.iter().zip(&fields.v) {
        let _ = writeln!(out, "{a:?} {b:?}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_square_mesh;

    #[test]
    fn vtk_layout() {
        let mesh = unit_square_mesh(1).unwrap();
        let f = FieldPair::constant(4, 1.0, 0.5, 0.0);
        let s = vtk_string(&mesh, &f, "t").unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
        assert_eq!(lines[4], "POINTS 4 double");
        assert_eq!(lines[9], "CELLS 2 8");
        assert!(lines[10].starts_with("3 "));
        assert_eq!(lines[12], "CELL_TYPES 2");
        assert_eq!(lines[13], "5");
        assert!(s.contains("POINT_DATA 4\nSCALARS u double 1\nLOOKUP_TABLE default\n1.0\n"));
        assert!(s.contains("SCALARS v double 1"));
    }

    #[test]
    fn nodal_round_trip() {
        let f = FieldPair::new(vec![1.0, 0.1 + 0.2], vec![-3.5, 1e-300], 0.0).unwrap();
        let back = parse_nodal(&nodal_string(&f), 2).unwrap();
        assert_eq!(back, f);
        assert!(parse_nodal("1 2\n", 2).is_err());
        assert!(matches!(
            parse_nodal("1 x\n", 1),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
