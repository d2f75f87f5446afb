//! Meshes of triangles, tetrahedra or quadrilaterals: structured generators
//! for the unit square and unit cube, an ASCII reader/writer for imported
//! meshes, and the geometric queries used by assembly and by the
//! mesh/timestep coupling of convergence studies.
//!
//! File format (one record per line, `#` comments and blank lines ignored):
//!
//! ```text
//! dim n_vertices n_cells
//! x y [z]              (n_vertices lines)
//! i0 i1 i2 [i3]        (n_cells lines, zero-based)
//! ```
//!
//! In 2D, cells with four indices are quadrilaterals listed in cyclic order;
//! all cells of a file must have the same size.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Relative volume below which a cell is treated as degenerate.
const DEGENERATE_REL_VOLUME: f64 = 1e-14;

/// Cell shape of a mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    /// Triangles in 2D, tetrahedra in 3D.
    Simplex,
    /// Convex quadrilaterals in 2D, vertices in cyclic order.
    Quadrilateral,
}

/// A conforming triangulation, tetrahedralisation or quadrilateral mesh.
///
/// Vertices are stored as 3-tuples; in 2D the third coordinate is zero and is
/// never written to disk. Cells are stored flat with stride
/// [`Mesh::cell_size`].
#[derive(Clone, Debug)]
pub struct Mesh {
    dim: usize,
    kind: CellKind,
    vertices: Vec<[f64; 3]>,
    cells: Vec<usize>,
    h_struct: Option<f64>,
}

/// Mesh size measures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshSpacing {
    /// Greatest edge length over all cells.
    pub h_max: f64,
    /// Structured spacing `1/n` for generated grids, absent for imported meshes.
    pub h_struct: Option<f64>,
}

impl Mesh {
    /// Build a simplicial mesh from raw parts and check every invariant.
    pub fn new(dim: usize, vertices: Vec<[f64; 3]>, cells: Vec<usize>) -> Result<Self> {
        Self::with_kind(dim, CellKind::Simplex, vertices, cells)
    }

    /// Build a mesh of the given cell kind and check every invariant.
    pub fn with_kind(
        dim: usize,
        kind: CellKind,
        vertices: Vec<[f64; 3]>,
        cells: Vec<usize>,
    ) -> Result<Self> {
        let mesh = Mesh {
            dim,
            kind,
            vertices,
            cells,
            h_struct: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / self.cell_size()
    }

    /// Number of vertices per cell.
    pub fn cell_size(&self) -> usize {
        match self.kind {
            CellKind::Simplex => self.dim + 1,
            CellKind::Quadrilateral => 4,
        }
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> [f64; 3] {
        self.vertices[i]
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let k = self.cell_size();
        &self.cells[c * k..(c + 1) * k]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks_exact(self.cell_size())
    }

    /// Structured spacing `1/n` if this mesh came from a generator.
    pub fn h_struct(&self) -> Option<f64> {
        self.h_struct
    }

    /// Signed volume (area in 2D) of a cell.
    pub fn signed_cell_volume(&self, c: usize) -> f64 {
        let cell = self.cell(c);
        let p0 = self.vertices[cell[0]];
        if self.kind == CellKind::Quadrilateral {
            // Shoelace formula.
            return 0.5
                * (0..4)
                    .map(|a| {
                        let (p, q) = (self.vertices[cell[a]], self.vertices[cell[(a + 1) % 4]]);
                        p[0] * q[1] - q[0] * p[1]
                    })
                    .sum::<f64>();
        }
        match self.dim {
            2 => {
                let p1 = self.vertices[cell[1]];
                let p2 = self.vertices[cell[2]];
                0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
            }
            _ => {
                let e = |q: [f64; 3]| [q[0] - p0[0], q[1] - p0[1], q[2] - p0[2]];
                let a = e(self.vertices[cell[1]]);
                let b = e(self.vertices[cell[2]]);
                let c3 = e(self.vertices[cell[3]]);
                det3(a, b, c3) / 6.0
            }
        }
    }

    pub fn cell_volume(&self, c: usize) -> f64 {
        self.signed_cell_volume(c).abs()
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_volume(c)).sum()
    }

    /// Check index bounds, distinctness and non-degeneracy of every cell.
    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::Validation(format!(
                "dimension must be 2 or 3, got {}",
                self.dim
            )));
        }
        if self.kind == CellKind::Quadrilateral && self.dim != 2 {
            return Err(Error::Validation("quadrilateral meshes must be 2D".into()));
        }
        let k = self.cell_size();
        if self.cells.len() % k != 0 {
            return Err(Error::Validation(format!(
                "cell array length {} is not a multiple of {k}",
                self.cells.len()
            )));
        }
        let nv = self.vertices.len();
        for (c, cell) in self.cells.chunks_exact(k).enumerate() {
            for (a, &i) in cell.iter().enumerate() {
                if i >= nv {
                    return Err(Error::Validation(format!(
                        "cell {c} references vertex {i} but there are only {nv} vertices"
                    )));
                }
                if cell[..a].contains(&i) {
                    return Err(Error::Validation(format!("cell {c} repeats vertex {i}")));
                }
            }
        }
        for v in &self.vertices {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation("non-finite vertex coordinate".into()));
            }
        }
        let scale = bounding_box_extent(&self.vertices).powi(self.dim as i32);
        for c in 0..self.n_cells() {
            let vol = self.cell_volume(c);
            if !(vol > DEGENERATE_REL_VOLUME * scale) {
                return Err(Error::Validation(format!(
                    "cell {c} is degenerate (volume {vol:e})"
                )));
            }
            if self.kind == CellKind::Quadrilateral && !self.quad_is_convex(c, scale) {
                return Err(Error::Validation(format!(
                    "quadrilateral {c} is not convex or not in cyclic order"
                )));
            }
        }
        Ok(())
    }

    /// Every corner turns the same way, with some margin.
    fn quad_is_convex(&self, c: usize, scale: f64) -> bool {
        let cell = self.cell(c);
        let turns: Vec<f64> = (0..4)
            .map(|a| {
                let p = self.vertices[cell[(a + 3) % 4]];
                let q = self.vertices[cell[a]];
                let r = self.vertices[cell[(a + 1) % 4]];
                (q[0] - p[0]) * (r[1] - q[1]) - (r[0] - q[0]) * (q[1] - p[1])
            })
            .collect();
        let tol = DEGENERATE_REL_VOLUME * scale;
        turns.iter().all(|&t| t > tol) || turns.iter().all(|&t| t < -tol)
    }

    /// All undirected edges, each reported once with the smaller index first.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.n_cells() * 3 * (self.dim - 1));
        let mut push = |a: usize, b: usize| edges.push((a.min(b), a.max(b)));
        for cell in self.cells() {
            match self.kind {
                CellKind::Simplex => {
                    for a in 0..cell.len() {
                        for b in a + 1..cell.len() {
                            push(cell[a], cell[b]);
                        }
                    }
                }
                CellKind::Quadrilateral => {
                    for a in 0..4 {
                        push(cell[a], cell[(a + 1) % 4]);
                    }
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges
    }
}

fn det3(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
}

fn bounding_box_extent(vertices: &[[f64; 3]]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in vertices {
        for d in 0..3 {
            lo[d] = lo[d].min(v[d]);
            hi[d] = hi[d].max(v[d]);
        }
    }
    (0..3)
        .map(|d| hi[d] - lo[d])
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE)
}

/// Uniform triangulation of `[0,1]²`: an `n × n` grid of squares, each split
/// into two right triangles along the diagonal from `(x_i, y_j)` to
/// `(x_{i+1}, y_{j+1})`.
pub fn unit_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "unit_square_mesh needs n >= 1".into(),
        ));
    }
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h, 0.0]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(6 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            cells.extend_from_slice(&[v00, v10, v11]);
            cells.extend_from_slice(&[v00, v11, v01]);
        }
    }
    Ok(Mesh {
        dim: 2,
        kind: CellKind::Simplex,
        vertices,
        cells,
        h_struct: Some(h),
    })
}

/// Uniform `n × n` grid of squares on `[0,1]²`, each cell listed
/// counter-clockwise from its lower-left corner.
pub fn unit_square_quad_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "unit_square_quad_mesh needs n >= 1".into(),
        ));
    }
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h, 0.0]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        for i in 0..n {
            cells.extend_from_slice(&[id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    Ok(Mesh {
        dim: 2,
        kind: CellKind::Quadrilateral,
        vertices,
        cells,
        h_struct: Some(h),
    })
}

/// Kuhn (6-tetrahedra) decomposition of an `n × n × n` grid of `[0,1]³`.
///
/// Every sub-cube is split along its main diagonal; the same split in every
/// cube makes the mesh conforming. Vertex order is chosen so that all cells
/// are positively oriented.
pub fn unit_cube_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("unit_cube_mesh needs n >= 1".into()));
    }
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1).pow(3));
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 * h, j as f64 * h, k as f64 * h]);
            }
        }
    }
    let id = |c: [usize; 3]| (c[2] * (n + 1) + c[1]) * (n + 1) + c[0];
    // (axis order, permutation parity)
    const PERMS: [([usize; 3], bool); 6] = [
        ([0, 1, 2], true),
        ([0, 2, 1], false),
        ([1, 0, 2], false),
        ([1, 2, 0], true),
        ([2, 0, 1], true),
        ([2, 1, 0], false),
    ];
    let mut cells = Vec::with_capacity(24 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let base = [i, j, k];
                for (perm, even) in PERMS {
                    let mut path = [base; 4];
                    for s in 0..3 {
                        path[s + 1] = path[s];
                        path[s + 1][perm[s]] += 1;
                    }
                    let mut tet = path.map(id);
                    if !even {
                        tet.swap(2, 3);
                    }
                    cells.extend_from_slice(&tet);
                }
            }
        }
    }
    Ok(Mesh {
        dim: 3,
        kind: CellKind::Simplex,
        vertices,
        cells,
        h_struct: Some(h),
    })
}

pub fn mesh_spacing(mesh: &Mesh) -> MeshSpacing {
    let h_max = mesh
        .edges()
        .into_iter()
        .map(|(i, j)| {
            let (p, q) = (mesh.vertices[i], mesh.vertices[j]);
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
        })
        .fold(0.0, f64::max);
    MeshSpacing {
        h_max,
        h_struct: mesh.h_struct,
    }
}

/// Render a mesh in the ASCII mesh format. Coordinates use Rust's shortest
/// round-trip float formatting, so parsing the output reproduces every bit.
pub fn mesh_to_string(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", mesh.dim, mesh.n_vertices(), mesh.n_cells());
    for v in &mesh.vertices {
        let coords: Vec<String> = v[..mesh.dim].iter().map(|x| format_f64(*x)).collect();
        let _ = writeln!(out, "{}", coords.join(" "));
    }
    for cell in mesh.cells() {
        let idx: Vec<String> = cell.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "{}", idx.join(" "));
    }
    out
}

fn format_f64(x: f64) -> String {
    // `{:?}` is the shortest representation that parses back to the same bits
    // and always carries a decimal point or exponent.
    format!("{x:?}")
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mesh_to_string(mesh)).map_err(|e| Error::io(path, e))
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&text)
}

/// Parse the ASCII mesh format. Parse errors carry 1-based line numbers.
pub fn parse_mesh(text: &str) -> Result<Mesh> {
    let mut records = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = records.next().ok_or(Error::Parse {
        line: 0,
        message: "empty mesh file".into(),
    })?;
    let header: Vec<usize> = parse_fields(hline, header)?;
    let [dim, nv, nc] = header[..] else {
        return Err(Error::Parse {
            line: hline,
            message: format!("header needs 3 fields, found {}", header.len()),
        });
    };
    if dim != 2 && dim != 3 {
        return Err(Error::Parse {
            line: hline,
            message: format!("dimension must be 2 or 3, got {dim}"),
        });
    }

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, rec) = records.next().ok_or(Error::Parse {
            line: hline,
            message: format!("expected {nv} vertex records"),
        })?;
        let coords: Vec<f64> = parse_fields(line, rec)?;
        if coords.len() != dim {
            return Err(Error::Parse {
                line,
                message: format!("vertex needs {dim} coordinates, found {}", coords.len()),
            });
        }
        let mut v = [0.0; 3];
        v[..dim].copy_from_slice(&coords);
        vertices.push(v);
    }

    let mut cells = Vec::with_capacity(nc * (dim + 1));
    let mut kind = None;
    for _ in 0..nc {
        let (line, rec) = records.next().ok_or(Error::Parse {
            line: hline,
            message: format!("expected {nc} cell records"),
        })?;
        let idx: Vec<usize> = parse_fields(line, rec)?;
        let this = match (dim, idx.len()) {
            (_, k) if k == dim + 1 => CellKind::Simplex,
            (2, 4) => CellKind::Quadrilateral,
            (_, k) => {
                return Err(Error::Parse {
                    line,
                    message: format!("cell needs {} indices, found {k}", dim + 1),
                })
            }
        };
        if *kind.get_or_insert(this) != this {
            return Err(Error::Parse {
                line,
                message: "cells of different kinds in one mesh".into(),
            });
        }
        cells.extend_from_slice(&idx);
    }
    if let Some((line, _)) = records.next() {
        return Err(Error::Parse {
            line,
            message: "trailing records after the declared cells".into(),
        });
    }
    Mesh::with_kind(dim, kind.unwrap_or(CellKind::Simplex), vertices, cells)
}

fn parse_fields<T: std::str::FromStr>(line: usize, rec: &str) -> Result<Vec<T>> {
    rec.split_whitespace()
        .map(|tok| {
            tok.parse::<T>().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse `{tok}`"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_counts() {
        let m = unit_square_mesh(1).unwrap();
        assert_eq!((m.n_vertices(), m.n_cells()), (4, 2));
        assert!((m.total_volume() - 1.0).abs() < 1e-15);

        let m = unit_square_mesh(100).unwrap();
        assert_eq!((m.n_vertices(), m.n_cells()), (10201, 20000));
        assert_eq!(mesh_spacing(&m).h_struct, Some(0.01));
    }

    #[test]
    fn zero_n_is_rejected() {
        assert!(matches!(
            unit_square_mesh(0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(unit_cube_mesh(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cube_counts_and_orientation() {
        let m = unit_cube_mesh(1).unwrap();
        assert_eq!((m.n_vertices(), m.n_cells()), (8, 6));
        assert!((m.total_volume() - 1.0).abs() < 1e-14);

        let m = unit_cube_mesh(2).unwrap();
        assert_eq!((m.n_vertices(), m.n_cells()), (27, 48));

        let m = unit_cube_mesh(3).unwrap();
        for c in 0..m.n_cells() {
            assert!(m.signed_cell_volume(c) > 0.0, "cell {c}");
        }
    }

    #[test]
    fn spacing_examples() {
        let s = mesh_spacing(&unit_square_mesh(1).unwrap());
        assert!((s.h_max - 2f64.sqrt()).abs() < 1e-15);
        let s = mesh_spacing(&unit_cube_mesh(2).unwrap());
        assert!((s.h_max - 3f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn volume_additivity() {
        for n in 1..=16 {
            let sq = unit_square_mesh(n).unwrap();
            assert!((sq.total_volume() - 1.0).abs() < 1e-12, "square n={n}");
            let cu = unit_cube_mesh(n).unwrap();
            assert!((cu.total_volume() - 1.0).abs() < 1e-12, "cube n={n}");
        }
    }

    #[test]
    fn quad_mesh_counts() {
        let m = unit_square_quad_mesh(4).unwrap();
        assert_eq!(m.kind(), CellKind::Quadrilateral);
        assert_eq!((m.n_vertices(), m.n_cells(), m.cell_size()), (25, 16, 4));
        assert!((m.total_volume() - 1.0).abs() < 1e-14);
        assert!((0..m.n_cells()).all(|c| m.signed_cell_volume(c) > 0.0));
        let s = mesh_spacing(&m);
        assert!((s.h_max - 0.25).abs() < 1e-15);
        assert_eq!(m.edges().len(), 2 * 4 * 5);
    }

    #[test]
    fn quad_round_trip_and_convexity() {
        let m = unit_square_quad_mesh(3).unwrap();
        let back = parse_mesh(&mesh_to_string(&m)).unwrap();
        assert_eq!(back.kind(), CellKind::Quadrilateral);
        assert_eq!(back.cell(4), m.cell(4));
        // Bow-tie ordering.
        let text = "2 4 1\n0 0\n1 0\n0 1\n1 1\n0 1 2 3\n";
        assert!(matches!(parse_mesh(text), Err(Error::Validation(_))));
        let mixed = "2 5 2\n0 0\n1 0\n1 1\n0 1\n2 0\n0 1 2 3\n1 4 2\n";
        assert!(matches!(
            parse_mesh(mixed),
            Err(Error::Parse { line: 8, .. })
        ));
    }

    #[test]
    fn parse_reports_bad_index() {
        let text = "2 3 1\n0 0\n1 0\n0 1\n0 1 3\n";
        assert!(matches!(parse_mesh(text), Err(Error::Validation(_))));
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "# comment\n2 3 1\n0 0\n1 zero\n0 1\n0 1 2\n";
        match parse_mesh(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn degenerate_cell_is_rejected() {
        let text = "2 3 1\n0 0\n1 0\n2 0\n0 1 2\n";
        assert!(matches!(parse_mesh(text), Err(Error::Validation(_))));
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# header follows\n\n2 3 1\n0 0\n# a comment\n1 0\n0 1\n\n0 1 2\n";
        let m = parse_mesh(text).unwrap();
        assert_eq!(m.n_cells(), 1);
        assert!((m.total_volume() - 0.5).abs() < 1e-15);
    }
}
