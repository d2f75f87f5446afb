//! Finite element operators for P1 simplices and bilinear (Q1)
//! quadrilaterals.
//!
//! The semidiscrete Schnakenberg system needs four objects on a mesh:
//!
//! * the mass matrix `M_ij = ∫ φ_i φ_j`,
//! * the stiffness matrix `A_ij = ∫ ∇φ_i · ∇φ_j`,
//! * the nonlinear matrix `B(a, b)_ij = Σ_k Σ_l a_k b_l ∫ φ_k φ_l φ_i φ_j`,
//! * the load vector `(1_φ)_j = ∫ φ_j`, which multiplies the constant
//!   sources `γa` and `γb`.
//!
//! The four-index integral is quartic in P1 shape functions. It is evaluated
//! once on the reference simplex with a degree-4 rule and scaled by the cell
//! volume, so assembling `B` costs `O((d+1)^4)` per cell. Quadrilaterals
//! use a 3×3 Gauss rule for every operator.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::mesh::{CellKind, Mesh};
use crate::quadrature::{gauss_legendre_unit, QuadratureRule};
use crate::sparse::{CsrMatrix, SparsityPattern};

/// Coefficient vector over mesh vertices.
pub type NodalVector = Vec<f64>;

/// Norm used for increments, stopping criteria and error measures.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// Function-space L2 norm `sqrt(wᵀ M w)`.
    #[default]
    Mass,
    /// Plain Euclidean norm of the coefficient vector.
    Euclidean,
}

/// Volume-normalised reference integrals of products of barycentric
/// coordinates: `∫ λ_i λ_j / |T|` and `∫ λ_k λ_l λ_i λ_j / |T|`.
struct ReferenceTensors {
    mass: Vec<f64>,
    quartic: Vec<f64>,
}

impl ReferenceTensors {
    fn compute(dim: usize) -> Self {
        let rule = QuadratureRule::assembly(dim);
        let nloc = dim + 1;
        let vol = rule.reference_volume();
        let mut mass = vec![0.0; nloc * nloc];
        let mut quartic = vec![0.0; nloc.pow(4)];
        for i in 0..nloc {
            for j in 0..nloc {
                mass[i * nloc + j] = rule.integrate(|l| l[i] * l[j]) / vol;
                for k in 0..nloc {
                    for m in 0..nloc {
                        quartic[((k * nloc + m) * nloc + i) * nloc + j] =
                            rule.integrate(|l| l[k] * l[m] * l[i] * l[j]) / vol;
                    }
                }
            }
        }
        ReferenceTensors { mass, quartic }
    }

    fn get(dim: usize) -> &'static ReferenceTensors {
        static TRI: OnceLock<ReferenceTensors> = OnceLock::new();
        static TET: OnceLock<ReferenceTensors> = OnceLock::new();
        match dim {
            2 => TRI.get_or_init(|| ReferenceTensors::compute(2)),
            _ => TET.get_or_init(|| ReferenceTensors::compute(3)),
        }
    }
}

/// Gauss points per direction for quadrilateral assembly; exact for the
/// quartic products in `B` on parallelograms.
const QUAD_ASSEMBLY_POINTS: usize = 3;

enum Geometry {
    Simplex {
        volumes: Vec<f64>,
        /// Gradients of the barycentric coordinates, `nloc` per cell.
        grads: Vec<[f64; 3]>,
        reference: &'static ReferenceTensors,
    },
    Quadrilateral {
        /// Shape values at the assembly points.
        shape: Vec<[f64; 4]>,
        /// `|det J| w` at the assembly points, `nq` per cell.
        jxw: Vec<f64>,
        /// Physical shape gradients, `4 nq` per cell.
        grads: Vec<[f64; 3]>,
    },
}

/// Cached per-cell geometry and scatter positions for one mesh.
pub struct Assembler {
    dim: usize,
    nloc: usize,
    n_vertices: usize,
    cells: Vec<usize>,
    coords: Vec<[f64; 3]>,
    geometry: Geometry,
    pattern: Arc<SparsityPattern>,
    /// Value index of local entry `(a, b)` for every cell, `nloc²` per cell.
    scatter: Vec<usize>,
}

impl Assembler {
    pub fn new(mesh: &Mesh) -> Self {
        let dim = mesh.dim();
        let nloc = mesh.cell_size();
        let nv = mesh.n_vertices();

        let mut rows = vec![Vec::new(); nv];
        for cell in mesh.cells() {
            for &i in cell {
                rows[i].extend_from_slice(cell);
            }
        }
        let pattern =
            Arc::new(SparsityPattern::from_rows(nv, rows).expect("mesh indices were validated"));

        let mut cells = Vec::with_capacity(mesh.n_cells() * nloc);
        let mut scatter = Vec::with_capacity(mesh.n_cells() * nloc * nloc);
        for cell in mesh.cells() {
            cells.extend_from_slice(cell);
            for &i in cell {
                for &j in cell {
                    scatter.push(pattern.find(i, j).expect("pattern covers cell couplings"));
                }
            }
        }
        let geometry = match mesh.kind() {
            CellKind::Simplex => {
                let mut volumes = Vec::with_capacity(mesh.n_cells());
                let mut grads = Vec::with_capacity(mesh.n_cells() * nloc);
                for (c, cell) in mesh.cells().enumerate() {
                    volumes.push(mesh.cell_volume(c));
                    let pts: Vec<[f64; 3]> = cell.iter().map(|&i| mesh.vertex(i)).collect();
                    grads.extend(barycentric_gradients(dim, &pts));
                }
                Geometry::Simplex {
                    volumes,
                    grads,
                    reference: ReferenceTensors::get(dim),
                }
            }
            CellKind::Quadrilateral => {
                let rule = square_rule(QUAD_ASSEMBLY_POINTS);
                let shape = rule.iter().map(|&(s, r, _)| q1_shape(s, r).0).collect();
                let mut jxw = Vec::with_capacity(mesh.n_cells() * rule.len());
                let mut grads = Vec::with_capacity(mesh.n_cells() * rule.len() * 4);
                for cell in mesh.cells() {
                    let pts: Vec<[f64; 3]> = cell.iter().map(|&i| mesh.vertex(i)).collect();
                    for &(s, r, w) in &rule {
                        let q = q1_map(&pts, s, r);
                        jxw.push(q.det * w);
                        grads.extend(q.grads);
                    }
                }
                Geometry::Quadrilateral { shape, jxw, grads }
            }
        };
        Assembler {
            dim,
            nloc,
            n_vertices: nv,
            cells,
            coords: mesh.vertices().to_vec(),
            geometry,
            pattern,
            scatter,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    fn n_cells(&self) -> usize {
        self.cells.len() / self.nloc
    }

    fn cell(&self, c: usize) -> &[usize] {
        let k = self.nloc;
        &self.cells[c * k..(c + 1) * k]
    }

    fn cell_points(&self, c: usize) -> Vec<[f64; 3]> {
        self.cell(c).iter().map(|&i| self.coords[i]).collect()
    }

    fn scatter_local<F>(&self, mut local: F) -> CsrMatrix
    where
        F: FnMut(usize, &mut [f64]),
    {
        let k = self.nloc;
        let mut m = CsrMatrix::zeros(self.pattern.clone());
        let mut buf = vec![0.0; k * k];
        let values = m.values_mut();
        for c in 0..self.n_cells() {
            local(c, &mut buf);
            for (pos, v) in self.scatter[c * k * k..(c + 1) * k * k].iter().zip(&buf) {
                values[*pos] += v;
            }
        }
        m
    }

    /// Quadrilateral cell `c`: shape values, weights and gradients at the
    /// assembly points.
    fn quad_points(&self, c: usize) -> impl Iterator<Item = (&[f64; 4], f64, &[[f64; 3]])> {
        let Geometry::Quadrilateral { shape, jxw, grads } = &self.geometry else {
            unreachable!("quadrilateral geometry expected")
        };
        let nq = shape.len();
        (0..nq).map(move |q| {
            let g = (c * nq + q) * 4;
            (&shape[q], jxw[c * nq + q], &grads[g..g + 4])
        })
    }

    fn fill_mass(&self, c: usize, buf: &mut [f64]) {
        match &self.geometry {
            Geometry::Simplex {
                volumes, reference, ..
            } => {
                for (b, rv) in buf.iter_mut().zip(&reference.mass) {
                    *b = volumes[c] * rv;
                }
            }
            Geometry::Quadrilateral { .. } => {
                buf.fill(0.0);
                for (phi, w, _) in self.quad_points(c) {
                    for a in 0..4 {
                        for b in 0..4 {
                            buf[a * 4 + b] += w * phi[a] * phi[b];
                        }
                    }
                }
            }
        }
    }

    fn fill_stiffness(&self, c: usize, buf: &mut [f64]) {
        let k = self.nloc;
        let dot3 = |p: &[f64; 3], q: &[f64; 3]| p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
        match &self.geometry {
            Geometry::Simplex { volumes, grads, .. } => {
                let g = &grads[c * k..(c + 1) * k];
                for a in 0..k {
                    for b in 0..k {
                        buf[a * k + b] = volumes[c] * dot3(&g[a], &g[b]);
                    }
                }
            }
            Geometry::Quadrilateral { .. } => {
                buf.fill(0.0);
                for (_, w, g) in self.quad_points(c) {
                    for a in 0..4 {
                        for b in 0..4 {
                            buf[a * 4 + b] += w * dot3(&g[a], &g[b]);
                        }
                    }
                }
            }
        }
    }

    /// Local mass matrix of cell `c`, row-major.
    pub fn local_mass(&self, c: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.nloc * self.nloc];
        self.fill_mass(c, &mut out);
        out
    }

    /// Local stiffness matrix of cell `c`, row-major.
    pub fn local_stiffness(&self, c: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.nloc * self.nloc];
        self.fill_stiffness(c, &mut out);
        out
    }

    pub fn mass(&self) -> CsrMatrix {
        self.scatter_local(|c, buf| self.fill_mass(c, buf))
    }

    pub fn stiffness(&self) -> CsrMatrix {
        self.scatter_local(|c, buf| self.fill_stiffness(c, buf))
    }

    /// Assemble `B(a, b)`.
    pub fn nonlinear_b(&self, a: &[f64], b: &[f64]) -> Result<CsrMatrix> {
        self.check_len(a, "a")?;
        self.check_len(b, "b")?;
        let k = self.nloc;
        Ok(match &self.geometry {
            Geometry::Simplex {
                volumes, reference, ..
            } => {
                let q = &reference.quartic;
                let mut ab = vec![0.0; k * k];
                self.scatter_local(|c, buf| {
                    let cell = self.cell(c);
                    for kk in 0..k {
                        for l in 0..k {
                            ab[kk * k + l] = a[cell[kk]] * b[cell[l]];
                        }
                    }
                    for (ij, out) in buf.iter_mut().enumerate() {
                        let mut s = 0.0;
                        for (kl, abv) in ab.iter().enumerate() {
                            s += abv * q[kl * k * k + ij];
                        }
                        *out = volumes[c] * s;
                    }
                })
            }
            Geometry::Quadrilateral { .. } => self.scatter_local(|c, buf| {
                let cell = self.cell(c);
                buf.fill(0.0);
                for (phi, w, _) in self.quad_points(c) {
                    let aq: f64 = (0..4).map(|m| a[cell[m]] * phi[m]).sum();
                    let bq: f64 = (0..4).map(|m| b[cell[m]] * phi[m]).sum();
                    let s = w * aq * bq;
                    for i in 0..4 {
                        for j in 0..4 {
                            buf[i * 4 + j] += s * phi[i] * phi[j];
                        }
                    }
                }
            }),
        })
    }

    /// `(1_φ)_j = ∫ φ_j`.
    pub fn unit_load(&self) -> NodalVector {
        let mut out = vec![0.0; self.n_vertices];
        match &self.geometry {
            Geometry::Simplex { volumes, .. } => {
                let share = 1.0 / self.nloc as f64;
                for c in 0..self.n_cells() {
                    for &i in self.cell(c) {
                        out[i] += share * volumes[c];
                    }
                }
            }
            Geometry::Quadrilateral { .. } => {
                for c in 0..self.n_cells() {
                    let cell = self.cell(c);
                    for (phi, w, _) in self.quad_points(c) {
                        for a in 0..4 {
                            out[cell[a]] += w * phi[a];
                        }
                    }
                }
            }
        }
        out
    }

    /// Visit every quadrature point of every cell with its physical point,
    /// weight and shape values. Simplices use `rule` directly;
    /// quadrilaterals use a Gauss product rule of the same degree, raised by
    /// one for the bilinear Jacobian.
    fn for_each_point(
        &self,
        rule: &QuadratureRule,
        mut visit: impl FnMut(&[usize], [f64; 3], f64, &[f64]),
    ) {
        match &self.geometry {
            Geometry::Simplex { volumes, .. } => {
                let ref_vol = rule.reference_volume();
                for c in 0..self.n_cells() {
                    let cell = self.cell(c);
                    let scale = volumes[c] / ref_vol;
                    for (p, w) in rule.points().iter().zip(rule.weights()) {
                        visit(cell, self.map_point(cell, p), scale * w, &p[..self.nloc]);
                    }
                }
            }
            Geometry::Quadrilateral { .. } => {
                let square = square_rule((rule.degree() + 1) / 2 + 1);
                for c in 0..self.n_cells() {
                    let pts = self.cell_points(c);
                    for &(s, r, w) in &square {
                        let q = q1_map(&pts, s, r);
                        visit(self.cell(c), q.x, q.det * w, &q.phi);
                    }
                }
            }
        }
    }

    /// Load vector `∫ f φ_j` evaluated with `rule`.
    pub fn load_vector(&self, rule: &QuadratureRule, f: impl Fn(&[f64; 3]) -> f64) -> NodalVector {
        let mut out = vec![0.0; self.n_vertices];
        self.for_each_point(rule, |cell, x, w, phi| {
            let fx = w * f(&x);
            for (&i, p) in cell.iter().zip(phi) {
                out[i] += fx * p;
            }
        });
        out
    }

    fn map_point(&self, cell: &[usize], bary: &[f64; 4]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for (a, &i) in cell.iter().enumerate() {
            for d in 0..3 {
                x[d] += bary[a] * self.coords[i][d];
            }
        }
        x
    }

    /// `||w_h - f||_{L2}` by quadrature with `rule`.
    pub fn l2_error(
        &self,
        rule: &QuadratureRule,
        w: &[f64],
        f: impl Fn(&[f64; 3]) -> f64,
    ) -> Result<f64> {
        self.check_len(w, "w")?;
        let mut acc = 0.0;
        self.for_each_point(rule, |cell, x, wq, phi| {
            let wh: f64 = cell.iter().zip(phi).map(|(&i, p)| p * w[i]).sum();
            let e = wh - f(&x);
            acc += wq * e * e;
        });
        Ok(acc.sqrt())
    }

    fn check_len(&self, v: &[f64], name: &str) -> Result<()> {
        if v.len() != self.n_vertices {
            return Err(Error::InvalidArgument(format!(
                "vector `{name}` has length {} but the mesh has {} vertices",
                v.len(),
                self.n_vertices
            )));
        }
        Ok(())
    }
}

/// Tensor Gauss rule on `[0,1]²` as `(s, r, weight)`.
fn square_rule(n: usize) -> Vec<(f64, f64, f64)> {
    let g = gauss_legendre_unit(n);
    let mut out = Vec::with_capacity(n * n);
    for &(s, ws) in &g {
        for &(r, wr) in &g {
            out.push((s, r, ws * wr));
        }
    }
    out
}

/// Bilinear shape functions on `[0,1]²` for the corner order
/// `(0,0), (1,0), (1,1), (0,1)`, with their reference derivatives.
fn q1_shape(s: f64, r: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    (
        [(1.0 - s) * (1.0 - r), s * (1.0 - r), s * r, (1.0 - s) * r],
        [[r - 1.0, s - 1.0], [1.0 - r, -s], [r, s], [-r, 1.0 - s]],
    )
}

struct QuadPoint {
    x: [f64; 3],
    det: f64,
    phi: [f64; 4],
    grads: [[f64; 3]; 4],
}

/// The bilinear map of a quadrilateral evaluated at `(s, r)`.
fn q1_map(pts: &[[f64; 3]], s: f64, r: f64) -> QuadPoint {
    let (phi, dphi) = q1_shape(s, r);
    let mut x = [0.0; 3];
    // j[d][e] = ∂x_d/∂ξ_e
    let mut j = [[0.0; 2]; 2];
    for a in 0..4 {
        for d in 0..2 {
            x[d] += phi[a] * pts[a][d];
            for e in 0..2 {
                j[d][e] += pts[a][d] * dphi[a][e];
            }
        }
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let mut grads = [[0.0; 3]; 4];
    for (g, d) in grads.iter_mut().zip(&dphi) {
        g[0] = (j[1][1] * d[0] - j[1][0] * d[1]) / det;
        g[1] = (j[0][0] * d[1] - j[0][1] * d[0]) / det;
    }
    QuadPoint {
        x,
        det: det.abs(),
        phi,
        grads,
    }
}

fn barycentric_gradients(dim: usize, pts: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let p0 = pts[0];
    let e = |q: [f64; 3]| [q[0] - p0[0], q[1] - p0[1], q[2] - p0[2]];
    let mut g = vec![[0.0; 3]; dim + 1];
    if dim == 2 {
        let (a, b) = (e(pts[1]), e(pts[2]));
        let det = a[0] * b[1] - b[0] * a[1];
        // Rows of the inverse of [a b] (columns).
        g[1] = [b[1] / det, -b[0] / det, 0.0];
        g[2] = [-a[1] / det, a[0] / det, 0.0];
    } else {
        let (a, b, c) = (e(pts[1]), e(pts[2]), e(pts[3]));
        let cross = |u: [f64; 3], v: [f64; 3]| {
            [
                u[1] * v[2] - u[2] * v[1],
                u[2] * v[0] - u[0] * v[2],
                u[0] * v[1] - u[1] * v[0],
            ]
        };
        let bc = cross(b, c);
        let det = a[0] * bc[0] + a[1] * bc[1] + a[2] * bc[2];
        let ca = cross(c, a);
        let ab = cross(a, b);
        g[1] = bc.map(|x| x / det);
        g[2] = ca.map(|x| x / det);
        g[3] = ab.map(|x| x / det);
    }
    let mut g0 = [0.0; 3];
    for gi in &g[1..] {
        for d in 0..3 {
            g0[d] -= gi[d];
        }
    }
    g[0] = g0;
    g
}

pub fn assemble_mass(mesh: &Mesh) -> CsrMatrix {
    Assembler::new(mesh).mass()
}

pub fn assemble_stiffness(mesh: &Mesh) -> CsrMatrix {
    Assembler::new(mesh).stiffness()
}

pub fn assemble_nonlinear_b(mesh: &Mesh, a: &[f64], b: &[f64]) -> Result<CsrMatrix> {
    Assembler::new(mesh).nonlinear_b(a, b)
}

pub fn assemble_unit_load(mesh: &Mesh) -> NodalVector {
    Assembler::new(mesh).unit_load()
}

/// Nodal interpolant of `f(x, t)`.
pub fn interpolate(mesh: &Mesh, f: impl Fn(&[f64; 3], f64) -> f64, t: f64) -> Result<NodalVector> {
    mesh.vertices()
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let v = f(x, t);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Evaluation(format!(
                    "non-finite value {v} at vertex {i} ({:?})",
                    &x[..mesh.dim()]
                )))
            }
        })
        .collect()
}

/// `sqrt(wᵀ M w)` given an assembled mass matrix.
pub fn mass_norm(mass: &CsrMatrix, w: &[f64]) -> f64 {
    let mw = mass.mul_vec(w);
    dot(w, &mw).max(0.0).sqrt()
}

pub fn norm_with(kind: NormKind, mass: &CsrMatrix, w: &[f64]) -> f64 {
    match kind {
        NormKind::Mass => mass_norm(mass, w),
        NormKind::Euclidean => dot(w, w).sqrt(),
    }
}

pub fn l2_norm(mesh: &Mesh, w: &[f64]) -> Result<f64> {
    if w.len() != mesh.n_vertices() {
        return Err(Error::InvalidArgument(format!(
            "vector has length {} but the mesh has {} vertices",
            w.len(),
            mesh.n_vertices()
        )));
    }
    Ok(mass_norm(&assemble_mass(mesh), w))
}

/// Quadrature degree used for error integrals; exact for `(w_h - f)²` when
/// `f` is a polynomial of degree up to 6.
pub const ERROR_QUADRATURE_DEGREE: usize = 12;

/// `||w_h - f(·, t)||_{L2}` by high-order quadrature.
pub fn l2_error_exact(
    mesh: &Mesh,
    w: &[f64],
    f: impl Fn(&[f64; 3], f64) -> f64,
    t: f64,
) -> Result<f64> {
    let rule = QuadratureRule::collapsed(mesh.dim(), ERROR_QUADRATURE_DEGREE);
    Assembler::new(mesh).l2_error(&rule, w, |x| f(x, t))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
