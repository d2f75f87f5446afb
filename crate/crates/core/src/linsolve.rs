//! Krylov solvers for the inner linear systems.
//!
//! Picard iterations and the linear substeps of the θ-scheme produce symmetric
//! positive definite blocks and go to [`cg_solve`]. Newton iterations produce
//! a coupled non-symmetric 2×2 block system which is applied blockwise through
//! [`BlockOperator2x2`] and solved with restarted [`gmres_solve`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Anything that can apply `y = A x` and expose its diagonal.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y);
    }

    fn diagonal(&self) -> Vec<f64> {
        CsrMatrix::diagonal(self)
    }
}

/// `[[A11, A12], [A21, A22]]` applied without forming the monolithic matrix.
#[derive(Clone, Debug)]
pub struct BlockOperator2x2 {
    blocks: [CsrMatrix; 4],
}

impl BlockOperator2x2 {
    pub fn new(a11: CsrMatrix, a12: CsrMatrix, a21: CsrMatrix, a22: CsrMatrix) -> Result<Self> {
        let (n1, n2) = (a11.n_rows(), a22.n_rows());
        let ok = a11.n_cols() == n1
            && a22.n_cols() == n2
            && a12.n_rows() == n1
            && a12.n_cols() == n2
            && a21.n_rows() == n2
            && a21.n_cols() == n1;
        if !ok {
            return Err(Error::InvalidArgument(
                "block dimensions are not conformable".into(),
            ));
        }
        Ok(BlockOperator2x2 {
            blocks: [a11, a12, a21, a22],
        })
    }

    pub fn block(&self, i: usize, j: usize) -> &CsrMatrix {
        &self.blocks[2 * i + j]
    }

    /// Monolithic CSR copy, for diagnostics and test oracles.
    pub fn to_csr(&self) -> CsrMatrix {
        let n1 = self.blocks[0].n_rows();
        let mut t = Vec::new();
        for bi in 0..2 {
            for bj in 0..2 {
                let b = self.block(bi, bj);
                let p = b.pattern();
                for i in 0..b.n_rows() {
                    for (&j, k) in p.row(i).iter().zip(p.row_offsets()[i]..) {
                        t.push((i + bi * n1, j + bj * n1, b.values()[k]));
                    }
                }
            }
        }
        let n = self.dim();
        CsrMatrix::from_triplets(n, n, &t).expect("block indices in range")
    }
}

impl LinearOperator for BlockOperator2x2 {
    fn dim(&self) -> usize {
        self.blocks[0].n_rows() + self.blocks[3].n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n1 = self.blocks[0].n_rows();
        let (x1, x2) = x.split_at(n1);
        let (y1, y2) = y.split_at_mut(n1);
        self.blocks[0].mul_vec_into(x1, y1);
        self.blocks[1].mul_vec_add(1.0, x2, y1);
        self.blocks[2].mul_vec_into(x1, y2);
        self.blocks[3].mul_vec_add(1.0, x2, y2);
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.blocks[0].diagonal();
        d.extend(self.blocks[3].diagonal());
        d
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KrylovMethod {
    Cg,
    Gmres,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preconditioner {
    None,
    Jacobi,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSolveConfig {
    pub method: KrylovMethod,
    pub rel_tol: f64,
    /// Iteration cap; `None` means `10 · N` for a system of size `N`.
    pub max_iters: Option<usize>,
    pub restart: usize,
    pub preconditioner: Preconditioner,
}

impl Default for LinearSolveConfig {
    fn default() -> Self {
        LinearSolveConfig {
            method: KrylovMethod::Cg,
            rel_tol: 1e-8,
            max_iters: None,
            restart: 30,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

impl LinearSolveConfig {
    pub fn with_method(self, method: KrylovMethod) -> Self {
        LinearSolveConfig { method, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if self.max_iters == Some(0) || self.restart == 0 {
            return Err(Error::InvalidArgument(
                "max_iters and restart must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn iteration_cap(&self, n: usize) -> usize {
        self.max_iters.unwrap_or(10 * n.max(1))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final residual norm `||b - A x||`.
    pub final_residual: f64,
    pub converged: bool,
}

struct Jacobi(Option<Vec<f64>>);

impl Jacobi {
    fn new(op: &dyn LinearOperator, kind: Preconditioner) -> Result<Self> {
        match kind {
            Preconditioner::None => Ok(Jacobi(None)),
            Preconditioner::Jacobi => {
                let d = op.diagonal();
                if d.iter().any(|&x| x == 0.0 || !x.is_finite()) {
                    return Err(Error::NumericBreakdown {
                        solver: "jacobi",
                        message: "zero or non-finite diagonal entry".into(),
                    });
                }
                Ok(Jacobi(Some(d.into_iter().map(|x| 1.0 / x).collect())))
            }
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match &self.0 {
            None => z.copy_from_slice(r),
            Some(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * di;
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dims(op: &dyn LinearOperator, rhs: &[f64], x0: &[f64]) -> Result<()> {
    let n = op.dim();
    if rhs.len() != n || x0.len() != n {
        return Err(Error::InvalidArgument(format!(
            "operator of size {n} with rhs of length {} and x0 of length {}",
            rhs.len(),
            x0.len()
        )));
    }
    Ok(())
}

fn residual(op: &dyn LinearOperator, rhs: &[f64], x: &[f64], r: &mut [f64]) {
    op.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
}

/// Preconditioned conjugate gradients. The operator must be symmetric
/// positive definite; this is the caller's responsibility.
pub fn cg_solve(
    op: &dyn LinearOperator,
    rhs: &[f64],
    x0: &[f64],
    cfg: &LinearSolveConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    check_dims(op, rhs, x0)?;
    let n = op.dim();
    let target = cfg.rel_tol * norm(rhs);
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    residual(op, rhs, &x, &mut r);
    let mut rnorm = norm(&r);
    if rnorm <= target {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                final_residual: rnorm,
                converged: true,
            },
        ));
    }
    let pre = Jacobi::new(op, cfg.preconditioner)?;
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let cap = cfg.iteration_cap(n);
    for it in 1..=cap {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap <= 0.0 {
            return Err(Error::NumericBreakdown {
                solver: "cg",
                message: format!("pᵀAp = {pap:e} at iteration {it}"),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = norm(&r);
        if !rnorm.is_finite() {
            return Err(Error::NumericBreakdown {
                solver: "cg",
                message: format!("non-finite residual at iteration {it}"),
            });
        }
        if rnorm <= target {
            return Ok((
                x,
                SolveReport {
                    iterations: it,
                    final_residual: rnorm,
                    converged: true,
                },
            ));
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((
        x,
        SolveReport {
            iterations: cap,
            final_residual: rnorm,
            converged: false,
        },
    ))
}

/// Restarted GMRES with right Jacobi preconditioning, so the monitored
/// residual is the true residual of the unpreconditioned system.
pub fn gmres_solve(
    op: &dyn LinearOperator,
    rhs: &[f64],
    x0: &[f64],
    cfg: &LinearSolveConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    cfg.validate()?;
    check_dims(op, rhs, x0)?;
    let n = op.dim();
    let m = cfg.restart.min(n.max(1));
    let target = cfg.rel_tol * norm(rhs);
    let pre = Jacobi::new(op, cfg.preconditioner)?;
    let cap = cfg.iteration_cap(n);

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut total = 0;

    residual(op, rhs, &x, &mut r);
    let mut rnorm = norm(&r);
    loop {
        if rnorm <= target {
            return Ok((
                x,
                SolveReport {
                    iterations: total,
                    final_residual: rnorm,
                    converged: true,
                },
            ));
        }
        if total >= cap {
            break;
        }
        let cycle_start = rnorm;
        basis.clear();
        basis.push(r.iter().map(|v| v / rnorm).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = rnorm;
        let mut k_used = 0;
        for k in 0..m {
            pre.apply(&basis[k], &mut z);
            op.apply(&z, &mut w);
            let w_before = norm(&w);
            // Modified Gram–Schmidt.
            for (j, v) in basis.iter().enumerate() {
                let hj = dot(&w, v);
                h[j][k] = hj;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= hj * vi;
                }
            }
            let hnext = norm(&w);
            if !hnext.is_finite() {
                return Err(Error::NumericBreakdown {
                    solver: "gmres",
                    message: format!("non-finite Arnoldi vector at iteration {}", total + 1),
                });
            }
            h[k + 1][k] = hnext;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                return Err(Error::NumericBreakdown {
                    solver: "gmres",
                    message: "singular Hessenberg column".into(),
                });
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            let est = g[k + 1].abs();
            if est <= target || hnext <= 1e-14 * w_before || total >= cap {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }
        // Back substitution for the least-squares coefficients.
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, v) in y.iter().zip(&basis) {
            for (ui, vi) in update.iter_mut().zip(v) {
                *ui += yi * vi;
            }
        }
        pre.apply(&update, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
        residual(op, rhs, &x, &mut r);
        rnorm = norm(&r);
        if !rnorm.is_finite() {
            return Err(Error::NumericBreakdown {
                solver: "gmres",
                message: "non-finite residual after restart".into(),
            });
        }
        if rnorm > target && rnorm >= cycle_start * (1.0 - 1e-12) {
            // A full cycle made no progress.
            return Ok((
                x,
                SolveReport {
                    iterations: total,
                    final_residual: rnorm,
                    converged: false,
                },
            ));
        }
    }
    Ok((
        x,
        SolveReport {
            iterations: total,
            final_residual: rnorm,
            converged: rnorm <= target,
        },
    ))
}

/// Dispatch on `cfg.method`.
pub fn solve(
    op: &dyn LinearOperator,
    rhs: &[f64],
    x0: &[f64],
    cfg: &LinearSolveConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    match cfg.method {
        KrylovMethod::Cg => cg_solve(op, rhs, x0, cfg),
        KrylovMethod::Gmres => gmres_solve(op, rhs, x0, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: &[&[f64]]) -> CsrMatrix {
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), rows[0].len(), &t).unwrap()
    }

    #[test]
    fn cg_identity_in_one_iteration() {
        let a = CsrMatrix::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        let cfg = LinearSolveConfig {
            preconditioner: Preconditioner::None,
            ..Default::default()
        };
        let (x, rep) = cg_solve(&a, &b, &[0.0; 5], &cfg).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        for (xi, bi) in x.iter().zip(b) {
            assert!((xi - bi).abs() < 1e-15);
        }
    }

    #[test]
    fn cg_two_by_two() {
        let a = dense(&[&[4.0, 1.0], &[1.0, 3.0]]);
        let cfg = LinearSolveConfig {
            rel_tol: 1e-14,
            ..Default::default()
        };
        let (x, rep) = cg_solve(&a, &[1.0, 2.0], &[0.0, 0.0], &cfg).unwrap();
        assert!(rep.converged);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn gmres_rotation() {
        let a = dense(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let cfg = LinearSolveConfig {
            method: KrylovMethod::Gmres,
            preconditioner: Preconditioner::None,
            rel_tol: 1e-14,
            ..Default::default()
        };
        let (x, rep) = gmres_solve(&a, &[1.0, 0.0], &[0.0, 0.0], &cfg).unwrap();
        assert!(rep.converged);
        assert!(x[0].abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gmres_identity_in_one_iteration() {
        let a = CsrMatrix::identity(4);
        let cfg = LinearSolveConfig {
            method: KrylovMethod::Gmres,
            ..Default::default()
        };
        let (x, rep) = gmres_solve(&a, &[1.0, 2.0, 3.0, 4.0], &[0.0; 4], &cfg).unwrap();
        assert_eq!(rep.iterations, 1);
        for (xi, bi) in x.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = dense(&[&[4.0, 1.0, 0.0], &[1.0, 3.0, 1.0], &[0.0, 1.0, 2.0]]);
        let cfg = LinearSolveConfig {
            max_iters: Some(1),
            rel_tol: 1e-14,
            preconditioner: Preconditioner::None,
            ..Default::default()
        };
        let (_, rep) = cg_solve(&a, &[1.0, 1.0, 1.0], &[0.0; 3], &cfg).unwrap();
        assert!(!rep.converged);
    }

    #[test]
    fn cg_breakdown_on_indefinite() {
        let a = dense(&[&[1.0, 0.0], &[0.0, -1.0]]);
        let cfg = LinearSolveConfig {
            preconditioner: Preconditioner::None,
            ..Default::default()
        };
        assert!(matches!(
            cg_solve(&a, &[0.0, 1.0], &[0.0, 0.0], &cfg),
            Err(Error::NumericBreakdown { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = LinearSolveConfig {
            rel_tol: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = LinearSolveConfig {
            restart: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let a = CsrMatrix::identity(3);
        assert!(matches!(
            cg_solve(&a, &[1.0], &[0.0; 3], &LinearSolveConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }
}
