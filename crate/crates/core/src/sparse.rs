//! Compressed-row sparse matrices.
//!
//! All FEM operators on one mesh share the vertex-adjacency pattern, so the
//! pattern is reference counted and linear combinations of matrices with the
//! same pattern reduce to combinations of their value arrays.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Row offsets and sorted, duplicate-free column indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsityPattern {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
}

impl SparsityPattern {
    /// Build from per-row column lists; each list is sorted and deduplicated.
    pub fn from_rows(n_cols: usize, mut rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            if let Some(&last) = row.last() {
                if last >= n_cols {
                    return Err(Error::InvalidArgument(format!(
                        "column {last} out of range for {n_cols} columns"
                    )));
                }
            }
            col_indices.extend_from_slice(row);
            row_offsets.push(col_indices.len());
        }
        Ok(SparsityPattern {
            n_rows: rows.len(),
            n_cols,
            row_offsets,
            col_indices,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Position of entry `(i, j)` in the value array, if it is in the pattern.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_offsets[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }
}

/// Real-valued CSR matrix.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        CsrMatrix { pattern, values }
    }

    pub fn from_parts(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::InvalidArgument(format!(
                "{} values for a pattern with {} entries",
                values.len(),
                pattern.nnz()
            )));
        }
        Ok(CsrMatrix { pattern, values })
    }

    /// Assemble from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut rows = vec![Vec::new(); n_rows];
        for &(i, j, _) in triplets {
            if i >= n_rows {
                return Err(Error::InvalidArgument(format!(
                    "row {i} out of range for {n_rows} rows"
                )));
            }
            rows[i].push(j);
        }
        let pattern = Arc::new(SparsityPattern::from_rows(n_cols, rows)?);
        let mut m = CsrMatrix::zeros(pattern);
        for &(i, j, v) in triplets {
            let k = m.pattern.find(i, j).expect("entry was inserted above");
            m.values[k] += v;
        }
        Ok(m)
    }

    /// Identity of size `n`.
    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        CsrMatrix::from_triplets(n, n, &t).expect("valid identity")
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn n_rows(&self) -> usize {
        self.pattern.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.pattern.n_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Entry `(i, j)`, zero when outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |k| self.values[k])
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols());
        assert_eq!(y.len(), self.n_rows());
        let p = &self.pattern;
        for (i, yi) in y.iter_mut().enumerate() {
            let (s, e) = (p.row_offsets[i], p.row_offsets[i + 1]);
            *yi = p.col_indices[s..e]
                .iter()
                .zip(&self.values[s..e])
                .map(|(&j, &a)| a * x[j])
                .sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows()];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y += alpha * A x`.
    pub fn mul_vec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        for (i, yi) in y.iter_mut().enumerate() {
            let (s, e) = (p.row_offsets[i], p.row_offsets[i + 1]);
            let acc: f64 = p.col_indices[s..e]
                .iter()
                .zip(&self.values[s..e])
                .map(|(&j, &a)| a * x[j])
                .sum();
            *yi += alpha * acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.get(i, i)).collect()
    }

    /// `Σ c_k A_k` for matrices sharing one sparsity pattern.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> Result<CsrMatrix> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("linear combination of zero matrices".into()))?;
        let mut out = CsrMatrix::zeros(first.pattern.clone());
        for (c, m) in terms {
            out.add_scaled(*c, m)?;
        }
        Ok(out)
    }

    /// `self += c * other` for a matrix with the same pattern.
    pub fn add_scaled(&mut self, c: f64, other: &CsrMatrix) -> Result<()> {
        if !Arc::ptr_eq(&self.pattern, &other.pattern) && self.pattern != other.pattern {
            return Err(Error::InvalidArgument(
                "matrices have different sparsity patterns".into(),
            ));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n_rows() {
            for (&j, k) in self
                .pattern
                .row(i)
                .iter()
                .zip(self.pattern.row_offsets[i]..)
            {
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Dense row-major copy; intended for small matrices in diagnostics and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols()]; self.n_rows()];
        for (i, row) in d.iter_mut().enumerate() {
            for (&j, k) in self
                .pattern
                .row(i)
                .iter()
                .zip(self.pattern.row_offsets[i]..)
            {
                row[j] = self.values[k];
            }
        }
        d
    }

    /// Matrix Market coordinate dump. With `symmetric`, only the lower
    /// triangle is written.
    pub fn to_matrix_market(&self, symmetric: bool) -> String {
        let mut out = String::new();
        let kind = if symmetric { "symmetric" } else { "general" };
        let _ = writeln!(out, "%%MatrixMarket matrix coordinate real {kind}");
        let mut entries = Vec::new();
        for i in 0..self.n_rows() {
            for (&j, k) in self
                .pattern
                .row(i)
                .iter()
                .zip(self.pattern.row_offsets[i]..)
            {
                if !symmetric || j <= i {
                    entries.push((i + 1, j + 1, self.values[k]));
                }
            }
        }
        let _ = writeln!(out, "{} {} {}", self.n_rows(), self.n_cols(), entries.len());
        for (i, j, v) in entries {
            let _ = writeln!(out, "{i} {j} {v:?}");
        }
        out
    }

    pub fn write_matrix_market(&self, path: impl AsRef<Path>, symmetric: bool) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_matrix_market(symmetric)).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, -1.0)]).unwrap();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.pattern().nnz(), 2);
    }

    #[test]
    fn columns_sorted_within_rows() {
        let m = CsrMatrix::from_triplets(1, 5, &[(0, 4, 1.0), (0, 0, 1.0), (0, 2, 1.0)]).unwrap();
        assert_eq!(m.pattern().row(0), &[0, 2, 4]);
    }

    #[test]
    fn matvec_and_combination() {
        let a =
            CsrMatrix::from_triplets(2, 2, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)])
                .unwrap();
        assert_eq!(a.mul_vec(&[1.0, 2.0]), vec![6.0, 7.0]);
        let c = CsrMatrix::linear_combination(&[(2.0, &a), (-1.0, &a)]).unwrap();
        assert_eq!(c.values(), a.values());
        let other = CsrMatrix::identity(2);
        assert!(CsrMatrix::linear_combination(&[(1.0, &a), (1.0, &other)]).is_err());
    }

    #[test]
    fn matrix_market_symmetric_lower_triangle() {
        let a =
            CsrMatrix::from_triplets(2, 2, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)])
                .unwrap();
        let mm = a.to_matrix_market(true);
        let lines: Vec<_> = mm.lines().collect();
        assert_eq!(lines[0], "%%MatrixMarket matrix coordinate real symmetric");
        assert_eq!(lines[1], "2 2 3");
        assert_eq!(lines[2..], ["1 1 4.0", "2 1 1.0", "2 2 3.0"]);
    }
}
