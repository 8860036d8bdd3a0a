//! Compressed sparse row matrices and the linear solvers used by assembly,
//! Newton iterations and the mean-constrained steady solve.

mod cg;
mod ordering;
mod lu;

pub use cg::solve_spd;
pub use lu::{solve_general, LuFactors, ReusableLu};

use crate::error::{Error, Result};

/// Canonical CSR matrix: column indices strictly increasing within a row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_offsets: vec![0; nrows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a canonical CSR matrix, summing duplicate entries.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(row, col, _) in triplets {
            if row >= nrows || col >= ncols {
                return Err(Error::InvalidTriplet { row, col, nrows, ncols });
            }
        }
        // Counting sort by row, stable in input order.
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let mut next = counts.clone();
        let mut by_row = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            by_row[next[r]] = (c, v);
            next[r] += 1;
        }

        let mut row_offsets = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        for r in 0..nrows {
            let row = &mut by_row[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            let start = col_indices.len();
            for &(c, v) in row.iter() {
                if col_indices.len() > start && *col_indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(col, value)` over the stored entries of `row`.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[row]..self.row_offsets[row + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_offsets[row]..self.row_offsets[row + 1];
        match self.col_indices[range.clone()].binary_search(&col) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                found: x.len(),
            });
        }
        if y.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                found: y.len(),
            });
        }
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yr = acc;
        }
        Ok(())
    }

    /// `self + alpha * other`; patterns may differ.
    pub fn add(&self, alpha: f64, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.nrows * self.ncols,
                found: other.nrows * other.ncols,
            });
        }
        if self.row_offsets == other.row_offsets && self.col_indices == other.col_indices {
            let mut out = self.clone();
            for (v, w) in out.values.iter_mut().zip(&other.values) {
                *v += alpha * w;
            }
            return Ok(out);
        }
        let mut row_offsets = Vec::with_capacity(self.nrows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(self.nnz().max(other.nnz()));
        row_offsets.push(0);
        for r in 0..self.nrows {
            let (mut i, iend) = (self.row_offsets[r], self.row_offsets[r + 1]);
            let (mut j, jend) = (other.row_offsets[r], other.row_offsets[r + 1]);
            while i < iend || j < jend {
                let ci = if i < iend { self.col_indices[i] } else { usize::MAX };
                let cj = if j < jend { other.col_indices[j] } else { usize::MAX };
                if ci < cj {
                    col_indices.push(ci);
                    values.push(self.values[i]);
                    i += 1;
                } else if cj < ci {
                    col_indices.push(cj);
                    values.push(alpha * other.values[j]);
                    j += 1;
                } else {
                    col_indices.push(ci);
                    values.push(self.values[i] + alpha * other.values[j]);
                    i += 1;
                    j += 1;
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn scaled(&self, alpha: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                let c = self.col_indices[k];
                col_indices[next[c]] = r;
                values[next[c]] = self.values[k];
                next[c] += 1;
            }
        }
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_offsets: counts,
            col_indices,
            values,
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Replaces the rows and columns flagged in `mask` by those of the
    /// identity (homogeneous Dirichlet elimination).
    pub fn eliminate(&self, mask: &[bool]) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            if mask[r] {
                triplets.push((r, r, 1.0));
                continue;
            }
            for (c, v) in self.row(r) {
                if !mask[c] {
                    triplets.push((r, c, v));
                }
            }
        }
        SparseMatrix::from_triplets(self.nrows, self.ncols, &triplets)
            .expect("entries come from a valid matrix")
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }
}

pub fn csr_from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<SparseMatrix> {
    SparseMatrix::from_triplets(nrows, ncols, triplets)
}

pub fn spmv(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    a.spmv(x)
}

/// `[[A, c^T], [c, 0]] (x, mu) = (b, value)`.
#[derive(Clone, Debug)]
pub struct BorderedSystem {
    pub core: SparseMatrix,
    pub constraint_row: Vec<f64>,
    pub rhs: Vec<f64>,
    pub constraint_value: f64,
}

/// Solves a bordered system by LU on the augmented matrix. Returns the
/// solution and the Lagrange multiplier.
pub fn solve_bordered(sys: &BorderedSystem) -> Result<(Vec<f64>, f64)> {
    let n = sys.core.nrows();
    if sys.core.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: sys.core.ncols() });
    }
    for len in [sys.constraint_row.len(), sys.rhs.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, found: len });
        }
    }
    if sys.constraint_row.iter().all(|&c| c == 0.0) {
        return Err(Error::InvalidParameter("constraint row is identically zero".into()));
    }
    let mut triplets = Vec::with_capacity(sys.core.nnz() + 2 * n);
    for r in 0..n {
        triplets.extend(sys.core.row(r).map(|(c, v)| (r, c, v)));
        if sys.constraint_row[r] != 0.0 {
            triplets.push((r, n, sys.constraint_row[r]));
        }
    }
    for (c, &v) in sys.constraint_row.iter().enumerate() {
        if v != 0.0 {
            triplets.push((n, c, v));
        }
    }
    let augmented = SparseMatrix::from_triplets(n + 1, n + 1, &triplets)?;
    let mut rhs = sys.rhs.clone();
    rhs.push(sys.constraint_value);
    let mut x = solve_general(&augmented, &rhs)?;
    let mu = x.pop().expect("augmented solution has n + 1 entries");
    Ok((x, mu))
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}
