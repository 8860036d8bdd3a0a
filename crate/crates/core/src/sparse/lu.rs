//! Left-looking sparse LU with threshold partial pivoting.
//!
//! Each column of `P A = L U` is computed by a sparse triangular solve whose
//! nonzero pattern is found by a depth-first search over the already
//! factored columns of `L`. Columns are eliminated in nested-dissection
//! order, and the pivot search prefers the matching diagonal entry so the
//! symmetric fill-reducing effect survives pivoting.

use super::ordering::nested_dissection;
use super::{norm_inf, SparseMatrix};
use crate::error::{Error, Result};

/// Prefer the diagonal entry as pivot when it is within this factor of the
/// largest candidate in its column.
const DIAGONAL_PREFERENCE: f64 = 0.1;
/// Pivots below this multiple of `max |a_ij|` are treated as zero.
const SINGULAR_TOL: f64 = 1e-13;
/// Backward residual accepted without iterative refinement.
const RESIDUAL_TOL: f64 = 1e-10;

/// Compressed-column storage for one triangular factor.
#[derive(Clone, Debug, Default)]
struct CscFactor {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Factors of `P A Q = L U`; `L` has unit diagonal stored first in each
/// column, `U` stores its diagonal last.
#[derive(Clone, Debug)]
pub struct LuFactors {
    n: usize,
    lower: CscFactor,
    upper: CscFactor,
    /// `pinv[i]` is the pivot step that eliminated original row `i`.
    pinv: Vec<usize>,
    /// `q[k]` is the column of `A` eliminated at step `k`.
    q: Vec<usize>,
}

impl LuFactors {
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
        }
        let at = a.transpose();
        let (a_ptr, a_rows, a_vals) = (at.row_offsets(), at.col_indices(), at.values());
        let amax = a_vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let q = nested_dissection(a);

        const UNSET: usize = usize::MAX;
        let mut pinv = vec![UNSET; n];
        let mut lower = CscFactor {
            col_ptr: Vec::with_capacity(n + 1),
            row_idx: Vec::with_capacity(4 * a.nnz()),
            values: Vec::with_capacity(4 * a.nnz()),
        };
        let mut upper = lower.clone();

        let mut x = vec![0.0; n];
        let mut stack = vec![0usize; n];
        let mut pos = vec![0usize; n];
        let mut pattern = vec![0usize; n];
        let mut marked = vec![false; n];

        for (k, &col_k) in q.iter().enumerate() {
            lower.col_ptr.push(lower.row_idx.len());
            upper.col_ptr.push(upper.row_idx.len());

            // Nonzero pattern of L \ A(:, k), in topological order at pattern[top..].
            let mut top = n;
            for p in a_ptr[col_k]..a_ptr[col_k + 1] {
                let start = a_rows[p];
                if marked[start] {
                    continue;
                }
                let mut depth = 1usize;
                stack[0] = start;
                while depth > 0 {
                    let h = depth - 1;
                    let j = stack[h];
                    let col = pinv[j];
                    if !marked[j] {
                        marked[j] = true;
                        pos[h] = if col == UNSET { 0 } else { lower.col_ptr[col] + 1 };
                    }
                    let end = if col == UNSET { 0 } else { lower.col_ptr[col + 1] };
                    let mut descended = false;
                    while pos[h] < end {
                        let i = lower.row_idx[pos[h]];
                        pos[h] += 1;
                        if !marked[i] {
                            stack[depth] = i;
                            depth += 1;
                            descended = true;
                            break;
                        }
                    }
                    if !descended {
                        top -= 1;
                        pattern[top] = j;
                        depth -= 1;
                    }
                }
            }
            for &i in &pattern[top..] {
                marked[i] = false;
            }

            // Sparse triangular solve.
            for p in a_ptr[col_k]..a_ptr[col_k + 1] {
                x[a_rows[p]] = a_vals[p];
            }
            for &j in &pattern[top..] {
                let col = pinv[j];
                if col == UNSET {
                    continue;
                }
                let xj = x[j];
                for p in lower.col_ptr[col] + 1..lower.col_ptr[col + 1] {
                    x[lower.row_idx[p]] -= lower.values[p] * xj;
                }
            }

            // Pivot choice among rows not yet eliminated.
            let mut ipiv = UNSET;
            let mut best = -1.0;
            for &i in &pattern[top..] {
                if pinv[i] == UNSET {
                    if x[i].abs() > best {
                        best = x[i].abs();
                        ipiv = i;
                    }
                } else {
                    upper.row_idx.push(pinv[i]);
                    upper.values.push(x[i]);
                }
            }
            if ipiv == UNSET || best <= SINGULAR_TOL * amax || amax == 0.0 {
                return Err(Error::SingularMatrix { column: col_k });
            }
            if pinv[col_k] == UNSET && x[col_k].abs() >= DIAGONAL_PREFERENCE * best {
                ipiv = col_k;
            }
            let pivot = x[ipiv];
            upper.row_idx.push(k);
            upper.values.push(pivot);
            pinv[ipiv] = k;
            lower.row_idx.push(ipiv);
            lower.values.push(1.0);
            for &i in &pattern[top..] {
                if pinv[i] == UNSET {
                    lower.row_idx.push(i);
                    lower.values.push(x[i] / pivot);
                }
                x[i] = 0.0;
            }
        }
        lower.col_ptr.push(lower.row_idx.len());
        upper.col_ptr.push(upper.row_idx.len());
        for r in &mut lower.row_idx {
            *r = pinv[*r];
        }
        Ok(Self { n, lower, upper, pinv, q })
    }

    /// Numeric factorization of `a` on the ordering, pivot sequence and
    /// fill pattern of `self`. `None` when `a` has entries outside that
    /// pattern or a reused pivot fails the threshold test.
    pub fn refactor(&self, a: &SparseMatrix) -> Result<Option<Self>> {
        let n = self.n;
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.nrows() });
        }
        let at = a.transpose();
        let (a_ptr, a_rows, a_vals) = (at.row_offsets(), at.col_indices(), at.values());
        let amax = a_vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut f = self.clone();
        let mut x = vec![0.0; n];
        let mut in_pattern = vec![false; n];
        for (k, &col) in self.q.iter().enumerate() {
            let (us, ue) = (f.upper.col_ptr[k], f.upper.col_ptr[k + 1]);
            let (ls, le) = (f.lower.col_ptr[k], f.lower.col_ptr[k + 1]);
            for &r in f.upper.row_idx[us..ue].iter().chain(&f.lower.row_idx[ls..le]) {
                in_pattern[r] = true;
            }
            for p in a_ptr[col]..a_ptr[col + 1] {
                let step = self.pinv[a_rows[p]];
                if !in_pattern[step] {
                    return Ok(None);
                }
                x[step] = a_vals[p];
            }
            for p in us..ue - 1 {
                let j = f.upper.row_idx[p];
                let xj = x[j];
                f.upper.values[p] = xj;
                for lp in f.lower.col_ptr[j] + 1..f.lower.col_ptr[j + 1] {
                    x[f.lower.row_idx[lp]] -= f.lower.values[lp] * xj;
                }
            }
            let pivot = x[k];
            let largest = f.lower.row_idx[ls + 1..le].iter().fold(pivot.abs(), |m, &r| m.max(x[r].abs()));
            if !(pivot.abs() > SINGULAR_TOL * amax) || pivot.abs() < DIAGONAL_PREFERENCE * largest {
                return Ok(None);
            }
            f.upper.values[ue - 1] = pivot;
            for lp in ls + 1..le {
                f.lower.values[lp] = x[f.lower.row_idx[lp]] / pivot;
            }
            for &r in f.upper.row_idx[us..ue].iter().chain(&f.lower.row_idx[ls..le]) {
                in_pattern[r] = false;
                x[r] = 0.0;
            }
        }
        Ok(Some(f))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries in `L` and `U` together.
    pub fn fill(&self) -> usize {
        self.lower.values.len() + self.upper.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: b.len() });
        }
        let mut x = vec![0.0; self.n];
        for (i, &bi) in b.iter().enumerate() {
            x[self.pinv[i]] = bi;
        }
        let l = &self.lower;
        for j in 0..self.n {
            let xj = x[j];
            if xj != 0.0 {
                for p in l.col_ptr[j] + 1..l.col_ptr[j + 1] {
                    x[l.row_idx[p]] -= l.values[p] * xj;
                }
            }
        }
        let u = &self.upper;
        for j in (0..self.n).rev() {
            let diag = u.col_ptr[j + 1] - 1;
            x[j] /= u.values[diag];
            let xj = x[j];
            if xj != 0.0 {
                for p in u.col_ptr[j]..diag {
                    x[u.row_idx[p]] -= u.values[p] * xj;
                }
            }
        }
        let mut out = vec![0.0; self.n];
        for (k, &c) in self.q.iter().enumerate() {
            out[c] = x[k];
        }
        Ok(out)
    }
}

/// Direct solve of a square nonsingular system. The backward residual
/// `|Ax - b|_inf <= 1e-10 (|A|_inf |x|_inf + |b|_inf)` is checked after the
/// solve, with one step of iterative refinement if it is not yet met.
pub fn solve_general(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    solve_checked(&LuFactors::factor(a)?, a, b)
}

fn solve_checked(lu: &LuFactors, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let mut x = lu.solve(b)?;
    let anorm = a.norm_inf();
    let residual = |x: &[f64]| -> Result<(Vec<f64>, bool)> {
        let ax = a.spmv(x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
        let ok = norm_inf(&r) <= RESIDUAL_TOL * (anorm * norm_inf(x) + norm_inf(b));
        Ok((r, ok))
    };
    let (r, ok) = residual(&x)?;
    if ok {
        return Ok(x);
    }
    let dx = lu.solve(&r)?;
    x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
    let (r, ok) = residual(&x)?;
    if ok && x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SolverFailure {
            iterations: 1,
            residual: norm_inf(&r) / (anorm * norm_inf(&x) + norm_inf(b)),
        })
    }
}

/// [`solve_general`] for a sequence of matrices sharing one sparsity
/// pattern: the ordering, pivot sequence and fill pattern of the first
/// factorization are reused while they stay numerically acceptable.
#[derive(Clone, Debug, Default)]
pub struct ReusableLu {
    factors: Option<LuFactors>,
}

impl ReusableLu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
        if let Some(previous) = &self.factors {
            if let Some(lu) = previous.refactor(a)? {
                let attempt = solve_checked(&lu, a, b);
                self.factors = Some(lu);
                if attempt.is_ok() {
                    return attempt;
                }
            }
        }
        let lu = LuFactors::factor(a)?;
        let x = solve_checked(&lu, a, b);
        self.factors = Some(lu);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::csr_from_triplets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity() {
        let x = solve_general(&SparseMatrix::identity(3), &[1.0, -2.0, 3.5]).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn permutation_needs_pivoting() {
        let a = csr_from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let x = solve_general(&a, &[3.0, 7.0]).unwrap();
        assert_eq!(x, vec![7.0, 3.0]);
    }

    #[test]
    fn singular_detected() {
        let a = csr_from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(solve_general(&a, &[1.0, 1.0]), Err(Error::SingularMatrix { .. })));
        assert!(matches!(
            solve_general(&SparseMatrix::zeros(2, 2), &[1.0, 1.0]),
            Err(Error::SingularMatrix { .. })
        ));
    }

    /// Random sparse, diagonally weighted but nonsymmetric, with some rows
    /// whose largest entry is off the diagonal.
    fn random_system(n: usize, seed: u64) -> (SparseMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, rng.random_range(0.5..2.0)));
            for _ in 0..4 {
                let j = rng.random_range(0..n);
                t.push((i, j, rng.random_range(-1.0..1.0)));
            }
        }
        let a = csr_from_triplets(n, n, &t).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (a, x)
    }

    #[test]
    fn recovers_known_solution() {
        for seed in 0..5 {
            let (a, xstar) = random_system(50, seed);
            let b = a.spmv(&xstar).unwrap();
            let x = solve_general(&a, &b).unwrap();
            let err = x.iter().zip(&xstar).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-10 * norm_inf(&xstar), "seed {seed}: {err}");
        }
    }

    #[test]
    fn refactor_reuses_pattern() {
        let (a, xstar) = random_system(60, 11);
        let lu = LuFactors::factor(&a).unwrap();
        let scaled = a.scaled(3.0);
        let re = lu.refactor(&scaled).unwrap().expect("same pattern");
        let b = scaled.spmv(&xstar).unwrap();
        let x = re.solve(&b).unwrap();
        let err = x.iter().zip(&xstar).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
        let extra = a.add(1.0, &csr_from_triplets(60, 60, &[(0, 59, 1.0), (59, 0, 1.0)]).unwrap()).unwrap();
        if extra.nnz() > a.nnz() {
            assert!(lu.refactor(&extra).unwrap().is_none());
        }
    }

    #[test]
    fn reusable_solver_sequence() {
        let mut solver = ReusableLu::new();
        for seed in 0..3 {
            let (a, xstar) = random_system(40, seed);
            for shift in [0.0, 0.5] {
                let a = a.add(shift, &SparseMatrix::identity(40)).unwrap();
                let x = solver.solve(&a, &a.spmv(&xstar).unwrap()).unwrap();
                let err = x.iter().zip(&xstar).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                assert!(err <= 1e-10 * norm_inf(&xstar));
            }
        }
    }
}
