//! Compressed sparse row matrices with a fixed pattern, and direct solvers.
//!
//! Factorizations are delegated to `faer` (sparse Cholesky for symmetric
//! positive definite systems, sparse LU otherwise). Every solve is checked
//! against the residual tolerance and refined iteratively if needed.

use faer::linalg::solvers::Solve;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::lu::{factorize_symbolic_lu, LuSymbolicParams, NumericLu, SymbolicLu};
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseRowMatRef, SymbolicSparseRowMatRef};
use faer::{Conj, Mat, Par, Side};
use thiserror::Error;

/// Relative residual required of every linear solve.
pub const SOLVE_TOLERANCE: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),
    #[error("relative residual {residual:e} above tolerance {tolerance:e}")]
    Divergence { residual: f64, tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given sparsity pattern (column lists per row,
    /// need not be sorted or unique).
    pub fn from_pattern(mut rows: Vec<Vec<usize>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix { nrows, row_ptr, col_idx, values: vec![0.0; nnz] }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        cols.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    /// Adds `v` to entry `(i, j)`, which must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.position(i, j).unwrap_or_else(|| panic!("entry ({i},{j}) not in pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// Largest absolute difference between the matrix and its transpose.
    pub fn asymmetry(&self) -> f64 {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_row_norm(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(_, v)| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Submatrix on the rows and columns flagged in `keep`, with the map from
    /// reduced to full indices.
    pub fn restrict(&self, keep: &[bool]) -> (CsrMatrix, Vec<usize>) {
        let map: Vec<usize> = (0..self.nrows).filter(|&i| keep[i]).collect();
        let mut inverse = vec![usize::MAX; self.nrows];
        for (r, &i) in map.iter().enumerate() {
            inverse[i] = r;
        }
        let mut row_ptr = Vec::with_capacity(map.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &i in &map {
            for (j, v) in self.row(i) {
                if inverse[j] != usize::MAX {
                    col_idx.push(inverse[j]);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        (CsrMatrix { nrows: map.len(), row_ptr, col_idx, values }, map)
    }

    fn faer_ref(&self) -> SparseRowMatRef<'_, usize, f64> {
        let symbolic =
            SymbolicSparseRowMatRef::new_checked(self.nrows, self.nrows, &self.row_ptr, None, &self.col_idx);
        SparseRowMatRef::new(symbolic, &self.values)
    }
}

fn residual_norm(a: &CsrMatrix, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    (r, rn)
}

fn to_mat(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

/// Solves with `solve_in_place` and refines until the relative residual
/// meets [`SOLVE_TOLERANCE`].
fn refined_solve(a: &CsrMatrix, b: &[f64], mut solve_in_place: impl FnMut(&mut Mat<f64>)) -> Result<Vec<f64>, SolveError> {
    let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bn == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let mut rhs = to_mat(b);
    solve_in_place(&mut rhs);
    let mut x: Vec<f64> = (0..b.len()).map(|i| rhs[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::Singular("non-finite solution".into()));
    }
    let (mut r, mut rn) = residual_norm(a, &x, b);
    for _ in 0..REFINEMENT_STEPS {
        if rn <= SOLVE_TOLERANCE * bn {
            break;
        }
        let mut corr = to_mat(&r);
        solve_in_place(&mut corr);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += corr[(i, 0)];
        }
        (r, rn) = residual_norm(a, &x, b);
    }
    if rn <= SOLVE_TOLERANCE * bn {
        Ok(x)
    } else {
        Err(SolveError::Divergence { residual: rn / bn, tolerance: SOLVE_TOLERANCE })
    }
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>, SolveError> {
    if a.nrows == 0 {
        return Ok(Vec::new());
    }
    // the CSR arrays of a symmetric matrix read as CSC describe the same matrix
    let view = a.faer_ref().transpose();
    let symbolic = SymbolicLlt::try_new(view.symbolic(), Side::Lower)
        .map_err(|e| SolveError::Singular(format!("{e:?}")))?;
    let llt = Llt::try_new_with_symbolic(symbolic, view, Side::Lower)
        .map_err(|e| SolveError::Singular(format!("{e:?}")))?;
    refined_solve(a, b, |m| llt.solve_in_place(m))
}

/// Reusable LU factorization for a fixed sparsity pattern.
pub struct LuSolver {
    symbolic: SymbolicLu<usize>,
    numeric: NumericLu<usize, f64>,
    buffer: MemBuffer,
}

impl LuSolver {
    pub fn new(pattern: &CsrMatrix) -> Result<Self, SolveError> {
        let view = pattern.faer_ref().transpose();
        let params = LuSymbolicParams {
            supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
            ..Default::default()
        };
        let symbolic = factorize_symbolic_lu(view.symbolic(), params)
            .map_err(|e| SolveError::Singular(format!("{e:?}")))?;
        let scratch = symbolic
            .factorize_numeric_lu_scratch::<f64>(Par::Seq, Default::default())
            .or(symbolic.solve_transpose_in_place_scratch::<f64>(1, Par::Seq));
        Ok(LuSolver { symbolic, numeric: NumericLu::new(), buffer: MemBuffer::new(scratch) })
    }

    /// Solves `A x = b`; `a` must share the pattern given to [`LuSolver::new`].
    pub fn solve(&mut self, a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        // factor A^T (the CSC view of the CSR arrays) and solve transposed
        let view = a.faer_ref().transpose();
        let LuSolver { symbolic, numeric, buffer } = self;
        let lu = symbolic
            .factorize_numeric_lu(numeric, view, Par::Seq, MemStack::new(buffer), Default::default())
            .map_err(|e| SolveError::Singular(format!("{e:?}")))?;
        refined_solve(a, b, |m| {
            lu.solve_transpose_in_place_with_conj(Conj::No, m.as_mut(), Par::Seq, MemStack::new(buffer))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let rows = (0..n).map(|i| (i.saturating_sub(1)..(i + 2).min(n)).collect()).collect();
        let mut a = CsrMatrix::from_pattern(rows);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
                a.add(i - 1, i, -1.0);
            }
        }
        a
    }

    #[test]
    fn spd_solve_matches_known_solution() {
        let a = laplacian_1d(50);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = solve_spd(&a, &b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-10);
        }
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn lu_solves_nonsymmetric() {
        let mut a = laplacian_1d(30);
        for i in 1..30 {
            a.add(i, i - 1, -0.4);
        }
        let mut lu = LuSolver::new(&a).unwrap();
        let x_true: Vec<f64> = (0..30).map(|i| 1.0 + i as f64).collect();
        let b = a.mul_vec(&x_true);
        let x = lu.solve(&a, &b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let mut a = laplacian_1d(4);
        a.add(2, 2, -10.0);
        assert!(solve_spd(&a, &[1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn restriction_keeps_flagged_block() {
        let a = laplacian_1d(5);
        let (sub, map) = a.restrict(&[false, true, true, false, true]);
        assert_eq!(map, vec![1, 2, 4]);
        assert_eq!(sub.get(0, 1), -1.0);
        assert_eq!(sub.get(1, 2), 0.0);
        assert_eq!(sub.get(2, 2), 2.0);
    }
}
