//! Sparse direct solves backed by faer, with a residual guarantee.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::{Mat, Side};

use super::sparse::{norm2, CsrMatrix};
use crate::error::{Error, Result};

/// Required relative residual of every linear solve.
pub const LIN_TOL: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 4;

enum Factor {
    Lu(Lu<usize, f64>),
    Llt(Llt<usize, f64>),
}

/// A numeric factorization that can solve with the matrix or its transpose.
pub struct Factorization {
    matrix: CsrMatrix,
    factor: Factor,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.factor {
            Factor::Lu(_) => "lu",
            Factor::Llt(_) => "llt",
        };
        f.debug_struct("Factorization").field("n", &self.matrix.n_rows()).field("kind", &kind).finish()
    }
}

impl Factorization {
    /// `sym` selects a Cholesky factorization; the matrix must then be
    /// symmetric positive definite.
    pub fn new(a: &CsrMatrix, sym: bool) -> Result<Self> {
        if a.n_rows() != a.n_cols() {
            return Err(Error::InvalidParameter("matrix is not square".into()));
        }
        if a.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("non-finite matrix entry".into()));
        }
        let pattern = a.pattern();
        // faer sees the CSR arrays as the CSC layout of the transpose
        let view = a.as_transposed_faer();
        let factor = if sym {
            let symbolic = pattern
                .symbolic_llt()
                .ok_or_else(|| Error::SingularSystem("symbolic Cholesky failed".into()))?;
            Factor::Llt(
                Llt::try_new_with_symbolic(symbolic, view, Side::Lower)
                    .map_err(|e| Error::SingularSystem(format!("Cholesky: {e:?}")))?,
            )
        } else {
            let symbolic = pattern
                .symbolic_lu()
                .ok_or_else(|| Error::SingularSystem("symbolic LU failed".into()))?;
            Factor::Lu(
                Lu::try_new_with_symbolic(symbolic, view).map_err(|e| Error::SingularSystem(format!("LU: {e:?}")))?,
            )
        };
        Ok(Factorization { matrix: a.clone(), factor })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    fn raw(&self, b: &[f64], transpose: bool) -> Vec<f64> {
        let mut rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        match &self.factor {
            Factor::Llt(f) => f.solve_in_place(rhs.as_mut()),
            // the stored factor is of the transpose
            Factor::Lu(f) if transpose => f.solve_in_place(rhs.as_mut()),
            Factor::Lu(f) => f.solve_transpose_in_place(rhs.as_mut()),
        }
        (0..b.len()).map(|i| rhs[(i, 0)]).collect()
    }

    fn refined(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        let n = self.matrix.n_rows();
        if b.len() != n {
            return Err(Error::InvalidParameter(format!("rhs length {} != {n}", b.len())));
        }
        let bn = norm2(b);
        if bn == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let apply = |x: &[f64]| if transpose { self.matrix.matvec_transpose(x) } else { self.matrix.matvec(x) };
        let mut x = self.raw(b, transpose);
        let mut best = f64::INFINITY;
        for _ in 0..=REFINEMENT_STEPS {
            let ax = apply(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let rn = norm2(&r);
            if !rn.is_finite() {
                return Err(Error::SingularSystem("non-finite solution".into()));
            }
            if rn <= LIN_TOL * bn {
                return Ok(x);
            }
            if rn >= best {
                break;
            }
            best = rn;
            let dx = self.raw(&r, transpose);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
        }
        Err(Error::NoConvergence(format!("linear residual {:.3e} above tolerance", best / bn)))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.refined(b, false)
    }

    /// Solves with the transposed matrix.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.refined(b, true)
    }
}

/// Solves `A x = b` with `||A x - b|| <= LIN_TOL ||b||`.
pub fn solve_sparse(a: &CsrMatrix, b: &[f64], sym: bool) -> Result<Vec<f64>> {
    Factorization::new(a, sym)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
            x[k] = (b[k] - s) / a[k][k];
        }
        x
    }

    #[test]
    fn identity_returns_rhs() {
        let b = vec![1.0, -2.0, 3.5];
        assert_eq!(solve_sparse(&CsrMatrix::identity(3), &b, true).unwrap(), b);
        assert_eq!(solve_sparse(&CsrMatrix::identity(3), &b, false).unwrap(), b);
    }

    #[test]
    fn spd_system_matches_dense_elimination() {
        let a = vec![
            vec![4.0, 1.0, 0.0, 0.0, 0.5],
            vec![1.0, 5.0, 1.0, 0.0, 0.0],
            vec![0.0, 1.0, 6.0, 2.0, 0.0],
            vec![0.0, 0.0, 2.0, 7.0, 1.0],
            vec![0.5, 0.0, 0.0, 1.0, 3.0],
        ];
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let oracle = dense_solve(a.clone(), b.clone());
        let m = CsrMatrix::from_dense(&a);
        for sym in [true, false] {
            let x = solve_sparse(&m, &b, sym).unwrap();
            for (xi, oi) in x.iter().zip(&oracle) {
                assert!((xi - oi).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transpose_solve_on_nonsymmetric_matrix() {
        let a = vec![vec![2.0, 1.0, 0.0], vec![0.0, 3.0, -1.0], vec![4.0, 0.0, 1.0]];
        let at: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| a[j][i]).collect()).collect();
        let b = vec![1.0, 0.0, -1.0];
        let f = Factorization::new(&CsrMatrix::from_dense(&a), false).unwrap();
        let x = f.solve(&b).unwrap();
        let xt = f.solve_transpose(&b).unwrap();
        for (u, v) in x.iter().zip(dense_solve(a, b.clone())) {
            assert!((u - v).abs() < 1e-13);
        }
        for (u, v) in xt.iter().zip(dense_solve(at, b)) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(solve_sparse(&a, &[1.0, 0.0], false).is_err());
    }
}
