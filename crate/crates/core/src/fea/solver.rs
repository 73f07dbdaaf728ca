use std::sync::{Arc, Once};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};
use serde::{Deserialize, Serialize};

use super::{SparsePattern, SparseSym};
use crate::{Error, Result};

/// Linear solver used for the (constrained) symmetric positive definite systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum LinearSolver {
    /// Sparse Cholesky with fill-reducing ordering; the symbolic analysis is
    /// reused across numeric refactorizations of the same pattern.
    #[default]
    Cholesky,
    /// Jacobi-preconditioned conjugate gradients.
    Pcg {
        rel_tol: f64,
        /// Iteration cap as a multiple of the system dimension.
        max_iter_factor: usize,
    },
}

impl LinearSolver {
    pub fn pcg() -> Self {
        LinearSolver::Pcg {
            rel_tol: 1e-8,
            max_iter_factor: 10,
        }
    }
}

static SEQUENTIAL: Once = Once::new();

fn ensure_sequential() {
    // Each run is single-threaded; parallelism lives at the sample level.
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Symbolic Cholesky analysis of a pattern.
#[derive(Clone)]
pub struct SymbolicFactor {
    pattern: Arc<SparsePattern>,
    col_ptr: Vec<u32>,
    row_idx: Vec<u32>,
    symbolic: SymbolicLlt<u32>,
}

impl std::fmt::Debug for SymbolicFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymbolicFactor")
            .field("dim", &self.pattern.dim())
            .field("nnz", &self.pattern.nnz())
            .finish()
    }
}

impl SymbolicFactor {
    pub fn new(pattern: &Arc<SparsePattern>) -> Result<Self> {
        ensure_sequential();
        let n = pattern.dim();
        let col_ptr: Vec<u32> = pattern.col_ptr().iter().map(|&v| v as u32).collect();
        let row_idx: Vec<u32> = pattern.row_idx().iter().map(|&v| v as u32).collect();
        let sym_ref = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let symbolic = SymbolicLlt::try_new(sym_ref, Side::Lower)
            .map_err(|e| Error::Singular(format!("symbolic factorization failed: {e:?}")))?;
        Ok(SymbolicFactor {
            pattern: pattern.clone(),
            col_ptr,
            row_idx,
            symbolic,
        })
    }

    /// Numeric factorization of `matrix`, which must use this pattern.
    pub fn factor(&self, matrix: &SparseSym) -> Result<Factor> {
        if matrix.pattern().nnz() != self.pattern.nnz() || matrix.dim() != self.pattern.dim() {
            return Err(Error::InvalidArgument(
                "matrix pattern differs from the analysed pattern".into(),
            ));
        }
        let n = matrix.dim();
        let sym_ref =
            SymbolicSparseColMatRef::new_checked(n, n, &self.col_ptr, None, &self.row_idx);
        let mat = SparseColMatRef::new(sym_ref, matrix.values());
        let llt = Llt::try_new_with_symbolic(self.symbolic.clone(), mat, Side::Lower)
            .map_err(|e| Error::Singular(format!("matrix is not positive definite: {e:?}")))?;
        Ok(Factor { n, llt })
    }
}

/// Numeric Cholesky factor.
pub struct Factor {
    n: usize,
    llt: Llt<u32, f64>,
}

impl Factor {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        let n = self.n;
        let view = MatMut::from_column_major_slice_mut(x, n, 1);
        self.llt.solve_in_place(view);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PcgReport {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients on an SPD matrix.
///
/// `x` holds the initial guess and receives the solution.
pub fn pcg(
    a: &SparseSym,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<PcgReport> {
    let n = a.dim();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(PcgReport {
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = a.matvec(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = norm(&r) / bnorm;
    let mut it = 0;
    while rel >= rel_tol {
        if it >= max_iter {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: rel,
            });
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Singular(format!(
                "conjugate gradients broke down (p^T A p = {pap:e})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rel = norm(&r) / bnorm;
        it += 1;
    }
    Ok(PcgReport {
        iterations: it,
        rel_residual: rel,
    })
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
