use std::sync::Arc;

use super::Grid;
use crate::{Error, Result};

/// Column-compressed sparsity pattern of a symmetric matrix, stored with both
/// triangles, plus the element scatter map for grid assembly.
#[derive(Debug)]
pub struct SparsePattern {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    diag: Vec<usize>,
    /// For element `e` (row-major), entry `e * 64 + 8 * a + b` is the value slot
    /// of local pair `(a, b)`. Empty for patterns not built from a grid.
    scatter: Vec<u32>,
}

impl SparsePattern {
    /// Pattern of all 8x8 element couplings on `grid`.
    pub fn for_grid(grid: &Grid) -> Arc<Self> {
        let n = grid.n_dofs();
        let mut cols: Vec<Vec<usize>> = vec![Vec::with_capacity(18); n];
        for ey in 0..grid.nely {
            for ex in 0..grid.nelx {
                let dofs = grid.element_dofs(ex, ey);
                for &j in &dofs {
                    cols[j].extend_from_slice(&dofs);
                }
            }
        }
        for (j, c) in cols.iter_mut().enumerate() {
            c.push(j);
            c.sort_unstable();
            c.dedup();
        }
        let mut pattern = Self::from_columns(n, &cols);
        let mut scatter = Vec::with_capacity(grid.n_elements() * 64);
        for ey in 0..grid.nely {
            for ex in 0..grid.nelx {
                let dofs = grid.element_dofs(ex, ey);
                for &i in &dofs {
                    for &j in &dofs {
                        scatter.push(pattern.slot(i, j).expect("element pair in pattern") as u32);
                    }
                }
            }
        }
        // The loop above visits (row a, col b); store as a*8+b.
        pattern.scatter = scatter;
        Arc::new(pattern)
    }

    /// Pattern from explicit `(row, col)` pairs; symmetrized and with a full diagonal.
    pub fn from_entries(n: usize, entries: &[(usize, usize)]) -> Result<Arc<Self>> {
        let mut cols: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
        for &(i, j) in entries {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "entry ({i}, {j}) outside a {n}x{n} pattern"
                )));
            }
            cols[j].push(i);
            cols[i].push(j);
        }
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
        }
        Ok(Arc::new(Self::from_columns(n, &cols)))
    }

    fn from_columns(n: usize, cols: &[Vec<usize>]) -> Self {
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut diag = Vec::with_capacity(n);
        col_ptr.push(0);
        for (j, c) in cols.iter().enumerate() {
            for &i in c {
                if i == j {
                    diag.push(row_idx.len());
                }
                row_idx.push(i);
            }
            col_ptr.push(row_idx.len());
        }
        SparsePattern {
            n,
            col_ptr,
            row_idx,
            diag,
            scatter: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub(crate) fn scatter(&self) -> &[u32] {
        &self.scatter
    }

    /// Value slot of entry `(i, j)`, if present.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.col_ptr[j];
        let rows = &self.row_idx[start..self.col_ptr[j + 1]];
        rows.binary_search(&i).ok().map(|k| start + k)
    }
}

/// Symmetric sparse matrix sharing a [`SparsePattern`].
#[derive(Debug, Clone)]
pub struct SparseSym {
    pattern: Arc<SparsePattern>,
    values: Vec<f64>,
}

impl SparseSym {
    pub fn zeros(pattern: Arc<SparsePattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        SparseSym { pattern, values }
    }

    pub fn from_triplets(
        pattern: Arc<SparsePattern>,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut m = Self::zeros(pattern);
        for &(i, j, v) in triplets {
            let slot = m.pattern.slot(i, j).ok_or_else(|| {
                Error::InvalidArgument(format!("entry ({i}, {j}) not in pattern"))
            })?;
            m.values[slot] += v;
        }
        Ok(m)
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.slot(i, j).map_or(0.0, |s| self.values[s])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.pattern.diag.iter().map(|&s| self.values[s]).collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        let p = &self.pattern;
        // Full symmetric storage: column j of A equals row j.
        for (j, yj) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in p.col_ptr[j]..p.col_ptr[j + 1] {
                acc += self.values[k] * x[p.row_idx[k]];
            }
            *yj = acc;
        }
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let ax = self.matvec(x);
        ax.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `self = a * self + b * other`, patterns must match.
    pub fn axpby(&mut self, a: f64, b: f64, other: &SparseSym) -> Result<()> {
        if !Arc::ptr_eq(&self.pattern, &other.pattern)
            && self.pattern.row_idx != other.pattern.row_idx
        {
            return Err(Error::InvalidArgument("sparse patterns differ".into()));
        }
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x = a * *x + b * y;
        }
        Ok(())
    }

    /// Linear combination `sum_k c_k A_k` over matrices sharing one pattern.
    pub fn combination(terms: &[(f64, &SparseSym)]) -> Result<SparseSym> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty combination".into()))?;
        let mut out = SparseSym::zeros(first.1.pattern.clone());
        for &(c, m) in terms {
            out.axpby(1.0, c, m)?;
        }
        Ok(out)
    }

    /// Replace rows and columns of `fixed` DOFs by identity.
    pub fn constrain(&mut self, fixed: &[bool]) {
        let p = &self.pattern;
        for j in 0..p.n {
            for k in p.col_ptr[j]..p.col_ptr[j + 1] {
                let i = p.row_idx[k];
                if fixed[i] || fixed[j] {
                    self.values[k] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut d = vec![vec![0.0; n]; n];
        let p = &self.pattern;
        for j in 0..n {
            for k in p.col_ptr[j]..p.col_ptr[j + 1] {
                d[p.row_idx[k]][j] = self.values[k];
            }
        }
        d
    }
}
