//! Real sparse matrices and a level-scheduled sparse LU.
//!
//! The factorization pipeline is [`order`] (minimum degree on the
//! symmetrized pattern), [`symbolic_factorize`] (elimination tree, factor
//! pattern, level schedule) and [`numeric_factorize`]. A [`SymbolicPlan`]
//! depends only on the pattern and is reused for every matrix with that
//! pattern. Columns in one level of the plan have no dependency on each
//! other, so numeric factorization and both triangular solves run one level
//! at a time with the columns (rows) of a level processed in parallel. Every
//! column is computed with a fixed operation order, so results do not depend
//! on the number of threads.

mod numeric;
mod ordering;
mod symbolic;

pub use numeric::{numeric_factorize, LuFactors};
pub use ordering::order;
pub use symbolic::{fill_count, symbolic_factorize, SymbolicPlan};

use crate::error::{Error, Result};

/// Pivots with magnitude below this are treated as zero.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

/// Square real matrix in compressed sparse column form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from raw compressed arrays, checking the storage invariants.
    pub fn from_parts(
        n: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if col_ptr.len() != n + 1 || col_ptr[0] != 0 || col_ptr[n] != row_idx.len() {
            return Err(Error::Argument("inconsistent column pointers".into()));
        }
        if row_idx.len() != values.len() {
            return Err(Error::Argument("row index and value lengths differ".into()));
        }
        for j in 0..n {
            if col_ptr[j] > col_ptr[j + 1] {
                return Err(Error::Argument(
                    "column pointers must be non-decreasing".into(),
                ));
            }
            let rows = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            if rows.windows(2).any(|w| w[0] >= w[1]) || rows.iter().any(|&r| r >= n) {
                return Err(Error::Argument(format!(
                    "column {j}: row indices must be strictly increasing and < {n}"
                )));
            }
        }
        Ok(SparseMatrix {
            n,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// Build from `(row, col, value)` triplets; duplicates are summed in
    /// input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            assert!(
                r < n && c < n,
                "triplet ({r}, {c}) out of bounds for n = {n}"
            );
            cols[c].push((r, v));
        }
        Self::from_columns(n, cols)
    }

    /// Build from per-column entry lists (any order, duplicates summed).
    pub fn from_columns(n: usize, cols: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(cols.len(), n);
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for col in cols {
            for (r, v) in merge_entries(col) {
                row_idx.push(r);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        SparseMatrix {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let mut t = Vec::new();
        for (i, row) in a.iter().enumerate() {
            assert_eq!(row.len(), n);
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &t)
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.col_ptr[j]..self.col_ptr[j + 1];
        match self.row_idx[span.clone()].binary_search(&i) {
            Ok(p) => self.values[span.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let xj = x[j];
            for (i, v) in self.column(j) {
                y[i] += v * xj;
            }
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for j in 0..self.n {
            for (i, v) in self.column(j) {
                d[i][j] = v;
            }
        }
        d
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0f64; self.n];
        for j in 0..self.n {
            for (i, v) in self.column(j) {
                rows[i] += v.abs();
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    pub fn is_pattern_symmetric(&self) -> bool {
        (0..self.n).all(|j| {
            self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]]
                .iter()
                .all(|&i| {
                    let span = self.col_ptr[i]..self.col_ptr[i + 1];
                    self.row_idx[span].binary_search(&j).is_ok()
                })
        })
    }

    /// Off-diagonal neighbor lists of the symmetrized pattern, ascending.
    pub(crate) fn symmetric_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for j in 0..self.n {
            for &i in &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]] {
                if i != j {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }
}

/// Sort `(index, value)` pairs by index and sum duplicates in their original
/// order, so the result does not depend on who computed the entries.
pub(crate) fn merge_entries<T>(mut entries: Vec<(usize, T)>) -> Vec<(usize, T)>
where
    T: Copy + std::ops::AddAssign,
{
    entries.sort_by_key(|&(c, _)| c);
    let mut out: Vec<(usize, T)> = Vec::with_capacity(entries.len());
    for (c, v) in entries {
        match out.last_mut() {
            Some((lc, lv)) if *lc == c => *lv += v,
            _ => out.push((c, v)),
        }
    }
    out
}

/// Factorize with a freshly computed ordering and plan.
pub fn factorize(a: &SparseMatrix) -> Result<LuFactors> {
    let perm = order(a);
    let plan = std::sync::Arc::new(symbolic_factorize(a, &perm)?);
    numeric_factorize(&plan, a)
}
