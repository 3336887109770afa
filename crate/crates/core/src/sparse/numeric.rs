use std::sync::Arc;

use rayon::prelude::*;

use super::{SparseMatrix, SymbolicPlan, PIVOT_THRESHOLD};
use crate::error::{Error, Result};

/// Levels narrower than this are factorized on the calling thread.
const PAR_FACTOR_WIDTH: usize = 16;
/// Levels narrower than this are substituted on the calling thread.
const PAR_SOLVE_WIDTH: usize = 256;

/// `P·A·Pᵀ = L·U` with unit lower `L`, diagonal pivoting only.
#[derive(Debug, Clone)]
pub struct LuFactors {
    plan: Arc<SymbolicPlan>,
    /// `L` values aligned with `plan.l_rows` (column-wise).
    l_vals: Vec<f64>,
    /// Strictly upper `U` values aligned with `plan.u_rows` (column-wise).
    u_vals: Vec<f64>,
    diag: Vec<f64>,
    /// Row `j` of `L`, aligned with `plan.u_pattern(j)`.
    l_row_vals: Vec<f64>,
    /// Row `k` of `U` (strictly upper), aligned with `plan.l_pattern(k)`.
    u_row_vals: Vec<f64>,
}

struct Scratch {
    x: Vec<f64>,
    mark: Vec<usize>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            x: vec![0.0; n],
            mark: vec![usize::MAX; n],
        }
    }
}

struct ColumnValues {
    u: Vec<f64>,
    diag: f64,
    l: Vec<f64>,
}

/// Left-looking update of column `j`. Reads only `L` columns of `j`'s
/// descendants, which sit on lower levels.
fn factor_column(
    plan: &SymbolicPlan,
    a: &SparseMatrix,
    l_vals: &[f64],
    j: usize,
    s: &mut Scratch,
) -> Result<ColumnValues> {
    let upat = plan.u_pattern(j);
    let lpat = plan.l_pattern(j);
    for &r in upat.iter().chain(std::iter::once(&j)).chain(lpat) {
        s.mark[r] = j;
        s.x[r] = 0.0;
    }
    let original = plan.perm[j];
    for (r, v) in a.column(original) {
        let i = plan.inv_perm[r];
        if s.mark[i] != j {
            return Err(Error::PatternMismatch { column: original });
        }
        s.x[i] += v;
    }

    let mut u = Vec::with_capacity(upat.len());
    for &k in upat {
        let ukj = s.x[k];
        u.push(ukj);
        if ukj != 0.0 {
            for p in plan.l_ptr[k]..plan.l_ptr[k + 1] {
                s.x[plan.l_rows[p]] -= l_vals[p] * ukj;
            }
        }
    }
    let diag = s.x[j];
    if !(diag.abs() >= PIVOT_THRESHOLD) {
        return Err(Error::Singular { column: original });
    }
    let l = lpat.iter().map(|&i| s.x[i] / diag).collect();
    Ok(ColumnValues { u, diag, l })
}

/// Numeric factorization of `a` with a precomputed plan. Columns are
/// processed one level at a time; within a level they run in parallel on the
/// current rayon pool.
pub fn numeric_factorize(plan: &Arc<SymbolicPlan>, a: &SparseMatrix) -> Result<LuFactors> {
    let n = plan.n;
    if a.dim() != n {
        return Err(Error::Argument(format!(
            "matrix dimension {} does not match plan dimension {n}",
            a.dim()
        )));
    }
    let mut l_vals = vec![0.0; plan.l_rows.len()];
    let mut u_vals = vec![0.0; plan.u_rows.len()];
    let mut diag = vec![0.0; n];
    let mut scratch = Scratch::new(n);

    for level in &plan.levels {
        let results: Vec<ColumnValues> = if level.len() >= PAR_FACTOR_WIDTH {
            let l_read = &l_vals;
            level
                .par_iter()
                .map_init(
                    || Scratch::new(n),
                    |s, &j| factor_column(plan, a, l_read, j, s),
                )
                .collect::<Result<_>>()?
        } else {
            level
                .iter()
                .map(|&j| factor_column(plan, a, &l_vals, j, &mut scratch))
                .collect::<Result<_>>()?
        };
        for (&j, col) in level.iter().zip(results) {
            u_vals[plan.u_ptr[j]..plan.u_ptr[j + 1]].copy_from_slice(&col.u);
            l_vals[plan.l_ptr[j]..plan.l_ptr[j + 1]].copy_from_slice(&col.l);
            diag[j] = col.diag;
        }
    }

    let mut l_row_vals = vec![0.0; l_vals.len()];
    let mut u_row_vals = vec![0.0; u_vals.len()];
    for (p, &q) in plan.l_to_u.iter().enumerate() {
        l_row_vals[q] = l_vals[p];
        u_row_vals[p] = u_vals[q];
    }

    Ok(LuFactors {
        plan: Arc::clone(plan),
        l_vals,
        u_vals,
        diag,
        l_row_vals,
        u_row_vals,
    })
}

impl LuFactors {
    pub fn plan(&self) -> &Arc<SymbolicPlan> {
        &self.plan
    }

    pub fn dim(&self) -> usize {
        self.plan.n
    }

    /// Dense `L` and `U` in permuted coordinates.
    pub fn to_dense(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.plan.n;
        let mut l = vec![vec![0.0; n]; n];
        let mut u = vec![vec![0.0; n]; n];
        for k in 0..n {
            l[k][k] = 1.0;
            u[k][k] = self.diag[k];
            for p in self.plan.l_ptr[k]..self.plan.l_ptr[k + 1] {
                l[self.plan.l_rows[p]][k] = self.l_vals[p];
            }
            for p in self.plan.u_ptr[k]..self.plan.u_ptr[k + 1] {
                u[self.plan.u_rows[p]][k] = self.u_vals[p];
            }
        }
        (l, u)
    }

    /// All factor values in a fixed order, for bitwise comparisons.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.l_vals
            .iter()
            .chain(&self.u_vals)
            .chain(&self.diag)
            .copied()
    }

    /// Solve `A·x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let plan = &*self.plan;
        let n = plan.n;
        assert_eq!(rhs.len(), n, "right-hand side length must equal dimension");
        let mut y: Vec<f64> = plan.perm.iter().map(|&p| rhs[p]).collect();

        let forward = |y: &[f64], j: usize| -> f64 {
            let span = plan.u_ptr[j]..plan.u_ptr[j + 1];
            let mut acc = y[j];
            for (&k, &l) in plan.u_rows[span.clone()].iter().zip(&self.l_row_vals[span]) {
                acc -= l * y[k];
            }
            acc
        };
        for level in &plan.levels {
            substitute(level, &mut y, forward);
        }

        let backward = |z: &[f64], k: usize| -> f64 {
            let span = plan.l_ptr[k]..plan.l_ptr[k + 1];
            let mut acc = z[k];
            for (&i, &u) in plan.l_rows[span.clone()].iter().zip(&self.u_row_vals[span]) {
                acc -= u * z[i];
            }
            acc / self.diag[k]
        };
        for level in plan.levels.iter().rev() {
            substitute(level, &mut y, backward);
        }

        for (k, &p) in plan.perm.iter().enumerate() {
            rhs[p] = y[k];
        }
    }
}

/// Apply a row update to every index of one level. Rows in a level read
/// only entries outside it, so they can be computed in any order.
fn substitute<F>(level: &[usize], v: &mut [f64], row: F)
where
    F: Fn(&[f64], usize) -> f64 + Sync,
{
    if level.len() >= PAR_SOLVE_WIDTH {
        let read: &[f64] = v;
        let out: Vec<f64> = level.par_iter().map(|&j| row(read, j)).collect();
        for (&j, val) in level.iter().zip(out) {
            v[j] = val;
        }
    } else {
        for &j in level {
            v[j] = row(v, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::{factorize, order, symbolic_factorize};

    #[test]
    fn two_by_two_by_hand() {
        let a = SparseMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let plan = Arc::new(symbolic_factorize(&a, &[0, 1]).unwrap());
        let f = numeric_factorize(&plan, &a).unwrap();
        let (l, u) = f.to_dense();
        assert_eq!(l, vec![vec![1.0, 0.0], vec![0.5, 1.0]]);
        assert_eq!(u, vec![vec![2.0, 1.0], vec![0.0, 2.5]]);
        assert_eq!(f.solve(&[3.0, 4.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn identity_factors() {
        let a = SparseMatrix::identity(1000);
        let f = factorize(&a).unwrap();
        assert!(f.values().filter(|&v| v != 0.0).all(|v| v == 1.0));
        assert_eq!(f.plan().l_nnz(), 0);
        let mut e3 = vec![0.0; 1000];
        e3[3] = 1.0;
        assert_eq!(f.solve(&e3), e3);
    }

    #[test]
    fn zero_pivot_is_singular() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let plan = Arc::new(symbolic_factorize(&a, &[0, 1]).unwrap());
        assert_eq!(
            numeric_factorize(&plan, &a).unwrap_err(),
            Error::Singular { column: 1 }
        );
    }

    #[test]
    fn entries_outside_plan_rejected() {
        let a = SparseMatrix::identity(3);
        let plan = Arc::new(symbolic_factorize(&a, &order(&a)).unwrap());
        let b =
            SparseMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (2, 0, 0.5)]);
        assert!(matches!(
            numeric_factorize(&plan, &b),
            Err(Error::PatternMismatch { .. })
        ));
    }

    #[test]
    fn plan_reuse_matches_fresh_factorization() {
        let a1 = SparseMatrix::from_dense(&[
            vec![4.0, 1.0, 0.0],
            vec![1.0, 5.0, 2.0],
            vec![0.0, 2.0, 6.0],
        ]);
        let a2 = SparseMatrix::from_dense(&[
            vec![7.0, -1.0, 0.0],
            vec![2.0, 9.0, 1.0],
            vec![0.0, 3.0, 8.0],
        ]);
        let perm = order(&a1);
        let plan = Arc::new(symbolic_factorize(&a1, &perm).unwrap());
        let _ = numeric_factorize(&plan, &a1).unwrap();
        let reused = numeric_factorize(&plan, &a2).unwrap();
        let fresh =
            numeric_factorize(&Arc::new(symbolic_factorize(&a2, &perm).unwrap()), &a2).unwrap();
        assert!(reused.values().eq(fresh.values()));
    }
}
