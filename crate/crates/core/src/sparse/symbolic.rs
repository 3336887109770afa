use super::SparseMatrix;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Pattern-only analysis of `P·A·Pᵀ`: elimination tree, the strictly lower
/// pattern of `L` and strictly upper pattern of `U` (transposes of each
/// other, since the pattern is symmetrized), and the level schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicPlan {
    pub(crate) n: usize,
    /// Position -> original index.
    pub(crate) perm: Vec<usize>,
    /// Original index -> position.
    pub(crate) inv_perm: Vec<usize>,
    pub(crate) parent: Vec<usize>,
    /// Column `k` of `L` holds rows `l_rows[l_ptr[k]..l_ptr[k+1]]`, all `> k`.
    pub(crate) l_ptr: Vec<usize>,
    pub(crate) l_rows: Vec<usize>,
    /// Column `j` of `U` holds rows `u_rows[u_ptr[j]..u_ptr[j+1]]`, all `< j`.
    /// It is also the pattern of row `j` of `L`.
    pub(crate) u_ptr: Vec<usize>,
    pub(crate) u_rows: Vec<usize>,
    /// For the `L` entry at position `p` (row `i`, column `k`), the position
    /// of `U(k, i)` in `u_rows`.
    pub(crate) l_to_u: Vec<usize>,
    pub(crate) levels: Vec<Vec<usize>>,
    pub(crate) level_of: Vec<usize>,
}

impl SymbolicPlan {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Elimination tree parent of each position, `None` for roots.
    pub fn parent(&self, k: usize) -> Option<usize> {
        (self.parent[k] != NONE).then_some(self.parent[k])
    }

    /// Columns grouped by level, in execution order.
    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level_widths(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    /// Strictly lower nonzeros of `L` (the unit diagonal is implicit).
    pub fn l_nnz(&self) -> usize {
        self.l_rows.len()
    }

    /// Nonzeros of `U` including the diagonal.
    pub fn u_nnz(&self) -> usize {
        self.u_rows.len() + self.n
    }

    pub fn l_pattern(&self, k: usize) -> &[usize] {
        &self.l_rows[self.l_ptr[k]..self.l_ptr[k + 1]]
    }

    pub fn u_pattern(&self, j: usize) -> &[usize] {
        &self.u_rows[self.u_ptr[j]..self.u_ptr[j + 1]]
    }

    /// A plan with the columns inside each level reordered by `f`. Levels
    /// and patterns are untouched, so factors computed with it must match.
    pub fn with_level_order(&self, mut f: impl FnMut(&mut [usize])) -> SymbolicPlan {
        let mut plan = self.clone();
        for level in &mut plan.levels {
            f(level);
        }
        plan
    }
}

/// Symmetrized pattern of `P·A·Pᵀ`, as strictly-upper row lists per column.
fn permuted_upper(a: &SparseMatrix, inv_perm: &[usize]) -> Result<Vec<Vec<usize>>> {
    let n = a.dim();
    let mut upper = vec![Vec::new(); n];
    let mut has_diag = vec![false; n];
    for c in 0..n {
        for (r, _) in a.column(c) {
            if r == c {
                has_diag[c] = true;
                continue;
            }
            let (i, j) = (inv_perm[r], inv_perm[c]);
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            upper[hi].push(lo);
        }
    }
    if let Some(c) = has_diag.iter().position(|&d| !d) {
        return Err(Error::Singular { column: c });
    }
    for col in &mut upper {
        col.sort_unstable();
        col.dedup();
    }
    Ok(upper)
}

/// Elimination tree from the upper pattern, with path compression.
fn elimination_tree(upper: &[Vec<usize>]) -> Vec<usize> {
    let n = upper.len();
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for j in 0..n {
        for &i0 in &upper[j] {
            let mut i = i0;
            while i != NONE && i != j {
                let next = ancestor[i];
                ancestor[i] = j;
                if next == NONE {
                    parent[i] = j;
                }
                i = next;
            }
        }
    }
    parent
}

/// Analyze the pattern of `a` under the symmetric permutation `perm`.
pub fn symbolic_factorize(a: &SparseMatrix, perm: &[usize]) -> Result<SymbolicPlan> {
    let n = a.dim();
    if perm.len() != n {
        return Err(Error::Argument(format!(
            "permutation has length {}, matrix has dimension {n}",
            perm.len()
        )));
    }
    let mut inv_perm = vec![NONE; n];
    for (k, &p) in perm.iter().enumerate() {
        if p >= n || inv_perm[p] != NONE {
            return Err(Error::Argument("invalid permutation".into()));
        }
        inv_perm[p] = k;
    }

    let upper = permuted_upper(a, &inv_perm)?;
    let parent = elimination_tree(&upper);

    // Row j of L: the row subtree reached from each upper entry of column j.
    let mut mark = vec![NONE; n];
    let mut u_ptr = Vec::with_capacity(n + 1);
    let mut u_rows = Vec::new();
    u_ptr.push(0);
    let mut l_counts = vec![0usize; n];
    let mut buf = Vec::new();
    for j in 0..n {
        mark[j] = j;
        buf.clear();
        for &i0 in &upper[j] {
            let mut i = i0;
            while i != NONE && mark[i] != j {
                mark[i] = j;
                buf.push(i);
                i = parent[i];
            }
        }
        buf.sort_unstable();
        for &k in &buf {
            l_counts[k] += 1;
        }
        u_rows.extend_from_slice(&buf);
        u_ptr.push(u_rows.len());
    }

    let mut l_ptr = Vec::with_capacity(n + 1);
    l_ptr.push(0);
    for k in 0..n {
        l_ptr.push(l_ptr[k] + l_counts[k]);
    }
    let mut next = l_ptr.clone();
    let mut l_rows = vec![0; u_rows.len()];
    let mut l_to_u = vec![0; u_rows.len()];
    for j in 0..n {
        for p in u_ptr[j]..u_ptr[j + 1] {
            let k = u_rows[p];
            let q = next[k];
            next[k] += 1;
            l_rows[q] = j;
            l_to_u[q] = p;
        }
    }

    // Height in the elimination tree: leaves at 0, each node one above its
    // highest child.
    let mut level_of = vec![0usize; n];
    for j in 0..n {
        let p = parent[j];
        if p != NONE {
            level_of[p] = level_of[p].max(level_of[j] + 1);
        }
    }
    let level_count = level_of.iter().map(|&l| l + 1).max().unwrap_or(0);
    let mut levels = vec![Vec::new(); level_count];
    for (j, &l) in level_of.iter().enumerate() {
        levels[l].push(j);
    }

    Ok(SymbolicPlan {
        n,
        perm: perm.to_vec(),
        inv_perm,
        parent,
        l_ptr,
        l_rows,
        u_ptr,
        u_rows,
        l_to_u,
        levels,
        level_of,
    })
}

/// Entries of `L` created by elimination under `perm`, beyond the strictly
/// lower pattern of the symmetrized permuted matrix.
pub fn fill_count(a: &SparseMatrix, perm: &[usize]) -> Result<usize> {
    let plan = symbolic_factorize(a, perm)?;
    let original: usize = permuted_upper(a, &plan.inv_perm)?
        .iter()
        .map(Vec::len)
        .sum();
    Ok(plan.l_nnz() - original)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_is_one_level() {
        let plan = symbolic_factorize(&SparseMatrix::identity(5), &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(plan.level_count(), 1);
        assert_eq!(plan.level_widths(), vec![5]);
        assert_eq!(plan.l_nnz(), 0);
    }

    #[test]
    fn bidiagonal_chain_is_sequential() {
        let mut t: Vec<_> = (0..5).map(|i| (i, i, 2.0)).collect();
        t.extend((1..5).map(|i| (i, i - 1, 1.0)));
        let a = SparseMatrix::from_triplets(5, &t);
        let plan = symbolic_factorize(&a, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(plan.level_count(), 5);
        assert_eq!(plan.level_widths(), vec![1; 5]);
        assert_eq!(plan.parent(0), Some(1));
        assert_eq!(plan.parent(4), None);
    }

    #[test]
    fn missing_diagonal_is_singular() {
        let a = SparseMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 0, 1.0), (0, 1, 1.0)]);
        assert_eq!(
            symbolic_factorize(&a, &[0, 1]).unwrap_err(),
            Error::Singular { column: 1 }
        );
    }

    #[test]
    fn bad_permutation() {
        let a = SparseMatrix::identity(3);
        assert!(symbolic_factorize(&a, &[0, 0, 1]).is_err());
        assert!(symbolic_factorize(&a, &[0, 1]).is_err());
    }

    #[test]
    fn shuffled_levels_keep_patterns() {
        let mut t: Vec<_> = (0..6).map(|i| (i, i, 4.0)).collect();
        t.extend([
            (5, 0, 1.0),
            (5, 1, 1.0),
            (4, 2, 1.0),
            (4, 3, 1.0),
            (5, 4, 1.0),
        ]);
        let a = SparseMatrix::from_triplets(6, &t);
        let plan = symbolic_factorize(&a, &[0, 1, 2, 3, 4, 5]).unwrap();
        let rev = plan.with_level_order(|l| l.reverse());
        assert_eq!(rev.l_rows, plan.l_rows);
        assert_eq!(rev.levels[0], vec![3, 2, 1, 0]);
    }
}
