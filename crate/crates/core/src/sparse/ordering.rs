use std::collections::BTreeSet;

use super::SparseMatrix;

/// Fill-reducing symmetric permutation by minimum degree on the symmetrized
/// pattern. `perm[k]` is the original index placed at position `k`.
///
/// Ties on current degree go to the node with the smaller original degree,
/// then the smaller index, so hubs are eliminated late and the result is
/// deterministic.
pub fn order(a: &SparseMatrix) -> Vec<usize> {
    let n = a.dim();
    let mut adj = a.symmetric_adjacency();
    let initial: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut queue: BTreeSet<(usize, usize, usize)> =
        (0..n).map(|v| (adj[v].len(), initial[v], v)).collect();
    let mut eliminated = vec![false; n];
    let mut perm = Vec::with_capacity(n);

    while let Some((_, _, v)) = queue.pop_first() {
        eliminated[v] = true;
        perm.push(v);
        let clique = std::mem::take(&mut adj[v]);
        for &u in &clique {
            queue.remove(&(adj[u].len(), initial[u], u));
            let merged = merge_neighbors(&adj[u], &clique, u, v);
            adj[u] = merged;
            queue.insert((adj[u].len(), initial[u], u));
        }
    }
    debug_assert!(eliminated.iter().all(|&e| e));
    perm
}

/// `current ∪ clique`, without `u` itself and the eliminated node `v`.
fn merge_neighbors(current: &[usize], clique: &[usize], u: usize, v: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(current.len() + clique.len());
    let (mut i, mut j) = (0, 0);
    while i < current.len() || j < clique.len() {
        let next = match (current.get(i), clique.get(j)) {
            (Some(&a), Some(&b)) if a == b => {
                i += 1;
                j += 1;
                a
            }
            (Some(&a), Some(&b)) if a < b => {
                i += 1;
                a
            }
            (Some(_), Some(&b)) => {
                j += 1;
                b
            }
            (Some(&a), None) => {
                i += 1;
                a
            }
            (None, Some(&b)) => {
                j += 1;
                b
            }
            (None, None) => unreachable!(),
        };
        if next != u && next != v {
            out.push(next);
        }
    }
    out
}
