use num_complex::Complex64;
use rayon::prelude::*;

use super::{Branch, BusIndex, GridGraph};
use crate::sparse::merge_entries;

/// Rows assembled per rayon task.
pub(crate) const ROW_CHUNK: usize = 64;

/// π-model terms of one branch with the off-nominal tap and phase shift on
/// the from side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

impl BranchAdmittance {
    pub fn of(br: &Branch) -> Self {
        let y = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let half_b = Complex64::new(0.0, br.b_charging / 2.0);
        let a = Complex64::from_polar(br.tap, br.shift);
        let ytt = y + half_b;
        BranchAdmittance {
            yff: ytt / (br.tap * br.tap),
            yft: -y / a.conj(),
            ytf: -y / a,
            ytt,
        }
    }
}

/// Complex bus admittance matrix of one AC area, stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    /// Local row index -> dense bus index.
    pub buses: Vec<BusIndex>,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.buses.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[span.clone()].binary_search(&j) {
            Ok(p) => self.values[span.start + p],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }
}

/// Map from dense bus index to local index within an area (`usize::MAX`
/// when outside).
pub(crate) fn local_index(graph: &GridGraph, area: &[BusIndex]) -> Vec<usize> {
    let mut local = vec![usize::MAX; graph.bus_count()];
    for (k, &b) in area.iter().enumerate() {
        local[b] = k;
    }
    local
}

/// Assemble the admittance matrix of one area with one independent task per
/// row. `area` lists dense bus indices; it must be closed under AC branches.
pub fn build_admittance(graph: &GridGraph, area: &[BusIndex]) -> AdmittanceMatrix {
    let local = local_index(graph, area);
    let rows: Vec<Vec<(usize, Complex64)>> = area
        .par_iter()
        .with_min_len(ROW_CHUNK)
        .enumerate()
        .map(|(i, &bus)| {
            let b = &graph.buses[bus];
            let mut diag = Complex64::new(b.shunt_g, b.shunt_b);
            let mut entries = Vec::with_capacity(graph.adjacency[bus].len() + 1);
            for &k in &graph.adjacency[bus] {
                let br = &graph.branches[k];
                let y = BranchAdmittance::of(br);
                if br.from == bus {
                    diag += y.yff;
                    entries.push((local[br.to], y.yft));
                } else {
                    diag += y.ytt;
                    entries.push((local[br.from], y.ytf));
                }
            }
            debug_assert!(entries.iter().all(|&(c, _)| c != usize::MAX));
            entries.push((i, diag));
            merge_entries(entries)
        })
        .collect();

    let mut row_ptr = Vec::with_capacity(area.len() + 1);
    row_ptr.push(0);
    let nnz = rows.iter().map(Vec::len).sum();
    let mut cols = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    for row in rows {
        for (c, v) in row {
            cols.push(c);
            values.push(v);
        }
        row_ptr.push(cols.len());
    }
    AdmittanceMatrix {
        buses: area.to_vec(),
        row_ptr,
        cols,
        values,
    }
}
