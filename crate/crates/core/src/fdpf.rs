//! Fast-decoupled power flow (XB scheme) for one AC area.

use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    build_admittance, AdmittanceMatrix, BranchAdmittance, BusIndex, BusKind, GridGraph, ROW_CHUNK,
};
use crate::lcc::DcInjection;
use crate::sparse::{numeric_factorize, order, symbolic_factorize, LuFactors, SparseMatrix};

/// Mismatch above which an iteration is considered to have blown up.
const BLOWUP: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdpfOptions {
    /// Per-unit mismatch tolerance on unscaled ΔP, ΔQ.
    pub tol: f64,
    pub max_iter: usize,
    /// Factorize B′ and B″ once per area and reuse the factors.
    pub reuse_factors: bool,
}

impl Default for FdpfOptions {
    fn default() -> Self {
        FdpfOptions {
            tol: 1e-8,
            max_iter: 100,
            reuse_factors: true,
        }
    }
}

/// Per-area bus data with area-local kinds.
#[derive(Debug, Clone)]
pub struct AreaModel {
    /// Dense bus indices, ascending; position is the local index.
    pub buses: Vec<BusIndex>,
    pub kinds: Vec<BusKind>,
    pub base_kv: Vec<f64>,
    pub p_sched: Vec<f64>,
    pub q_sched: Vec<f64>,
    /// Flat-start magnitudes: setpoints at PV and slack buses, 1.0 elsewhere.
    pub v_start: Vec<f64>,
    /// Flat-start angles: case angle at slack buses, 0 elsewhere.
    pub ang_start: Vec<f64>,
    /// Local indices of angle unknowns (non-slack buses).
    pub pvpq: Vec<usize>,
    /// Local indices of magnitude unknowns (PQ buses).
    pub pq: Vec<usize>,
    pub ybus: AdmittanceMatrix,
}

impl AreaModel {
    /// `buses` must be closed under AC branches; `slacks` lists the dense
    /// indices that act as slack inside this model.
    pub fn new(graph: &GridGraph, buses: &[BusIndex], slacks: &[BusIndex]) -> Result<Self> {
        let mut buses = buses.to_vec();
        buses.sort_unstable();
        if slacks.is_empty() {
            return Err(Error::Argument("an area needs at least one slack".into()));
        }
        let kinds: Vec<BusKind> = buses
            .iter()
            .map(|b| {
                let bus = &graph.buses[*b];
                if slacks.contains(b) {
                    BusKind::Slack
                } else {
                    match bus.kind {
                        BusKind::Slack if bus.has_generator() => BusKind::PV,
                        BusKind::Slack => BusKind::PQ,
                        k => k,
                    }
                }
            })
            .collect();
        for s in slacks {
            if buses.binary_search(s).is_err() {
                return Err(Error::Argument(format!(
                    "slack bus {} is not in the area",
                    graph.buses[*s].id
                )));
            }
        }
        let v_start = buses
            .iter()
            .zip(&kinds)
            .map(|(&b, k)| match k {
                BusKind::PQ => 1.0,
                _ => graph.buses[b].v_mag,
            })
            .collect();
        let ang_start = buses
            .iter()
            .zip(&kinds)
            .map(|(&b, k)| match k {
                BusKind::Slack => graph.buses[b].v_ang,
                _ => 0.0,
            })
            .collect();
        let pvpq = (0..buses.len())
            .filter(|&i| kinds[i] != BusKind::Slack)
            .collect();
        let pq = (0..buses.len())
            .filter(|&i| kinds[i] == BusKind::PQ)
            .collect();
        let ybus = build_admittance(graph, &buses);
        Ok(AreaModel {
            base_kv: buses.iter().map(|&b| graph.buses[b].base_kv).collect(),
            p_sched: buses.iter().map(|&b| graph.buses[b].p_inj).collect(),
            q_sched: buses.iter().map(|&b| graph.buses[b].q_inj).collect(),
            buses,
            kinds,
            v_start,
            ang_start,
            pvpq,
            pq,
            ybus,
        })
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    pub fn local(&self, bus: BusIndex) -> Option<usize> {
        self.buses.binary_search(&bus).ok()
    }

    pub fn flat_start(&self) -> AreaState {
        AreaState {
            v_mag: self.v_start.clone(),
            v_ang: self.ang_start.clone(),
        }
    }
}

/// Voltage state of one area in local bus order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaState {
    pub v_mag: Vec<f64>,
    /// Radians.
    pub v_ang: Vec<f64>,
}

/// `positions[local]` is the row of `local` in `rows`, or `usize::MAX`.
fn positions(n: usize, rows: &[usize]) -> Vec<usize> {
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in rows.iter().enumerate() {
        pos[i] = k;
    }
    pos
}

/// Assemble a symmetric matrix over `rows` (local indices), one parallel
/// task per row. `entry` returns the (diagonal, off-diagonal) contribution
/// of a branch seen from one of its ends; `shunt` the diagonal term of a
/// bus.
fn assemble<E, S>(
    graph: &GridGraph,
    model: &AreaModel,
    rows: &[usize],
    entry: E,
    shunt: S,
) -> SparseMatrix
where
    E: Fn(&crate::grid::Branch, bool) -> (f64, f64) + Sync,
    S: Fn(BusIndex) -> f64 + Sync,
{
    let pos = positions(model.len(), rows);
    let cols: Vec<Vec<(usize, f64)>> = rows
        .par_iter()
        .with_min_len(ROW_CHUNK)
        .enumerate()
        .map(|(k, &i)| {
            let bus = model.buses[i];
            let mut diag = shunt(bus);
            let mut out = Vec::with_capacity(graph.adjacency[bus].len() + 1);
            for &e in &graph.adjacency[bus] {
                let br = &graph.branches[e];
                let from_side = br.from == bus;
                let (d, off) = entry(br, from_side);
                diag += d;
                let other = model
                    .local(graph.neighbor(e, bus))
                    .expect("area closed under branches");
                if pos[other] != usize::MAX {
                    out.push((pos[other], off));
                }
            }
            out.push((k, diag));
            out
        })
        .collect();
    SparseMatrix::from_columns(rows.len(), cols)
}

/// B′ over the non-slack buses: `1/x` per branch, no resistance, shunts,
/// charging, taps or shifts.
pub fn build_bprime(graph: &GridGraph, model: &AreaModel) -> SparseMatrix {
    assemble(
        graph,
        model,
        &model.pvpq,
        |br, _| (1.0 / br.x, -1.0 / br.x),
        |_| 0.0,
    )
}

/// B″ over the PQ buses: `−Im(Y)` with phase shifts removed.
pub fn build_bdoubleprime(graph: &GridGraph, model: &AreaModel) -> SparseMatrix {
    assemble(
        graph,
        model,
        &model.pq,
        |br, from_side| {
            let mut unshifted = br.clone();
            unshifted.shift = 0.0;
            let y = BranchAdmittance::of(&unshifted);
            if from_side {
                (-y.yff.im, -y.yft.im)
            } else {
                (-y.ytt.im, -y.ytf.im)
            }
        },
        |bus| -graph.buses[bus].shunt_b,
    )
}

/// Factors of B′ and B″ (None when the area has no PQ bus).
#[derive(Debug, Clone)]
pub struct FactorCache {
    pub bprime: LuFactors,
    pub bdouble: Option<LuFactors>,
}

fn factorize(a: &SparseMatrix) -> Result<LuFactors> {
    let plan = Arc::new(symbolic_factorize(a, &order(a))?);
    numeric_factorize(&plan, a)
}

/// An area model with its B′ and B″.
#[derive(Debug, Clone)]
pub struct AreaProblem {
    pub model: AreaModel,
    pub bprime: SparseMatrix,
    pub bdouble: SparseMatrix,
}

impl AreaProblem {
    pub fn new(graph: &GridGraph, buses: &[BusIndex], slacks: &[BusIndex]) -> Result<Self> {
        Ok(Self::from_model(
            graph,
            AreaModel::new(graph, buses, slacks)?,
        ))
    }

    pub fn from_model(graph: &GridGraph, model: AreaModel) -> Self {
        AreaProblem {
            bprime: build_bprime(graph, &model),
            bdouble: build_bdoubleprime(graph, &model),
            model,
        }
    }

    pub fn factorize(&self) -> Result<FactorCache> {
        Ok(FactorCache {
            bprime: factorize(&self.bprime)?,
            bdouble: if self.model.pq.is_empty() {
                None
            } else {
                Some(factorize(&self.bdouble)?)
            },
        })
    }
}

/// Unscaled bus mismatches of every bus in local order. ΔP rows at slacks
/// and ΔQ rows at slack/PV buses are included but not driven to zero.
pub fn bus_mismatch(
    model: &AreaModel,
    state: &AreaState,
    dc: &[DcInjection],
) -> (Vec<f64>, Vec<f64>) {
    let n = model.len();
    let mut p_dc = vec![0.0; n];
    let mut q_dc = vec![0.0; n];
    for inj in dc {
        let i = model.local(inj.bus);
        debug_assert!(i.is_some(), "injection at bus outside the area");
        if let Some(i) = i {
            p_dc[i] += inj.p_dc;
            q_dc[i] += inj.q_dc;
        }
    }
    let v: Vec<Complex64> = state
        .v_mag
        .iter()
        .zip(&state.v_ang)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect();
    (0..n)
        .into_par_iter()
        .with_min_len(ROW_CHUNK)
        .map(|i| {
            let mut current = Complex64::new(0.0, 0.0);
            for (j, y) in model.ybus.row(i) {
                current += y * v[j];
            }
            let s = v[i] * current.conj();
            (
                model.p_sched[i] - s.re - p_dc[i],
                model.q_sched[i] - s.im - q_dc[i],
            )
        })
        .unzip()
}

/// Fast-decoupled right-hand sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    /// ΔP/V over `pvpq`.
    pub dp: Vec<f64>,
    /// ΔQ/V over `pq`.
    pub dq: Vec<f64>,
    /// ∞-norm of the unscaled ΔP (non-slack) and ΔQ (PQ) entries.
    pub max: f64,
}

pub fn compute_mismatch(model: &AreaModel, state: &AreaState, dc: &[DcInjection]) -> Mismatch {
    let (p, q) = bus_mismatch(model, state, dc);
    let mut max: f64 = 0.0;
    let dp = model
        .pvpq
        .iter()
        .map(|&i| {
            max = max.max(p[i].abs());
            p[i] / state.v_mag[i]
        })
        .collect();
    let dq = model
        .pq
        .iter()
        .map(|&i| {
            max = max.max(q[i].abs());
            q[i] / state.v_mag[i]
        })
        .collect();
    if p.iter().chain(&q).any(|x| x.is_nan()) {
        max = f64::NAN;
    }
    Mismatch { dp, dq, max }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdpfStatus {
    Converged,
    Diverged,
}

/// Time spent inside one solve, split into triangular solves (plus any
/// factorization) and mismatch/state rebuilds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FdpfTiming {
    pub lu: Duration,
    pub rebuild: Duration,
}

#[derive(Debug, Clone)]
pub struct FdpfOutcome {
    pub state: AreaState,
    pub status: FdpfStatus,
    pub iterations: usize,
    /// Largest mismatch at the start and after every half-iteration.
    pub history: Vec<f64>,
    pub mismatch: f64,
    pub timing: FdpfTiming,
}

/// Alternate B′ angle and B″ magnitude half-iterations from `start` until
/// the largest mismatch drops below `opts.tol`. Without a cache (or with
/// `reuse_factors` off) B′ and B″ are factorized inside the call.
pub fn fdpf_solve(
    problem: &AreaProblem,
    start: &AreaState,
    dc: &[DcInjection],
    opts: &FdpfOptions,
    cache: Option<&FactorCache>,
) -> Result<FdpfOutcome> {
    let model = &problem.model;
    let mut timing = FdpfTiming::default();
    let mut state = start.clone();

    let t = Instant::now();
    let owned;
    let factors = match cache {
        Some(c) if opts.reuse_factors => c,
        _ => {
            owned = problem.factorize()?;
            &owned
        }
    };
    timing.lu += t.elapsed();

    let t = Instant::now();
    let mut mis = compute_mismatch(model, &state, dc);
    timing.rebuild += t.elapsed();
    let mut history = vec![mis.max];
    let mut iterations = 0;

    let done = |m: &Mismatch| m.max < opts.tol;
    let blown = |m: &Mismatch| !(m.max <= BLOWUP);
    let mut status = if done(&mis) {
        FdpfStatus::Converged
    } else {
        FdpfStatus::Diverged
    };

    while status != FdpfStatus::Converged && iterations < opts.max_iter && !blown(&mis) {
        iterations += 1;

        let t = Instant::now();
        let dtheta = factors.bprime.solve(&mis.dp);
        timing.lu += t.elapsed();
        let t = Instant::now();
        for (&i, d) in model.pvpq.iter().zip(dtheta) {
            state.v_ang[i] += d;
        }
        mis = compute_mismatch(model, &state, dc);
        timing.rebuild += t.elapsed();
        history.push(mis.max);
        if done(&mis) {
            status = FdpfStatus::Converged;
            break;
        }
        if blown(&mis) {
            break;
        }

        if let Some(bpp) = &factors.bdouble {
            let t = Instant::now();
            let dv = bpp.solve(&mis.dq);
            timing.lu += t.elapsed();
            let t = Instant::now();
            for (&i, d) in model.pq.iter().zip(dv) {
                state.v_mag[i] += d;
            }
            mis = compute_mismatch(model, &state, dc);
            timing.rebuild += t.elapsed();
            history.push(mis.max);
            if done(&mis) {
                status = FdpfStatus::Converged;
            }
        }
    }

    Ok(FdpfOutcome {
        state,
        status,
        iterations,
        mismatch: mis.max,
        history,
        timing,
    })
}
