//! Sequential AC/DC outer loop over partitioned areas.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::case::CaseData;
use crate::error::{Error, Result};
use crate::fdpf::{
    fdpf_solve, AreaModel, AreaProblem, AreaState, FactorCache, FdpfOptions, FdpfOutcome,
    FdpfStatus,
};
use crate::grid::{build_graph, BusIndex, BusKind, GridGraph, LccLink};
use crate::lcc::{converter_injections, solve_dc_link, AcTerminal, ConverterSolution, DcInjection};
use crate::partition::{partition_by_dc, PartitionResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Per-unit AC mismatch tolerance.
    pub ac_tol: f64,
    /// Largest change of V_DC (kV), I_DC (kA), α or γ (degrees) between
    /// outer iterations.
    pub dc_tol: f64,
    pub max_outer: usize,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    /// Solve each AC area separately. When off, all areas are solved as one
    /// system with one slack per island.
    pub partition_enabled: bool,
    pub fdpf: FdpfOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            ac_tol: 1e-8,
            dc_tol: 1e-6,
            max_outer: 20,
            threads: 0,
            partition_enabled: true,
            fdpf: FdpfOptions::default(),
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        if !(self.ac_tol > 0.0 && self.dc_tol > 0.0) {
            return Err(Error::Argument("tolerances must be positive".into()));
        }
        if self.max_outer < 1 || self.fdpf.max_iter < 1 {
            return Err(Error::Argument("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// An area's FDPF did not converge, or the outer loop hit its cap
    /// (`area` is then `None`).
    Diverged {
        area: Option<usize>,
        #[serde(with = "crate::solution::any_f64")]
        mismatch: f64,
    },
    Infeasible {
        link: usize,
        quantity: String,
    },
}

impl SolveStatus {
    pub fn is_converged(&self) -> bool {
        matches!(self, SolveStatus::Converged)
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::Diverged { .. } => "diverged",
            SolveStatus::Infeasible { .. } => "infeasible",
        }
    }
}

/// Wall-clock stage times in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub graph_partition: f64,
    pub dc_initialize: f64,
    pub ac_initialize: f64,
    /// Every factorization and triangular solve.
    pub lu_factorize: f64,
    pub acdc_coupling: f64,
    pub ac_rebuild: f64,
    /// B′ and B″ assembly of the first iteration (part of AC Initialize).
    pub first_matrix_build: f64,
    /// First factorization of B′ and B″ (part of LU Factorize).
    pub first_factorize: f64,
    pub total: f64,
}

impl StageTimings {
    pub const STAGE_NAMES: [&'static str; 6] = [
        "Graph Partition",
        "DC Initialize",
        "AC Initialize",
        "LU Factorize",
        "AC/DC Coupling",
        "AC Rebuild",
    ];

    pub fn stages(&self) -> [(&'static str, f64); 6] {
        let v = [
            self.graph_partition,
            self.dc_initialize,
            self.ac_initialize,
            self.lu_factorize,
            self.acdc_coupling,
            self.ac_rebuild,
        ];
        let mut out = [("", 0.0); 6];
        for (k, name) in Self::STAGE_NAMES.iter().enumerate() {
            out[k] = (name, v[k]);
        }
        out
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub area_count: usize,
    pub area_sizes: Vec<usize>,
    pub separating_links: Vec<usize>,
    pub embedded_links: Vec<usize>,
    /// Bus ids of the area slacks.
    pub slack_buses: Vec<u32>,
    pub imbalance: f64,
    pub cut_edge_count: usize,
}

impl PartitionSummary {
    fn new(graph: &GridGraph, p: &PartitionResult) -> Self {
        PartitionSummary {
            area_count: p.area_count,
            area_sizes: p.area_sizes(),
            separating_links: p.separating_links.clone(),
            embedded_links: p.embedded_links.clone(),
            slack_buses: p.area_slacks.iter().map(|&b| graph.buses[b].id).collect(),
            imbalance: p.imbalance,
            cut_edge_count: p.cut_edge_count,
        }
    }
}

/// Per outer iteration: largest final area mismatch and largest converter
/// quantity change (none on the first iteration).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    #[serde(with = "crate::solution::any_f64")]
    pub ac_mismatch: f64,
    pub dc_change: Option<f64>,
    pub inner_iterations: usize,
}

/// Solved link with its terminals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub r_bus: u32,
    pub i_bus: u32,
    pub solution: ConverterSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridSolution {
    pub case_name: String,
    pub base_mva: f64,
    pub status: SolveStatus,
    /// Bus ids in internal order.
    pub bus_ids: Vec<u32>,
    pub v_mag: Vec<f64>,
    /// Radians.
    pub v_ang: Vec<f64>,
    /// AC area of each bus (islands with all links cut).
    pub bus_area: Vec<usize>,
    /// Bus kinds as solved (area slacks re-typed).
    pub bus_kind: Vec<BusKind>,
    pub links: Vec<LinkResult>,
    pub outer_iterations: usize,
    /// Inner FDPF iterations per solved system, summed over outer iterations.
    pub inner_iterations: Vec<usize>,
    pub history: Vec<OuterRecord>,
    /// Largest final AC mismatch over all solved systems.
    #[serde(with = "crate::solution::any_f64")]
    pub mismatch: f64,
    pub timings: StageTimings,
    pub partition: PartitionSummary,
}

impl HybridSolution {
    pub fn bus_position(&self, id: u32) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == id)
    }

    /// DC injections implied by the reported converter solutions, keyed by
    /// position in `bus_ids`.
    pub fn dc_injections(&self) -> Vec<DcInjection> {
        self.links
            .iter()
            .flat_map(|l| {
                let r = self.bus_position(l.r_bus).expect("rectifier bus");
                let i = self.bus_position(l.i_bus).expect("inverter bus");
                converter_injections(&l.solution, (r, i), self.base_mva)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    Converged,
    NotConverged,
}

/// Largest change of any converter quantity between two sets of solutions.
pub fn dc_change(prev: &[ConverterSolution], cur: &[ConverterSolution]) -> f64 {
    prev.iter()
        .zip(cur)
        .flat_map(|(a, b)| {
            [
                (a.v_dc_r - b.v_dc_r).abs(),
                (a.v_dc_i - b.v_dc_i).abs(),
                (a.i_dc - b.i_dc).abs(),
                (a.alpha - b.alpha).abs(),
                (a.gamma - b.gamma).abs(),
            ]
        })
        .fold(0.0, f64::max)
}

/// Joint AC and DC convergence test. Without links only the AC mismatches
/// matter; with links the first iteration (`prev` is `None`) never
/// converges.
pub fn check_convergence(
    prev: Option<&[ConverterSolution]>,
    cur: &[ConverterSolution],
    area_mismatches: &[f64],
    opts: &SolveOptions,
) -> Convergence {
    let ac_ok = area_mismatches.iter().all(|&m| m < opts.ac_tol);
    let dc_ok = cur.is_empty()
        || prev.is_some_and(|p| p.len() == cur.len() && dc_change(p, cur) < opts.dc_tol);
    if ac_ok && dc_ok {
        Convergence::Converged
    } else {
        Convergence::NotConverged
    }
}

/// Solve a case with the partitioned sequential method on a pool of
/// `opts.threads` workers.
pub fn sequential_solve(case: &CaseData, opts: &SolveOptions) -> Result<HybridSolution> {
    opts.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| Solver::run(case, opts))
}

/// Buses and slacks of one independently solved system.
struct System {
    buses: Vec<BusIndex>,
    slacks: Vec<BusIndex>,
}

struct Solver<'a> {
    graph: GridGraph,
    opts: &'a SolveOptions,
    timings: StageTimings,
}

impl<'a> Solver<'a> {
    fn run(case: &CaseData, opts: &'a SolveOptions) -> Result<HybridSolution> {
        let started = Instant::now();
        let t = Instant::now();
        let graph = build_graph(case)?;
        let partition = partition_by_dc(&graph)?;
        let systems: Vec<System> = if opts.partition_enabled {
            partition
                .areas
                .iter()
                .zip(&partition.area_slacks)
                .map(|(b, &s)| System {
                    buses: b.clone(),
                    slacks: vec![s],
                })
                .collect()
        } else {
            vec![System {
                buses: (0..graph.bus_count()).collect(),
                slacks: partition.area_slacks.clone(),
            }]
        };
        let mut solver = Solver {
            graph,
            opts,
            timings: StageTimings::default(),
        };
        solver.timings.graph_partition = ms(t.elapsed());
        let mut sol = solver.solve(&partition, &systems)?;
        sol.timings.total = ms(started.elapsed());
        Ok(sol)
    }

    fn solve(&mut self, partition: &PartitionResult, systems: &[System]) -> Result<HybridSolution> {
        let graph = &self.graph;
        let opts = self.opts;
        let fdpf_opts = FdpfOptions {
            tol: opts.ac_tol,
            ..opts.fdpf
        };
        let mut links: Vec<LccLink> = graph.links.clone();
        let mut status = None;

        // DC Initialize: links at setpoint (or nominal) terminal voltages.
        let t = Instant::now();
        let nominal = |b: BusIndex| {
            let bus = &graph.buses[b];
            AcTerminal {
                v_pu: if bus.kind == BusKind::PQ {
                    1.0
                } else {
                    bus.v_mag
                },
                base_kv: bus.base_kv,
            }
        };
        let mut current = match solve_links(graph, &links, nominal) {
            Ok(s) => s,
            Err(e) => {
                status = Some(infeasible_status(e)?);
                Vec::new()
            }
        };
        self.timings.dc_initialize = ms(t.elapsed());

        // AC Initialize: per-system models, flat start, B′/B″.
        let t = Instant::now();
        let models: Vec<AreaModel> = systems
            .par_iter()
            .map(|s| AreaModel::new(graph, &s.buses, &s.slacks))
            .collect::<Result<_>>()?;
        let tm = Instant::now();
        let problems: Vec<AreaProblem> = models
            .into_par_iter()
            .map(|model| AreaProblem::from_model(graph, model))
            .collect();
        self.timings.first_matrix_build = ms(tm.elapsed());
        let mut states: Vec<AreaState> = problems.iter().map(|p| p.model.flat_start()).collect();
        self.timings.ac_initialize = ms(t.elapsed());

        let t = Instant::now();
        let caches: Vec<FactorCache> = problems
            .par_iter()
            .map(AreaProblem::factorize)
            .collect::<Result<_>>()?;
        self.timings.first_factorize = ms(t.elapsed());
        self.timings.lu_factorize = self.timings.first_factorize;

        // Which system owns each dense bus.
        let mut owner = vec![usize::MAX; graph.bus_count()];
        for (k, s) in systems.iter().enumerate() {
            for &b in &s.buses {
                owner[b] = k;
            }
        }

        let mut prev: Option<Vec<ConverterSolution>> = None;
        let mut history = Vec::new();
        let mut inner = vec![0usize; systems.len()];
        let mut mismatches = vec![f64::NAN; systems.len()];
        let mut outer = 0;

        while status.is_none() && outer < opts.max_outer {
            outer += 1;

            // AC Rebuild: route converter injections to their systems.
            let t = Instant::now();
            let mut injections: Vec<Vec<DcInjection>> = vec![Vec::new(); systems.len()];
            for (k, sol) in current.iter().enumerate() {
                let terminals = graph.link_terminals[k];
                for inj in converter_injections(sol, terminals, graph.base_mva) {
                    injections[owner[inj.bus]].push(inj);
                }
            }
            self.timings.ac_rebuild += ms(t.elapsed());

            // Per-system FDPF, apportioned between LU and AC Rebuild by the
            // work each solve measured internally.
            let t = Instant::now();
            let outcomes: Vec<FdpfOutcome> = problems
                .par_iter()
                .zip(&states)
                .zip(&caches)
                .zip(&injections)
                .map(|(((p, s), c), inj)| fdpf_solve(p, s, inj, &fdpf_opts, Some(c)))
                .collect::<Result<_>>()?;
            let wall = ms(t.elapsed());
            let (lu, rebuild) = outcomes.iter().fold((0.0, 0.0), |(a, b), o| {
                (a + ms(o.timing.lu), b + ms(o.timing.rebuild))
            });
            let share = if lu + rebuild > 0.0 {
                lu / (lu + rebuild)
            } else {
                0.5
            };
            self.timings.lu_factorize += wall * share;
            self.timings.ac_rebuild += wall * (1.0 - share);

            let mut iters = 0;
            for (k, o) in outcomes.into_iter().enumerate() {
                inner[k] += o.iterations;
                iters += o.iterations;
                mismatches[k] = o.mismatch;
                if o.status == FdpfStatus::Diverged && status.is_none() {
                    status = Some(SolveStatus::Diverged {
                        area: Some(k),
                        mismatch: o.mismatch,
                    });
                }
                states[k] = o.state;
            }
            if status.is_some() {
                history.push(OuterRecord {
                    ac_mismatch: max_of(&mismatches),
                    dc_change: None,
                    inner_iterations: iters,
                });
                break;
            }

            // AC/DC Coupling: re-solve links at the new terminal voltages.
            let t = Instant::now();
            let voltage = |b: BusIndex| {
                let k = owner[b];
                let local = problems[k].model.local(b).expect("owned bus");
                AcTerminal {
                    v_pu: states[k].v_mag[local],
                    base_kv: graph.buses[b].base_kv,
                }
            };
            let next = match solve_links(graph, &links, voltage) {
                Ok(s) => s,
                Err(e) => {
                    status = Some(infeasible_status(e)?);
                    self.timings.acdc_coupling += ms(t.elapsed());
                    break;
                }
            };
            self.timings.acdc_coupling += ms(t.elapsed());

            let t = Instant::now();
            let change = prev.as_deref().map(|p| dc_change(p, &next));
            history.push(OuterRecord {
                ac_mismatch: max_of(&mismatches),
                dc_change: change,
                inner_iterations: iters,
            });
            let conv = check_convergence(prev.as_deref(), &next, &mismatches, opts);
            for (link, sol) in links.iter_mut().zip(&next) {
                link.tap_r = sol.tap_r;
                link.tap_i = sol.tap_i;
            }
            current = next.clone();
            prev = Some(next);
            self.timings.ac_rebuild += ms(t.elapsed());

            if conv == Convergence::Converged {
                status = Some(SolveStatus::Converged);
            }
        }

        let mut status = status.unwrap_or(SolveStatus::Diverged {
            area: None,
            mismatch: max_of(&mismatches),
        });
        if status.is_converged() {
            if let Some(k) = current
                .iter()
                .zip(&graph.links)
                .position(|(s, l)| !s.angles_in_range(l))
            {
                let s = &current[k];
                let quantity = if s.alpha < graph.links[k].alpha_range[0]
                    || s.alpha > graph.links[k].alpha_range[1]
                {
                    "alpha"
                } else {
                    "gamma"
                };
                status = SolveStatus::Infeasible {
                    link: k,
                    quantity: quantity.into(),
                };
            }
        }

        let n = graph.bus_count();
        let mut v_mag = vec![0.0; n];
        let mut v_ang = vec![0.0; n];
        let mut bus_kind = vec![BusKind::PQ; n];
        for (p, s) in problems.iter().zip(&states) {
            for (local, &b) in p.model.buses.iter().enumerate() {
                v_mag[b] = s.v_mag[local];
                v_ang[b] = s.v_ang[local];
                bus_kind[b] = p.model.kinds[local];
            }
        }

        Ok(HybridSolution {
            case_name: graph.name.clone(),
            base_mva: graph.base_mva,
            status,
            bus_ids: graph.buses.iter().map(|b| b.id).collect(),
            v_mag,
            v_ang,
            bus_area: partition.labels.clone(),
            bus_kind,
            links: current
                .into_iter()
                .zip(&graph.links)
                .map(|(solution, l)| LinkResult {
                    r_bus: l.r_bus,
                    i_bus: l.i_bus,
                    solution,
                })
                .collect(),
            outer_iterations: outer,
            inner_iterations: inner,
            history,
            mismatch: max_of(&mismatches),
            timings: self.timings,
            partition: PartitionSummary::new(graph, partition),
        })
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn solve_links(
    graph: &GridGraph,
    links: &[LccLink],
    terminal: impl Fn(BusIndex) -> AcTerminal + Sync,
) -> Result<Vec<ConverterSolution>> {
    links
        .par_iter()
        .enumerate()
        .map(|(k, link)| {
            let (r, i) = graph.link_terminals[k];
            solve_dc_link(k, link, terminal(r), terminal(i))
        })
        .collect()
}

fn infeasible_status(e: Error) -> Result<SolveStatus> {
    match e {
        Error::InfeasibleLink { link, quantity, .. } => Ok(SolveStatus::Infeasible {
            link,
            quantity: quantity.into(),
        }),
        other => Err(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_case;
    use crate::grid::tests::TWO_BUS;

    fn sol(alpha: f64) -> ConverterSolution {
        ConverterSolution {
            v_dc_r: 461.0,
            v_dc_i: 460.0,
            i_dc: 0.2,
            alpha,
            gamma: 18.0,
            phi_r: 20.0,
            phi_i: 22.0,
            tap_r: 1.0,
            tap_i: 1.0,
            p_r: 100.0,
            q_r: 30.0,
            p_i: 99.0,
            q_i: 35.0,
            limit_flags: vec![],
        }
    }

    #[test]
    fn convergence_rules() {
        let o = SolveOptions::default();
        let a = [sol(16.0)];
        assert_eq!(
            check_convergence(Some(&a), &a, &[0.0], &o),
            Convergence::Converged
        );
        let b = [sol(16.0 + 2.0 * o.dc_tol)];
        assert_eq!(
            check_convergence(Some(&a), &b, &[0.0], &o),
            Convergence::NotConverged
        );
        assert_eq!(
            check_convergence(None, &a, &[0.0], &o),
            Convergence::NotConverged
        );
        assert_eq!(
            check_convergence(None, &[], &[0.0], &o),
            Convergence::Converged
        );
        assert_eq!(
            check_convergence(Some(&a), &a, &[1.0], &o),
            Convergence::NotConverged
        );
    }

    #[test]
    fn pure_ac_case_takes_one_outer_iteration() {
        let case = parse_case(TWO_BUS).unwrap();
        let s = sequential_solve(
            &case,
            &SolveOptions {
                threads: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.status, SolveStatus::Converged);
        assert_eq!(s.outer_iterations, 1);
        assert!(s.mismatch < 1e-8);
        assert_eq!(s.v_mag[0], 1.0);
        assert_eq!(s.v_ang[0], 0.0);
    }

    #[test]
    fn bad_options_rejected() {
        let case = parse_case(TWO_BUS).unwrap();
        let o = SolveOptions {
            max_outer: 0,
            ..Default::default()
        };
        assert!(matches!(
            sequential_solve(&case, &o),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn stage_names_in_report_order() {
        let t = StageTimings::default();
        let names: Vec<_> = t.stages().iter().map(|s| s.0).collect();
        assert_eq!(
            names,
            [
                "Graph Partition",
                "DC Initialize",
                "AC Initialize",
                "LU Factorize",
                "AC/DC Coupling",
                "AC Rebuild"
            ]
        );
    }
}
