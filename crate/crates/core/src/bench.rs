//! Thread sweeps with timing reports and a determinism check against a
//! single-thread reference run.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::case::CaseData;
use crate::coordinator::{sequential_solve, HybridSolution, SolveOptions, StageTimings};
use crate::error::{Error, Result};
use crate::solution::StageRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub threads: usize,
    pub best_ms: f64,
    pub mean_ms: f64,
    /// Stage timings of the fastest run.
    pub first_matrix_build_ms: f64,
    pub first_factorize_ms: f64,
    pub stage_timings: Vec<StageRow>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub case: String,
    pub machine: String,
    pub repeat: usize,
    pub bus_count: usize,
    pub area_count: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, threads: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.threads == threads)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("bench report: {e}")))
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "case: {} ({} buses, {} areas)",
            self.case, self.bus_count, self.area_count
        );
        let _ = writeln!(out, "machine: {}", self.machine);
        let _ = writeln!(out, "repeat: {}", self.repeat);
        out.push_str(
            "\nThreads   Best (ms)   Mean (ms)   B',B'' build   First LU   Outer   Inner\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>7} {:>11.3} {:>11.3} {:>14.3} {:>10.3} {:>7} {:>7}",
                r.threads,
                r.best_ms,
                r.mean_ms,
                r.first_matrix_build_ms,
                r.first_factorize_ms,
                r.outer_iterations,
                r.inner_iterations
            );
        }
        out.push_str("\nStage (ms)          ");
        for r in &self.rows {
            let _ = write!(out, "{:>10}", format!("{}T", r.threads));
        }
        out.push('\n');
        for (k, name) in StageTimings::STAGE_NAMES.iter().enumerate() {
            let _ = write!(out, "{name:<20}");
            for r in &self.rows {
                let _ = write!(
                    out,
                    "{:>10.3}",
                    r.stage_timings.get(k).map_or(0.0, |s| s.ms)
                );
            }
            out.push('\n');
        }
        out
    }
}

/// Whether two solutions have bitwise-identical bus and converter states.
pub fn same_state(a: &HybridSolution, b: &HybridSolution) -> bool {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let link_bits = |s: &HybridSolution| {
        s.links
            .iter()
            .flat_map(|l| {
                let c = &l.solution;
                [
                    c.v_dc_r, c.v_dc_i, c.i_dc, c.alpha, c.gamma, c.tap_r, c.tap_i, c.p_r, c.q_r,
                    c.p_i, c.q_i,
                ]
            })
            .map(f64::to_bits)
            .collect::<Vec<_>>()
    };
    a.status == b.status
        && a.bus_ids == b.bus_ids
        && a.outer_iterations == b.outer_iterations
        && bits(&a.v_mag) == bits(&b.v_mag)
        && bits(&a.v_ang) == bits(&b.v_ang)
        && link_bits(a) == link_bits(b)
}

/// Short description of the host.
pub fn machine_descriptor() -> String {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    format!(
        "{model}; {cores} logical cores; {}-{}",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// Solve `case` `repeat` times for each thread count. Every run must match
/// the single-thread reference bitwise, otherwise the sweep fails.
pub fn run_bench(
    case: &CaseData,
    threads: &[usize],
    repeat: usize,
    opts: &SolveOptions,
) -> Result<BenchReport> {
    if repeat == 0 || threads.is_empty() || threads.contains(&0) {
        return Err(Error::Argument(
            "bench needs at least one repeat and positive thread counts".into(),
        ));
    }
    let reference = sequential_solve(
        case,
        &SolveOptions {
            threads: 1,
            ..*opts
        },
    )?;

    let mut rows = Vec::with_capacity(threads.len());
    for &t in threads {
        let run_opts = SolveOptions {
            threads: t,
            ..*opts
        };
        let mut best: Option<HybridSolution> = None;
        let mut sum = 0.0;
        for run in 0..repeat {
            let sol = sequential_solve(case, &run_opts)?;
            if !same_state(&sol, &reference) {
                return Err(Error::Internal(format!(
                    "run {run} with {t} threads differs from the single-thread solution"
                )));
            }
            sum += sol.timings.total;
            if best
                .as_ref()
                .is_none_or(|b| sol.timings.total < b.timings.total)
            {
                best = Some(sol);
            }
        }
        let best = best.expect("at least one run");
        let tm = &best.timings;
        rows.push(BenchRow {
            threads: t,
            best_ms: tm.total,
            mean_ms: sum / repeat as f64,
            first_matrix_build_ms: tm.first_matrix_build,
            first_factorize_ms: tm.first_factorize,
            stage_timings: tm
                .stages()
                .iter()
                .map(|&(stage, ms)| StageRow {
                    stage: stage.to_string(),
                    ms,
                })
                .collect(),
            outer_iterations: best.outer_iterations,
            inner_iterations: best.inner_iterations.iter().sum(),
        });
    }

    Ok(BenchReport {
        case: reference.case_name.clone(),
        machine: machine_descriptor(),
        repeat,
        bus_count: reference.bus_ids.len(),
        area_count: reference.partition.area_count,
        rows,
    })
}
