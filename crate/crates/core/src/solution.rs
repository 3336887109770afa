//! Solution output in a human table or a machine-readable JSON layout, and
//! comparison against expected values.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coordinator::{
    HybridSolution, OuterRecord, PartitionSummary, SolveStatus, StageTimings,
};
use crate::error::{Error, Result};
use crate::grid::BusKind;
use crate::lcc::LimitFlag;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    HumanTable,
    MachineReadable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRow {
    pub id: u32,
    pub area: usize,
    pub kind: BusKind,
    pub v_mag: f64,
    pub v_ang_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRow {
    pub r_bus: u32,
    pub i_bus: u32,
    pub v_dc_r: f64,
    pub v_dc_i: f64,
    pub i_dc: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub tap_r: f64,
    pub tap_i: f64,
    pub p_r: f64,
    pub q_r: f64,
    pub p_i: f64,
    pub q_i: f64,
    pub limit_flags: Vec<LimitFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: String,
    pub ms: f64,
}

/// The machine-readable solution file. Angles are in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub case: String,
    pub base_mva: f64,
    #[serde(flatten)]
    pub status: SolveStatus,
    /// Largest final AC mismatch, per unit.
    #[serde(with = "any_f64")]
    pub max_mismatch: f64,
    pub outer_iterations: usize,
    pub inner_iterations: Vec<usize>,
    pub history: Vec<OuterRecord>,
    pub stage_timings: Vec<StageRow>,
    pub first_matrix_build_ms: f64,
    pub first_factorize_ms: f64,
    pub total_ms: f64,
    pub partition: PartitionSummary,
    pub buses: Vec<BusRow>,
    pub links: Vec<LinkRow>,
}

impl SolutionRecord {
    pub fn from_solution(sol: &HybridSolution) -> Self {
        let t = &sol.timings;
        SolutionRecord {
            case: sol.case_name.clone(),
            base_mva: sol.base_mva,
            status: sol.status.clone(),
            max_mismatch: sol.mismatch,
            outer_iterations: sol.outer_iterations,
            inner_iterations: sol.inner_iterations.clone(),
            history: sol.history.clone(),
            stage_timings: t
                .stages()
                .iter()
                .map(|&(stage, ms)| StageRow {
                    stage: stage.to_string(),
                    ms,
                })
                .collect(),
            first_matrix_build_ms: t.first_matrix_build,
            first_factorize_ms: t.first_factorize,
            total_ms: t.total,
            partition: sol.partition.clone(),
            buses: (0..sol.bus_ids.len())
                .map(|b| BusRow {
                    id: sol.bus_ids[b],
                    area: sol.bus_area[b],
                    kind: sol.bus_kind[b],
                    v_mag: sol.v_mag[b],
                    v_ang_deg: sol.v_ang[b].to_degrees(),
                })
                .collect(),
            links: sol
                .links
                .iter()
                .map(|l| {
                    let s = &l.solution;
                    LinkRow {
                        r_bus: l.r_bus,
                        i_bus: l.i_bus,
                        v_dc_r: s.v_dc_r,
                        v_dc_i: s.v_dc_i,
                        i_dc: s.i_dc,
                        alpha: s.alpha,
                        gamma: s.gamma,
                        tap_r: s.tap_r,
                        tap_i: s.tap_i,
                        p_r: s.p_r,
                        q_r: s.q_r,
                        p_i: s.p_i,
                        q_i: s.q_i,
                        limit_flags: s.limit_flags.clone(),
                    }
                })
                .collect(),
        }
    }

    pub fn bus(&self, id: u32) -> Option<&BusRow> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn timings(&self) -> StageTimings {
        let stage = |k: usize| self.stage_timings.get(k).map_or(0.0, |r| r.ms);
        StageTimings {
            graph_partition: stage(0),
            dc_initialize: stage(1),
            ac_initialize: stage(2),
            lu_factorize: stage(3),
            acdc_coupling: stage(4),
            ac_rebuild: stage(5),
            first_matrix_build: self.first_matrix_build_ms,
            first_factorize: self.first_factorize_ms,
            total: self.total_ms,
        }
    }
}

/// Floats that may be non-finite: JSON numbers when finite, otherwise the
/// strings `"NaN"`, `"inf"` and `"-inf"`.
pub mod any_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

pub fn write_solution(sol: &HybridSolution, format: OutputFormat) -> String {
    let record = SolutionRecord::from_solution(sol);
    match format {
        OutputFormat::MachineReadable => {
            let mut s = serde_json::to_string_pretty(&record).expect("solution serializes");
            s.push('\n');
            s
        }
        OutputFormat::HumanTable => human_table(&record),
    }
}

pub fn read_solution(text: &str) -> Result<SolutionRecord> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("solution file: {e}")))
}

fn kind_name(k: BusKind) -> &'static str {
    match k {
        BusKind::Slack => "slack",
        BusKind::PV => "PV",
        BusKind::PQ => "PQ",
    }
}

fn human_table(r: &SolutionRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "case: {}", r.case);
    match &r.status {
        SolveStatus::Converged => {
            let _ = writeln!(out, "status: converged");
        }
        SolveStatus::Diverged { area, mismatch } => {
            let place = area.map_or_else(|| "outer loop".to_string(), |a| format!("area {a}"));
            let _ = writeln!(out, "status: diverged ({place}, mismatch {mismatch:.3e})");
        }
        SolveStatus::Infeasible { link, quantity } => {
            let _ = writeln!(out, "status: infeasible (link {link}, {quantity})");
        }
    }
    let inner: usize = r.inner_iterations.iter().sum();
    let _ = writeln!(
        out,
        "areas: {}  outer iterations: {}  inner iterations: {}  max mismatch: {:.3e}",
        r.partition.area_count, r.outer_iterations, inner, r.max_mismatch
    );

    out.push_str("\n     Bus  Area  Type      |V| (pu)   Angle (deg)\n");
    for b in &r.buses {
        let _ = writeln!(
            out,
            "{:>8}  {:>4}  {:<5}  {:>11.6}  {:>12.5}",
            b.id,
            b.area,
            kind_name(b.kind),
            b.v_mag,
            b.v_ang_deg
        );
    }

    if !r.links.is_empty() {
        out.push_str(
            "\n   From     To   Vdc_R (kV)  Vdc_I (kV)  Idc (kA)  alpha   gamma    Tap_R   Tap_I     P_R (MW)  Q_R (MVAr)    P_I (MW)  Q_I (MVAr)\n",
        );
        for l in &r.links {
            let _ = write!(
                out,
                "{:>7} {:>6}  {:>11.4} {:>11.4} {:>9.6} {:>7.3} {:>7.3} {:>8.4} {:>7.4} {:>11.4} {:>11.4} {:>11.4} {:>11.4}",
                l.r_bus, l.i_bus, l.v_dc_r, l.v_dc_i, l.i_dc, l.alpha, l.gamma, l.tap_r, l.tap_i,
                l.p_r, l.q_r, l.p_i, l.q_i
            );
            if !l.limit_flags.is_empty() {
                let _ = write!(out, "  limits: {:?}", l.limit_flags);
            }
            out.push('\n');
        }
    }

    out.push_str("\nStage                 Time (ms)\n");
    for s in &r.stage_timings {
        let _ = writeln!(out, "{:<20} {:>10.3}", s.stage, s.ms);
    }
    let _ = writeln!(out, "{:<20} {:>10.3}", "Total", r.total_ms);
    out
}

/// Expected values for a regression check. Every field except the ids is
/// optional, so a full solution file is also a valid expectation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpectedSolution {
    #[serde(default)]
    pub buses: Vec<ExpectedBus>,
    #[serde(default)]
    pub links: Vec<ExpectedLink>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedBus {
    pub id: u32,
    #[serde(default)]
    pub v_mag: Option<f64>,
    #[serde(default)]
    pub v_ang_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedLink {
    pub r_bus: u32,
    pub i_bus: u32,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
}

pub fn read_expected(text: &str) -> Result<ExpectedSolution> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("expected solution file: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Per unit.
    pub vtol: f64,
    /// Degrees, for bus angles and converter angles.
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            vtol: 1e-3,
            atol: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub what: String,
    pub expected: f64,
    pub actual: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        (self.actual - self.expected).abs() <= self.tolerance
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Expected entries with no counterpart in the solution.
    pub missing: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.missing.is_empty() && self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

/// Compare a solution with expected values. Bus angles are taken relative
/// to the slack of the bus's area on both sides; the expected slack angle is
/// read from the expectation when listed and taken as zero otherwise.
pub fn validate(
    sol: &SolutionRecord,
    expect: &ExpectedSolution,
    tol: Tolerances,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let slack_of_area = |area: usize| {
        sol.buses
            .iter()
            .find(|b| b.area == area && b.kind == BusKind::Slack)
    };
    for e in &expect.buses {
        let Some(b) = sol.bus(e.id) else {
            report.missing.push(format!("bus {}", e.id));
            continue;
        };
        if let Some(v) = e.v_mag {
            report.checks.push(Check {
                what: format!("bus {} |V|", e.id),
                expected: v,
                actual: b.v_mag,
                tolerance: tol.vtol,
            });
        }
        if let Some(a) = e.v_ang_deg {
            let Some(slack) = slack_of_area(b.area) else {
                report.missing.push(format!("slack of area {}", b.area));
                continue;
            };
            let expected_ref = expect
                .buses
                .iter()
                .find(|x| x.id == slack.id)
                .and_then(|x| x.v_ang_deg)
                .unwrap_or(0.0);
            report.checks.push(Check {
                what: format!("bus {} angle (relative to bus {})", e.id, slack.id),
                expected: a - expected_ref,
                actual: b.v_ang_deg - slack.v_ang_deg,
                tolerance: tol.atol,
            });
        }
    }
    for e in &expect.links {
        let Some(l) = sol
            .links
            .iter()
            .find(|l| l.r_bus == e.r_bus && l.i_bus == e.i_bus)
        else {
            report.missing.push(format!("link {}-{}", e.r_bus, e.i_bus));
            continue;
        };
        for (name, want, got) in [("alpha", e.alpha, l.alpha), ("gamma", e.gamma, l.gamma)] {
            if let Some(want) = want {
                report.checks.push(Check {
                    what: format!("link {}-{} {name}", e.r_bus, e.i_bus),
                    expected: want,
                    actual: got,
                    tolerance: tol.atol,
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::parse_case;
    use crate::coordinator::{sequential_solve, SolveOptions};
    use crate::grid::tests::TWO_BUS;

    fn two_bus_solution() -> HybridSolution {
        sequential_solve(&parse_case(TWO_BUS).unwrap(), &SolveOptions::default()).unwrap()
    }

    #[test]
    fn machine_output_round_trips_exactly() {
        let sol = two_bus_solution();
        let text = write_solution(&sol, OutputFormat::MachineReadable);
        let back = read_solution(&text).unwrap();
        assert_eq!(back, SolutionRecord::from_solution(&sol));
        assert!(text.contains("\"status\": \"converged\""));
    }

    #[test]
    fn diverged_status_keeps_bus_rows() {
        let mut sol = two_bus_solution();
        sol.status = SolveStatus::Diverged {
            area: Some(0),
            mismatch: 0.25,
        };
        let text = write_solution(&sol, OutputFormat::MachineReadable);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["status"], "diverged");
        assert_eq!(v["mismatch"], 0.25);
        assert_eq!(v["buses"].as_array().unwrap().len(), 2);
        let human = write_solution(&sol, OutputFormat::HumanTable);
        assert!(human.contains("status: diverged"));
    }

    #[test]
    fn non_finite_mismatch_survives_round_trip() {
        let mut sol = two_bus_solution();
        sol.status = SolveStatus::Diverged {
            area: None,
            mismatch: f64::INFINITY,
        };
        let text = write_solution(&sol, OutputFormat::MachineReadable);
        let back = read_solution(&text).unwrap();
        assert_eq!(back.status, sol.status);
    }

    #[test]
    fn timing_section_lists_six_stages() {
        let text = write_solution(&two_bus_solution(), OutputFormat::HumanTable);
        let mut at = 0;
        for stage in StageTimings::STAGE_NAMES {
            let pos = text[at..].find(stage).expect(stage) + at;
            at = pos;
        }
    }

    #[test]
    fn validate_relative_to_slack() {
        let rec = SolutionRecord::from_solution(&two_bus_solution());
        let b2 = rec.bus(2).unwrap().clone();
        let slack = rec.bus(1).unwrap().v_ang_deg;
        let exp = ExpectedSolution {
            buses: vec![ExpectedBus {
                id: 2,
                v_mag: Some(b2.v_mag + 5e-4),
                v_ang_deg: Some(b2.v_ang_deg - slack + 0.04),
            }],
            links: vec![],
        };
        assert!(validate(&rec, &exp, Tolerances::default()).passed());
        let tight = Tolerances {
            vtol: 1e-4,
            atol: 0.05,
        };
        let r = validate(&rec, &exp, tight);
        assert_eq!(r.failures().count(), 1);
    }

    #[test]
    fn missing_bus_fails_validation() {
        let rec = SolutionRecord::from_solution(&two_bus_solution());
        let exp = ExpectedSolution {
            buses: vec![ExpectedBus {
                id: 99,
                v_mag: Some(1.0),
                v_ang_deg: None,
            }],
            links: vec![],
        };
        assert!(!validate(&rec, &exp, Tolerances::default()).passed());
    }
}
