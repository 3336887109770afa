#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::HashMap;

use num_complex::Complex64;

use hybridflow_core::case::{
    parse_case, parse_dcline_table, synthesize_multi_area, CaseData, BUS_ISOLATED,
};
use hybridflow_core::grid::{BusKind, LccLink};
use hybridflow_core::solution::SolutionRecord;

pub const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

pub fn read(name: &str) -> String {
    std::fs::read_to_string(format!("{DATA}/{name}")).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn case(name: &str) -> CaseData {
    parse_case(&read(name)).unwrap()
}

pub fn links(name: &str) -> Vec<LccLink> {
    parse_dcline_table(&read(name)).unwrap()
}

/// `k` ring-coupled copies of ACTIVSg500 with the reference link parameters.
pub fn activsg_ring(k: usize) -> CaseData {
    synthesize_multi_area(
        &case("case_ACTIVSg500.m"),
        k,
        &links("activsg500_link.m")[0],
    )
    .unwrap()
}

/// `k` ring-coupled copies of the IEEE 300-bus case with the reference link.
pub fn ieee300_ring(k: usize) -> CaseData {
    synthesize_multi_area(&case("case300.m"), k, &links("ieee300_link.m")[0]).unwrap()
}

/// Largest power mismatch of a reported solution, rebuilt from the raw case
/// records: per-branch π-model flows, bus shunts, generator and load
/// schedules, and the reported converter powers as extra loads. P is checked
/// at every non-slack bus and Q at every PQ bus, in per unit.
pub fn branch_flow_mismatch(case: &CaseData, sol: &SolutionRecord) -> f64 {
    let base = case.base_mva;
    let pos: HashMap<u32, usize> = sol
        .buses
        .iter()
        .enumerate()
        .map(|(k, b)| (b.id, k))
        .collect();
    let v: Vec<Complex64> = sol
        .buses
        .iter()
        .map(|b| Complex64::from_polar(b.v_mag, b.v_ang_deg.to_radians()))
        .collect();
    let mut s_calc = vec![Complex64::new(0.0, 0.0); v.len()];
    let mut s_sched = vec![Complex64::new(0.0, 0.0); v.len()];

    for b in case.bus_records.iter().filter(|b| b.kind != BUS_ISOLATED) {
        let k = pos[&b.id];
        let y_sh = Complex64::new(b.gs, b.bs) / base;
        s_calc[k] += v[k] * (y_sh * v[k]).conj();
        s_sched[k] -= Complex64::new(b.pd, b.qd) / base;
    }
    for g in case.gen_records.iter().filter(|g| g.status > 0.0) {
        if let Some(&k) = pos.get(&g.bus) {
            s_sched[k] += Complex64::new(g.pg, g.qg) / base;
        }
    }
    for br in case.branch_records.iter().filter(|b| b.status > 0.0) {
        let (Some(&f), Some(&t)) = (pos.get(&br.from), pos.get(&br.to)) else {
            continue;
        };
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let ratio = if br.ratio == 0.0 { 1.0 } else { br.ratio };
        let tap = Complex64::from_polar(ratio, br.angle.to_radians());
        let half_b = Complex64::new(0.0, br.b / 2.0);
        let i_f = (ys + half_b) / (ratio * ratio) * v[f] - ys / tap.conj() * v[t];
        let i_t = -ys / tap * v[f] + (ys + half_b) * v[t];
        s_calc[f] += v[f] * i_f.conj();
        s_calc[t] += v[t] * i_t.conj();
    }
    for l in &sol.links {
        s_sched[pos[&l.r_bus]] -= Complex64::new(l.p_r, l.q_r) / base;
        s_sched[pos[&l.i_bus]] -= Complex64::new(-l.p_i, l.q_i) / base;
    }

    let mut worst: f64 = 0.0;
    for (k, b) in sol.buses.iter().enumerate() {
        let d = s_sched[k] - s_calc[k];
        if b.kind != BusKind::Slack {
            worst = worst.max(d.re.abs());
        }
        if b.kind == BusKind::PQ {
            worst = worst.max(d.im.abs());
        }
    }
    worst
}

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))
            .unwrap();
        m.swap(c, p);
        x.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            if f != 0.0 {
                for k in c..n {
                    m[r][k] -= f * m[c][k];
                }
                x[r] -= f * x[c];
            }
        }
    }
    for c in (0..n).rev() {
        let mut acc = x[c];
        for k in c + 1..n {
            acc -= m[c][k] * x[k];
        }
        x[c] = acc / m[c][c];
    }
    x
}
