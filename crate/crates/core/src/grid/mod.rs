//! Graph model of the hybrid grid: buses are vertices, AC branches are
//! edges, LCC links are a second edge set joining converter buses.

mod admittance;

pub(crate) use admittance::ROW_CHUNK;
pub use admittance::{build_admittance, AdmittanceMatrix, BranchAdmittance};

use std::collections::HashMap;

use crate::case::{
    BranchRecord, BusRecord, CaseData, GenRecord, BUS_ISOLATED, BUS_PQ, BUS_PV, BUS_REF,
};
use crate::error::{Error, Result};

/// Dense bus index assigned at build time.
pub type BusIndex = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BusKind {
    Slack,
    PV,
    PQ,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    pub base_kv: f64,
    /// Voltage setpoint for PV/slack buses, case value otherwise.
    pub v_mag: f64,
    /// Radians.
    pub v_ang: f64,
    /// Scheduled generation minus load, per unit.
    pub p_inj: f64,
    pub q_inj: f64,
    pub p_load: f64,
    pub q_load: f64,
    pub shunt_g: f64,
    pub shunt_b: f64,
    /// Sum of in-service generator maximum output at this bus, MW.
    pub gen_capacity: f64,
    pub gen_count: usize,
    pub area: Option<usize>,
}

impl Bus {
    pub fn has_generator(&self) -> bool {
        self.gen_count > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: BusIndex,
    /// Per unit.
    pub pg: f64,
    pub qg: f64,
    pub vg: f64,
    /// MW.
    pub pmax: f64,
}

/// AC branch in per unit; `from`/`to` are dense bus indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: BusIndex,
    pub to: BusIndex,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    pub tap: f64,
    /// Radians.
    pub shift: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ControlMode {
    /// Rectifier holds DC power, inverter holds DC voltage.
    PowerVoltage,
    /// Rectifier holds DC current, inverter holds DC voltage.
    CurrentVoltage,
}

/// Two-terminal LCC link in physical units: MW, kV, kA, ohms, degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct LccLink {
    pub r_bus: u32,
    pub i_bus: u32,
    pub bridges_r: u32,
    pub bridges_i: u32,
    pub control: ControlMode,
    pub p_set: f64,
    pub v_set: f64,
    pub i_set: f64,
    pub xc_r: f64,
    pub xc_i: f64,
    pub r_dc: f64,
    /// Converter transformer ratios (valve side over AC side).
    pub tap_r: f64,
    pub tap_i: f64,
    pub tap_step: f64,
    pub tap_min: f64,
    pub tap_max: f64,
    pub alpha_range: [f64; 2],
    pub gamma_range: [f64; 2],
    pub in_service: bool,
}

impl LccLink {
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, [lo, hi]) in [("alpha", self.alpha_range), ("gamma", self.gamma_range)] {
            if !(lo > 0.0 && lo <= hi && hi < 90.0) {
                return Err(format!(
                    "{name} range [{lo}, {hi}] must lie inside (0, 90) degrees"
                ));
            }
        }
        if self.bridges_r < 1 || self.bridges_i < 1 {
            return Err("bridge counts must be at least 1".into());
        }
        if !(self.v_set > 0.0) {
            return Err("v_set must be positive".into());
        }
        if !(self.r_dc >= 0.0) || !(self.xc_r >= 0.0) || !(self.xc_i >= 0.0) {
            return Err("resistance and reactances must be non-negative".into());
        }
        match self.control {
            ControlMode::PowerVoltage if !(self.p_set > 0.0) => {
                return Err("p_set must be positive for P-V control".into())
            }
            ControlMode::CurrentVoltage if !(self.i_set >= 0.0) => {
                return Err("i_set must be non-negative for I-V control".into())
            }
            _ => {}
        }
        if !(self.tap_r > 0.0 && self.tap_i > 0.0) {
            return Err("transformer ratios must be positive".into());
        }
        if !(self.tap_step > 0.0 && self.tap_min > 0.0 && self.tap_min <= self.tap_max) {
            return Err("tap step must be positive and tap bounds ordered".into());
        }
        Ok(())
    }
}

/// The hybrid grid. Immutable after [`build_graph`] apart from area labels.
#[derive(Debug, Clone)]
pub struct GridGraph {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub links: Vec<LccLink>,
    /// Dense (rectifier, inverter) bus indices for each link.
    pub link_terminals: Vec<(BusIndex, BusIndex)>,
    /// Incident branch ids per bus, ascending.
    pub adjacency: Vec<Vec<usize>>,
    index: HashMap<u32, BusIndex>,
}

impl GridGraph {
    pub fn index_of(&self, id: u32) -> Option<BusIndex> {
        self.index.get(&id).copied()
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    /// Record per-bus area labels, e.g. from a partition.
    pub fn assign_areas(&mut self, labels: &[usize]) {
        for (bus, &label) in self.buses.iter_mut().zip(labels) {
            bus.area = Some(label);
        }
    }

    /// Branch endpoint on the other side of `bus`.
    pub fn neighbor(&self, branch: usize, bus: BusIndex) -> BusIndex {
        let br = &self.branches[branch];
        if br.from == bus {
            br.to
        } else {
            br.from
        }
    }

    /// Convert back to case records (in-service elements only).
    pub fn to_case(&self) -> CaseData {
        let base = self.base_mva;
        let bus_records = self
            .buses
            .iter()
            .map(|b| BusRecord {
                id: b.id,
                kind: match b.kind {
                    BusKind::Slack => BUS_REF,
                    BusKind::PV => BUS_PV,
                    BusKind::PQ => BUS_PQ,
                },
                pd: b.p_load * base,
                qd: b.q_load * base,
                gs: b.shunt_g * base,
                bs: b.shunt_b * base,
                area: 1.0,
                vm: b.v_mag,
                va: b.v_ang.to_degrees(),
                base_kv: b.base_kv,
                zone: 1.0,
                vmax: 1.1,
                vmin: 0.9,
                extra: Vec::new(),
            })
            .collect();
        let gen_records = self
            .generators
            .iter()
            .map(|g| GenRecord {
                bus: self.buses[g.bus].id,
                pg: g.pg * base,
                qg: g.qg * base,
                qmax: 9999.0,
                qmin: -9999.0,
                vg: g.vg,
                mbase: base,
                status: 1.0,
                pmax: g.pmax,
                pmin: 0.0,
                extra: Vec::new(),
            })
            .collect();
        let branch_records = self
            .branches
            .iter()
            .map(|br| BranchRecord {
                from: self.buses[br.from].id,
                to: self.buses[br.to].id,
                r: br.r,
                x: br.x,
                b: br.b_charging,
                rate_a: 0.0,
                rate_b: 0.0,
                rate_c: 0.0,
                ratio: br.tap,
                angle: br.shift.to_degrees(),
                status: 1.0,
                angmin: -360.0,
                angmax: 360.0,
                extra: Vec::new(),
            })
            .collect();
        CaseData {
            name: self.name.clone(),
            base_mva: base,
            bus_records,
            gen_records,
            branch_records,
            dcline_records: self.links.clone(),
        }
    }
}

/// Convert parsed case records into the graph model, dropping
/// out-of-service elements and converting to per unit.
pub fn build_graph(case: &CaseData) -> Result<GridGraph> {
    let base = case.base_mva;
    if !(base > 0.0) {
        return Err(Error::Structural("base MVA must be positive".into()));
    }

    let mut all_ids = HashMap::new();
    for (k, b) in case.bus_records.iter().enumerate() {
        if all_ids.insert(b.id, k).is_some() {
            return Err(Error::Structural(format!("duplicate bus id {}", b.id)));
        }
    }

    let mut index = HashMap::new();
    let mut buses = Vec::new();
    for b in &case.bus_records {
        if b.kind == BUS_ISOLATED {
            continue;
        }
        if !(b.base_kv > 0.0) {
            return Err(Error::Structural(format!(
                "bus {} has non-positive base kV {}",
                b.id, b.base_kv
            )));
        }
        index.insert(b.id, buses.len());
        buses.push(Bus {
            id: b.id,
            kind: match b.kind {
                BUS_REF => BusKind::Slack,
                BUS_PV => BusKind::PV,
                _ => BusKind::PQ,
            },
            base_kv: b.base_kv,
            v_mag: b.vm,
            v_ang: b.va.to_radians(),
            p_inj: -b.pd / base,
            q_inj: -b.qd / base,
            p_load: b.pd / base,
            q_load: b.qd / base,
            shunt_g: b.gs / base,
            shunt_b: b.bs / base,
            gen_capacity: 0.0,
            gen_count: 0,
            area: None,
        });
    }

    let mut generators = Vec::new();
    for g in case.gen_records.iter().filter(|g| g.in_service()) {
        if !all_ids.contains_key(&g.bus) {
            return Err(Error::Structural(format!(
                "generator references missing bus {}",
                g.bus
            )));
        }
        let Some(&k) = index.get(&g.bus) else {
            continue;
        };
        let bus = &mut buses[k];
        if bus.gen_count == 0 && bus.kind != BusKind::PQ {
            bus.v_mag = g.vg;
        }
        bus.gen_count += 1;
        bus.gen_capacity += g.pmax;
        bus.p_inj += g.pg / base;
        bus.q_inj += g.qg / base;
        generators.push(Generator {
            bus: k,
            pg: g.pg / base,
            qg: g.qg / base,
            vg: g.vg,
            pmax: g.pmax,
        });
    }
    for b in &mut buses {
        if b.kind == BusKind::PV && b.gen_count == 0 {
            b.kind = BusKind::PQ;
        }
    }

    let mut branches = Vec::new();
    for (k, br) in case.branch_records.iter().enumerate() {
        for end in [br.from, br.to] {
            if !all_ids.contains_key(&end) {
                return Err(Error::Structural(format!(
                    "branch record {} ({} - {}) references missing bus {end}",
                    k + 1,
                    br.from,
                    br.to
                )));
            }
        }
        if !br.in_service() {
            continue;
        }
        let (Some(&f), Some(&t)) = (index.get(&br.from), index.get(&br.to)) else {
            continue;
        };
        if f == t {
            return Err(Error::Structural(format!(
                "branch record {} connects bus {} to itself",
                k + 1,
                br.from
            )));
        }
        if br.x == 0.0 {
            return Err(Error::Structural(format!(
                "branch record {} ({} - {}) has zero reactance",
                k + 1,
                br.from,
                br.to
            )));
        }
        let tap = if br.ratio == 0.0 { 1.0 } else { br.ratio };
        if !(tap > 0.0) {
            return Err(Error::Structural(format!(
                "branch record {} has non-positive tap {tap}",
                k + 1
            )));
        }
        branches.push(Branch {
            from: f,
            to: t,
            r: br.r,
            x: br.x,
            b_charging: br.b,
            tap,
            shift: br.angle.to_radians(),
            in_service: true,
        });
    }

    let mut links = Vec::new();
    let mut link_terminals = Vec::new();
    for (k, l) in case.dcline_records.iter().enumerate() {
        let endpoint = |id: u32| {
            index.get(&id).copied().ok_or_else(|| {
                Error::Structural(format!(
                    "dcline record {} ({} - {}) references missing bus {id}",
                    k + 1,
                    l.r_bus,
                    l.i_bus
                ))
            })
        };
        let r = endpoint(l.r_bus)?;
        let i = endpoint(l.i_bus)?;
        if !l.in_service {
            continue;
        }
        if r == i {
            return Err(Error::Structural(format!(
                "dcline record {} has identical terminals",
                k + 1
            )));
        }
        l.validate()
            .map_err(|m| Error::Structural(format!("dcline record {}: {m}", k + 1)))?;
        links.push(l.clone());
        link_terminals.push((r, i));
    }

    let mut adjacency = vec![Vec::new(); buses.len()];
    for (k, br) in branches.iter().enumerate() {
        adjacency[br.from].push(k);
        adjacency[br.to].push(k);
    }

    Ok(GridGraph {
        name: case.name.clone(),
        base_mva: base,
        buses,
        branches,
        generators,
        links,
        link_terminals,
        adjacency,
        index,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::case::parse_case;

    pub(crate) const TWO_BUS: &str = "mpc.baseMVA = 100;
mpc.bus = [
1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;
2 1 100 50 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [ 1 0 0 300 -300 1 100 1 250 0; ];
mpc.branch = [ 1 2 0 0.1 0 0 0 0 0 0 1 -360 360; ];
";

    #[test]
    fn two_bus_graph() {
        let g = build_graph(&parse_case(TWO_BUS).unwrap()).unwrap();
        assert_eq!(g.bus_count(), 2);
        assert_eq!(g.branches.len(), 1);
        assert_eq!(g.adjacency, vec![vec![0], vec![0]]);
        assert_eq!(g.buses[0].kind, BusKind::Slack);
        assert_eq!(g.buses[1].p_inj, -1.0);
        assert_eq!(g.buses[1].q_inj, -0.5);
        assert_eq!(g.buses[0].gen_capacity, 250.0);
    }

    #[test]
    fn dangling_branch_endpoint() {
        let text = TWO_BUS.replace("1 2 0 0.1", "1 999 0 0.1");
        let err = build_graph(&parse_case(&text).unwrap()).unwrap_err();
        assert!(
            matches!(&err, Error::Structural(m) if m.contains("999")),
            "{err}"
        );
    }

    #[test]
    fn duplicate_bus_id() {
        let text = TWO_BUS.replace("2 1 100", "1 1 100");
        assert!(matches!(
            build_graph(&parse_case(&text).unwrap()),
            Err(Error::Structural(m)) if m.contains("duplicate")
        ));
    }

    #[test]
    fn out_of_service_dropped() {
        let text = TWO_BUS.replace(
            "mpc.branch = [ 1 2 0 0.1 0 0 0 0 0 0 1 -360 360; ];",
            "mpc.branch = [ 1 2 0 0.1 0 0 0 0 0 0 1 -360 360; 1 2 0 0.2 0 0 0 0 0 0 0 -360 360; ];",
        );
        let g = build_graph(&parse_case(&text).unwrap()).unwrap();
        assert_eq!(g.branches.len(), 1);
    }

    #[test]
    fn pv_without_generator_becomes_pq() {
        let text = TWO_BUS.replace("2 1 100", "2 2 100");
        let g = build_graph(&parse_case(&text).unwrap()).unwrap();
        assert_eq!(g.buses[1].kind, BusKind::PQ);
    }

    #[test]
    fn round_trip_to_records() {
        let case = parse_case(TWO_BUS).unwrap();
        let g = build_graph(&case).unwrap();
        let back = g.to_case();
        assert_eq!(back.bus_records.len(), 2);
        for (a, b) in case.bus_records.iter().zip(&back.bus_records) {
            assert_eq!((a.id, a.kind, a.base_kv), (b.id, b.kind, b.base_kv));
            assert!((a.pd - b.pd).abs() < 1e-9 && (a.qd - b.qd).abs() < 1e-9);
        }
        let again = build_graph(&back).unwrap();
        assert_eq!(again.buses, g.buses);
        assert_eq!(again.branches, g.branches);
        assert_eq!(again.adjacency, g.adjacency);
    }
}
