//! Case files in the matrix-oriented `mpc.*` text layout, extended with a
//! `dcline` table for LCC links.
//!
//! Records keep the units of the file (MW, MVAr, kV, ohms, degrees). The
//! per-unit conversion happens in [`crate::grid::build_graph`].

mod parse;
mod synth;
mod write;

pub use parse::parse_case;
pub use synth::synthesize_multi_area;
pub use write::write_case;

use crate::grid::LccLink;

/// MATPOWER bus type codes.
pub const BUS_PQ: u8 = 1;
pub const BUS_PV: u8 = 2;
pub const BUS_REF: u8 = 3;
pub const BUS_ISOLATED: u8 = 4;

pub(crate) const BUS_COLUMNS: usize = 13;
pub(crate) const GEN_COLUMNS: usize = 10;
pub(crate) const BRANCH_COLUMNS: usize = 13;
/// Full `dcline` row with separate rectifier and inverter values.
pub const DCLINE_COLUMNS: usize = 21;
/// Short `dcline` row: one bridge count, one commutation reactance and one
/// transformer ratio shared by both terminals.
pub const DCLINE_SHORT_COLUMNS: usize = 18;

#[derive(Debug, Clone, PartialEq)]
pub struct BusRecord {
    pub id: u32,
    pub kind: u8,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub area: f64,
    pub vm: f64,
    /// Degrees.
    pub va: f64,
    pub base_kv: f64,
    pub zone: f64,
    pub vmax: f64,
    pub vmin: f64,
    /// Trailing columns beyond the standard 13, kept for round trips.
    pub extra: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenRecord {
    pub bus: u32,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub vg: f64,
    pub mbase: f64,
    pub status: f64,
    pub pmax: f64,
    pub pmin: f64,
    pub extra: Vec<f64>,
}

impl GenRecord {
    pub fn in_service(&self) -> bool {
        self.status > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub rate_a: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    /// Off-nominal ratio; 0 means nominal (1.0).
    pub ratio: f64,
    /// Phase shift in degrees.
    pub angle: f64,
    pub status: f64,
    pub angmin: f64,
    pub angmax: f64,
    pub extra: Vec<f64>,
}

impl BranchRecord {
    pub fn in_service(&self) -> bool {
        self.status > 0.0
    }
}

/// One parsed case file.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseData {
    pub name: String,
    pub base_mva: f64,
    pub bus_records: Vec<BusRecord>,
    pub gen_records: Vec<GenRecord>,
    pub branch_records: Vec<BranchRecord>,
    pub dcline_records: Vec<LccLink>,
}

impl CaseData {
    pub fn max_bus_id(&self) -> u32 {
        self.bus_records.iter().map(|b| b.id).max().unwrap_or(0)
    }

    /// Replace the case's links with the rows parsed from a standalone
    /// `dcline` file.
    pub fn with_dclines(mut self, links: Vec<LccLink>) -> Self {
        self.dcline_records = links;
        self
    }
}

pub use parse::parse_dcline_table;
