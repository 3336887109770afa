use super::{CaseData, BUS_PV, BUS_REF};
use crate::error::{Error, Result};
use crate::grid::LccLink;

/// Id offset between consecutive copies: the smallest power of ten above the
/// largest bus id, so copy `c` maps bus `b` to `b + c * stride` and copy 0
/// keeps its numbering.
pub(crate) fn copy_stride(max_id: u32) -> u32 {
    let mut stride = 10u32;
    while stride <= max_id {
        stride *= 10;
    }
    stride
}

/// Build a `k`-area benchmark case from `k` renumbered copies of `base`,
/// coupled in a ring by `k` links cloned from `template`.
///
/// Link `j` runs from the template's rectifier bus in copy `j` to the
/// template's inverter bus in copy `(j + 1) % k`. Reference buses of copies
/// `1..k` are downgraded to PV; the partitioner restores them per area.
pub fn synthesize_multi_area(base: &CaseData, k: usize, template: &LccLink) -> Result<CaseData> {
    if k == 0 {
        return Err(Error::Argument("copy count must be at least 1".into()));
    }
    for id in [template.r_bus, template.i_bus] {
        if !base.bus_records.iter().any(|b| b.id == id) {
            return Err(Error::Argument(format!(
                "link template terminal {id} is not a bus of the base case"
            )));
        }
    }
    let stride = copy_stride(base.max_bus_id());
    if (stride as u64) * (k as u64) > u32::MAX as u64 {
        return Err(Error::Argument(format!(
            "{k} copies overflow the bus id range"
        )));
    }

    let mut out = CaseData {
        name: format!("{}_x{k}", base.name),
        base_mva: base.base_mva,
        bus_records: Vec::with_capacity(base.bus_records.len() * k),
        gen_records: Vec::with_capacity(base.gen_records.len() * k),
        branch_records: Vec::with_capacity(base.branch_records.len() * k),
        dcline_records: Vec::with_capacity((base.dcline_records.len() + 1) * k),
    };

    for c in 0..k {
        let off = c as u32 * stride;
        out.bus_records.extend(base.bus_records.iter().map(|b| {
            let mut b = b.clone();
            b.id += off;
            if c > 0 && b.kind == BUS_REF {
                b.kind = BUS_PV;
            }
            b
        }));
        out.gen_records.extend(base.gen_records.iter().map(|g| {
            let mut g = g.clone();
            g.bus += off;
            g
        }));
        out.branch_records
            .extend(base.branch_records.iter().map(|br| {
                let mut br = br.clone();
                br.from += off;
                br.to += off;
                br
            }));
        out.dcline_records
            .extend(base.dcline_records.iter().map(|l| {
                let mut l = l.clone();
                l.r_bus += off;
                l.i_bus += off;
                l
            }));
    }
    for j in 0..k {
        let mut link = template.clone();
        link.r_bus = template.r_bus + j as u32 * stride;
        link.i_bus = template.i_bus + ((j + 1) % k) as u32 * stride;
        out.dcline_records.push(link);
    }
    Ok(out)
}
