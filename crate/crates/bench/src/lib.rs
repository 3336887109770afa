//! Shared fixtures for the solver benchmarks.

use hybridflow_core::case::{parse_case, parse_dcline_table, synthesize_multi_area, CaseData};

pub const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data");

pub fn load(name: &str) -> CaseData {
    let text =
        std::fs::read_to_string(format!("{DATA}/{name}")).unwrap_or_else(|e| panic!("{name}: {e}"));
    parse_case(&text).unwrap()
}

/// `k` ring-coupled copies of ACTIVSg500 with the reference link parameters.
pub fn activsg_ring(k: usize) -> CaseData {
    let text = std::fs::read_to_string(format!("{DATA}/activsg500_link.m")).unwrap();
    let link = parse_dcline_table(&text).unwrap().remove(0);
    synthesize_multi_area(&load("case_ACTIVSg500.m"), k, &link).unwrap()
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixtures_load() {
        assert_eq!(super::activsg_ring(2).bus_records.len(), 1000);
    }
}
