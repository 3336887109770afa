//! Split the hybrid grid into AC areas at its DC links.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BusIndex, BusKind, GridGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    /// Area label per dense bus index.
    pub labels: Vec<usize>,
    pub area_count: usize,
    /// Dense bus indices of each area, ascending.
    pub areas: Vec<Vec<BusIndex>>,
    /// Links whose terminals fall in different areas.
    pub separating_links: Vec<usize>,
    /// Links whose terminals stay AC-connected.
    pub embedded_links: Vec<usize>,
    /// Dense index of each area's slack bus.
    pub area_slacks: Vec<BusIndex>,
    /// Largest area size over the ideal size `|V| / k`.
    pub imbalance: f64,
    pub cut_edge_count: usize,
}

impl PartitionResult {
    pub fn area_sizes(&self) -> Vec<usize> {
        self.areas.iter().map(Vec::len).collect()
    }
}

/// Connected components of the AC branch subgraph plus every link not in
/// `excluded`. Components are numbered in order of their smallest bus id.
pub fn connected_components(graph: &GridGraph, excluded: &[usize]) -> Vec<usize> {
    let n = graph.bus_count();
    let mut link_adj = vec![Vec::new(); n];
    let mut skip = vec![false; graph.links.len()];
    for &k in excluded {
        if k < skip.len() {
            skip[k] = true;
        }
    }
    for (k, &(r, i)) in graph.link_terminals.iter().enumerate() {
        if !skip[k] {
            link_adj[r].push(i);
            link_adj[i].push(r);
        }
    }

    let mut raw = vec![usize::MAX; n];
    let mut min_id = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if raw[seed] != usize::MAX {
            continue;
        }
        let label = min_id.len();
        let mut smallest = graph.buses[seed].id;
        raw[seed] = label;
        queue.push_back(seed);
        while let Some(b) = queue.pop_front() {
            smallest = smallest.min(graph.buses[b].id);
            let ac = graph.adjacency[b].iter().map(|&e| graph.neighbor(e, b));
            for nb in ac.chain(link_adj[b].iter().copied()) {
                if raw[nb] == usize::MAX {
                    raw[nb] = label;
                    queue.push_back(nb);
                }
            }
        }
        min_id.push(smallest);
    }

    let mut by_id: Vec<usize> = (0..min_id.len()).collect();
    by_id.sort_by_key(|&c| min_id[c]);
    let mut canonical = vec![0; min_id.len()];
    for (new, &old) in by_id.iter().enumerate() {
        canonical[old] = new;
    }
    raw.iter().map(|&c| canonical[c]).collect()
}

/// Group dense bus indices by label.
pub fn group_areas(labels: &[usize]) -> Vec<Vec<BusIndex>> {
    let k = labels.iter().map(|&l| l + 1).max().unwrap_or(0);
    let mut areas = vec![Vec::new(); k];
    for (b, &l) in labels.iter().enumerate() {
        areas[l].push(b);
    }
    areas
}

/// One slack per area: the case slack where the area has one, otherwise the
/// generator bus with the largest capacity, ties to the smaller bus id.
pub fn select_area_slacks(labels: &[usize], graph: &GridGraph) -> Result<Vec<BusIndex>> {
    let areas = group_areas(labels);
    areas
        .iter()
        .enumerate()
        .map(|(a, buses)| {
            let pick = |slack_only: bool| {
                buses
                    .iter()
                    .copied()
                    .filter(|&b| {
                        let bus = &graph.buses[b];
                        bus.has_generator() && (!slack_only || bus.kind == BusKind::Slack)
                    })
                    .min_by(|&x, &y| {
                        let (bx, by) = (&graph.buses[x], &graph.buses[y]);
                        by.gen_capacity
                            .total_cmp(&bx.gen_capacity)
                            .then(bx.id.cmp(&by.id))
                    })
            };
            let original = buses
                .iter()
                .copied()
                .filter(|&b| graph.buses[b].kind == BusKind::Slack)
                .min_by_key(|&b| graph.buses[b].id);
            pick(true)
                .or(original)
                .or_else(|| pick(false))
                .ok_or_else(|| {
                    Error::Partition(format!(
                        "area {a} (bus {}, {} buses) has no generator to serve as slack",
                        graph.buses[buses[0]].id,
                        buses.len()
                    ))
                })
        })
        .collect()
}

/// Cut every DC link, label the resulting AC areas, classify links and pick
/// area slacks.
pub fn partition_by_dc(graph: &GridGraph) -> Result<PartitionResult> {
    if graph.bus_count() == 0 {
        return Err(Error::Partition("network has no buses".into()));
    }
    let all: Vec<usize> = (0..graph.links.len()).collect();
    let labels = connected_components(graph, &all);
    from_labels(graph, labels)
}

/// Partition summary for an explicit labeling.
pub(crate) fn from_labels(graph: &GridGraph, labels: Vec<usize>) -> Result<PartitionResult> {
    let areas = group_areas(&labels);
    let area_count = areas.len();
    let (separating_links, embedded_links): (Vec<usize>, Vec<usize>) = (0..graph.links.len())
        .partition(|&k| {
            let (r, i) = graph.link_terminals[k];
            labels[r] != labels[i]
        });
    let area_slacks = select_area_slacks(&labels, graph)?;
    let largest = areas.iter().map(Vec::len).max().unwrap_or(0);
    let imbalance = largest as f64 * area_count as f64 / graph.bus_count() as f64;
    Ok(PartitionResult {
        labels,
        area_count,
        areas,
        cut_edge_count: separating_links.len(),
        separating_links,
        embedded_links,
        area_slacks,
        imbalance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{parse_case, CaseData};
    use crate::grid::build_graph;
    use crate::grid::tests::TWO_BUS;

    /// Two triangles (1-2-3, 4-5-6) with generators at 1, 3, 4 and 6, and an
    /// optional AC branch 3-4 between them.
    fn two_cliques(bridge: bool, links: &str) -> GridGraph {
        let mut text = String::from("mpc.baseMVA = 100;\nmpc.bus = [\n");
        for id in 1..=6 {
            let kind = if id == 1 {
                3
            } else if id == 3 || id == 6 || id == 4 {
                2
            } else {
                1
            };
            text += &format!("{id} {kind} 10 0 0 0 1 1 0 230 1 1.1 0.9;\n");
        }
        text += "];\nmpc.gen = [\n1 0 0 99 -99 1 100 1 200 0;\n3 0 0 99 -99 1 100 1 100 0;\n";
        text += "4 0 0 99 -99 1 100 1 300 0;\n6 0 0 99 -99 1 100 1 300 0;\n];\n";
        text += "mpc.branch = [\n1 2 0 0.1 0 0 0 0 0 0 1 -360 360;\n2 3 0 0.1 0 0 0 0 0 0 1 -360 360;\n";
        text += "3 1 0 0.1 0 0 0 0 0 0 1 -360 360;\n4 5 0 0.1 0 0 0 0 0 0 1 -360 360;\n";
        text += "5 6 0 0.1 0 0 0 0 0 0 1 -360 360;\n6 4 0 0.1 0 0 0 0 0 0 1 -360 360;\n";
        if bridge {
            text += "3 4 0 0.1 0 0 0 0 0 0 1 -360 360;\n";
        }
        text += "];\n";
        text += links;
        build_graph(&parse_case(&text).unwrap()).unwrap()
    }

    const LINK_2_5: &str =
        "mpc.dcline = [\n2 5 4 'P-V' 100 460 0 6.8 6.2 0.7478 0.005 0.5 1.5 15 20 18 20 1;\n];\n";

    #[test]
    fn single_bus_one_component() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [ 7 3 0 0 0 0 1 1 0 230 1 1.1 0.9; ];\n\
                    mpc.gen = [ 7 0 0 1 -1 1 100 1 10 0; ];\nmpc.branch = [ ];\n";
        let g = build_graph(&parse_case(text).unwrap()).unwrap();
        assert_eq!(connected_components(&g, &[]), vec![0]);
        let p = partition_by_dc(&g).unwrap();
        assert_eq!(p.area_slacks, vec![0]);
    }

    #[test]
    fn link_joins_components_unless_excluded() {
        let g = two_cliques(false, LINK_2_5);
        assert_eq!(connected_components(&g, &[0]), vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(connected_components(&g, &[]), vec![0; 6]);
        let p = partition_by_dc(&g).unwrap();
        assert_eq!(p.area_count, 2);
        assert_eq!(p.separating_links, vec![0]);
        assert_eq!(p.cut_edge_count, 1);
        assert_eq!(p.imbalance, 1.0);
        // Area 2 has gens at 4 and 6 with equal capacity: smaller id wins.
        assert_eq!(p.area_slacks, vec![0, 3]);
    }

    #[test]
    fn parallel_ac_path_embeds_link() {
        let g = two_cliques(true, LINK_2_5);
        let p = partition_by_dc(&g).unwrap();
        assert_eq!(p.area_count, 1);
        assert_eq!(p.embedded_links, vec![0]);
        assert!(p.separating_links.is_empty());
    }

    #[test]
    fn largest_capacity_then_smallest_id() {
        let g = two_cliques(false, "");
        let mut g = g;
        for b in &mut g.buses {
            if b.kind == BusKind::Slack {
                b.kind = BusKind::PV;
            }
        }
        // capacities: bus 1 -> 200, bus 3 -> 100
        let slacks = select_area_slacks(&[0, 0, 0, 1, 1, 1], &g).unwrap();
        assert_eq!(slacks, vec![0, 3]);
    }

    #[test]
    fn tie_break_prefers_smaller_id() {
        let mut text = String::from("mpc.baseMVA = 100;\nmpc.bus = [\n");
        for id in [3, 7, 9] {
            text += &format!("{id} 2 0 0 0 0 1 1 0 230 1 1.1 0.9;\n");
        }
        text += "];\nmpc.gen = [\n7 0 0 9 -9 1 100 1 100 0;\n3 0 0 9 -9 1 100 1 300 0;\n9 0 0 9 -9 1 100 1 300 0;\n];\n";
        text += "mpc.branch = [\n3 7 0 0.1 0 0 0 0 0 0 1 -360 360;\n7 9 0 0.1 0 0 0 0 0 0 1 -360 360;\n];\n";
        let g = build_graph(&parse_case(&text).unwrap()).unwrap();
        let slacks = select_area_slacks(&[0, 0, 0], &g).unwrap();
        assert_eq!(g.buses[slacks[0]].id, 3);
    }

    #[test]
    fn area_without_generator_is_error() {
        let text = TWO_BUS.replace(
            "mpc.branch = [ 1 2 0 0.1 0 0 0 0 0 0 1 -360 360; ];",
            "mpc.branch = [ ];",
        );
        let g = build_graph(&parse_case(&text).unwrap()).unwrap();
        let err = partition_by_dc(&g).unwrap_err();
        assert!(
            matches!(&err, Error::Partition(m) if m.contains("bus 2")),
            "{err}"
        );
    }

    #[test]
    fn canonical_labels_follow_smallest_id() {
        let case: CaseData = parse_case(
            "mpc.baseMVA = 100;\nmpc.bus = [\n9 3 0 0 0 0 1 1 0 230 1 1.1 0.9;\n\
             2 2 0 0 0 0 1 1 0 230 1 1.1 0.9;\n];\n\
             mpc.gen = [\n9 0 0 1 -1 1 100 1 10 0;\n2 0 0 1 -1 1 100 1 10 0;\n];\nmpc.branch = [ ];\n",
        )
        .unwrap();
        let g = build_graph(&case).unwrap();
        assert_eq!(connected_components(&g, &[]), vec![1, 0]);
    }
}
