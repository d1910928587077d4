//! Small hand-built topologies, stored as edge-list scenario files.

use crate::net_graph::Topology;
use crate::sim::Scenario;

pub const CANONICAL_JSON: &str = include_str!("../fixtures/canonical.json");
pub const TRIANGLE_JSON: &str = include_str!("../fixtures/triangle.json");
pub const K4_JSON: &str = include_str!("../fixtures/k4.json");
pub const K5_JSON: &str = include_str!("../fixtures/k5.json");
pub const SHAPES_JSON: &str = include_str!("../fixtures/shapes.json");

fn load(text: &str) -> Scenario {
    Scenario::from_json(text).expect("bundled fixture is valid")
}

/// Seven nodes, two clusters: heads {1,4} after election, then council
/// {1,3,5} with members {2,7} and gateway 4, plus the singleton council {6}.
pub fn canonical_scenario() -> Scenario {
    load(CANONICAL_JSON)
}

pub fn canonical() -> Topology {
    canonical_scenario().initial_topology()
}

/// Nodes 1, 2, 3 pairwise linked.
pub fn triangle() -> Topology {
    load(TRIANGLE_JSON).initial_topology()
}

pub fn k4() -> Topology {
    load(K4_JSON).initial_topology()
}

pub fn k5() -> Topology {
    load(K5_JSON).initial_topology()
}

/// A chain of four clusters whose councils have 2, 3, 4 and 5 heads. The
/// last one is a 6-clique {12..17} whose gateway 12 belongs to the previous
/// cluster, so the remaining five become heads.
pub fn shapes_scenario() -> Scenario {
    load(SHAPES_JSON)
}

pub fn shapes() -> Topology {
    shapes_scenario().initial_topology()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_load() {
        let s = canonical_scenario();
        assert!(s.is_edge_list());
        assert_eq!(s.nodes.len(), 7);
        assert_eq!(canonical().edge_count(), 7);
        assert_eq!(triangle().edge_count(), 3);
        assert_eq!(k4().edge_count(), 6);
        assert_eq!(k5().edge_count(), 10);
        assert_eq!(shapes().len(), 17);
        assert!(shapes().is_connected());
    }
}
