//! COUNCIL formation. Walks the dominating set, grows a fully connected head
//! group (the COUNCIL) around each chosen head, assigns gateways between
//! consecutive clusters and keeps going until every node belongs to a cluster.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net_graph::{GraphError, NodeId, NodeSet, Topology};
use crate::phase1::{ClusterId, DominatingSet, Role};
use crate::threshold::choose_threshold;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormationError {
    #[error("not a dominating set of the topology")]
    InvalidDominatingSet,
    #[error("head {0} is in the forbidden set")]
    ForbiddenHead(NodeId),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A fully connected group of heads sharing one cluster secret.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Council {
    pub heads: NodeSet,
    pub cluster_id: ClusterId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub council: Council,
    pub members: NodeSet,
    pub gateways: NodeSet,
    /// Reconstruction threshold for the cluster secret.
    pub k: usize,
}

impl Cluster {
    pub fn id(&self) -> ClusterId {
        self.council.cluster_id
    }

    /// Council size.
    pub fn n(&self) -> usize {
        self.council.heads.len()
    }

    pub fn heads(&self) -> &NodeSet {
        &self.council.heads
    }

    pub fn role_of(&self, u: NodeId) -> Option<Role> {
        if self.council.heads.contains(&u) {
            Some(Role::Head)
        } else if self.gateways.contains(&u) {
            Some(Role::Gateway)
        } else if self.members.contains(&u) {
            Some(Role::Member)
        } else {
            None
        }
    }

    pub fn all_nodes(&self) -> NodeSet {
        let mut s = self.council.heads.clone();
        s.extend(&self.members);
        s.extend(&self.gateways);
        s
    }
}

/// The clustering of a whole topology.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub clusters: Vec<Cluster>,
    pub node_index: BTreeMap<NodeId, ClusterId>,
}

impl Partition {
    /// Builds the node index from the clusters. Later clusters do not
    /// overwrite earlier assignments; `verify_partition` reports doubles.
    pub fn new(clusters: Vec<Cluster>) -> Self {
        let mut node_index = BTreeMap::new();
        for c in &clusters {
            for u in c.all_nodes() {
                node_index.entry(u).or_insert(c.id());
            }
        }
        Self { clusters, node_index }
    }

    pub fn reindex(&mut self) {
        *self = Partition::new(std::mem::take(&mut self.clusters));
    }

    pub fn cluster(&self, cid: ClusterId) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.id() == cid)
    }

    pub fn cluster_mut(&mut self, cid: ClusterId) -> Option<&mut Cluster> {
        self.clusters.iter_mut().find(|c| c.id() == cid)
    }

    pub fn cluster_of(&self, u: NodeId) -> Option<&Cluster> {
        self.node_index.get(&u).and_then(|&c| self.cluster(c))
    }

    pub fn role_of(&self, u: NodeId) -> Option<Role> {
        self.cluster_of(u).and_then(|c| c.role_of(u))
    }

    /// Every head of every cluster.
    pub fn all_heads(&self) -> NodeSet {
        self.clusters
            .iter()
            .flat_map(|c| c.council.heads.iter().copied())
            .collect()
    }

    pub fn council_sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Cluster::n).collect()
    }
}

/// Grows a COUNCIL around `h`. Candidates are the neighbors of `h` outside
/// `forbidden`, visited `preferred` nodes first and then the rest, each group
/// in ascending NID. A candidate is admitted iff it is linked to every node
/// already admitted. Only `h`'s two-hop view is consulted.
pub fn find_council_clique(
    t: &Topology,
    h: NodeId,
    forbidden: &NodeSet,
    preferred: &NodeSet,
) -> Result<NodeSet, FormationError> {
    if forbidden.contains(&h) {
        return Err(FormationError::ForbiddenHead(h));
    }
    let view = t.two_hop_view(h)?;
    let (first, rest): (Vec<NodeId>, Vec<NodeId>) = view
        .direct
        .iter()
        .filter(|c| !forbidden.contains(c))
        .partition(|c| preferred.contains(c));
    let mut council = vec![h];
    for c in first.into_iter().chain(rest) {
        if council.iter().all(|&a| view.knows_link(a, c)) {
            council.push(c);
        }
    }
    Ok(council.into_iter().collect())
}

/// Forms the COUNCIL-based clusters from a dominating set.
///
/// Each iteration picks a head: an unassigned node of D adjacent to the last
/// gateway, else the lowest unassigned node of D, else the lowest unassigned
/// node at all. Its council is grown over unassigned nodes (D nodes first), the
/// council's unassigned neighbors join as members, and the lowest unassigned
/// D-neighbor of a council D-node becomes the cluster's gateway.
pub fn cluster_form(t: &Topology, d: &DominatingSet) -> Result<Partition, FormationError> {
    if !t.is_dominating_set(&d.members).map_err(|_| FormationError::InvalidDominatingSet)? {
        return Err(FormationError::InvalidDominatingSet);
    }
    let dom = &d.members;
    let mut remaining: NodeSet = dom.clone();
    let mut assigned: NodeSet = NodeSet::new();
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut last_gateway: Option<NodeId> = None;

    while assigned.len() < t.len() {
        let free = |u: &NodeId| !assigned.contains(u);
        let h = last_gateway
            .and_then(|g| {
                t.neighbors(g)
                    .ok()?
                    .iter()
                    .find(|v| remaining.contains(v) && free(v))
                    .copied()
            })
            .or_else(|| remaining.iter().find(|v| free(v)).copied())
            .or_else(|| t.nodes().find(|v| free(v)))
            .expect("loop runs only while some node is unassigned");

        let heads = find_council_clique(t, h, &assigned, dom)?;
        assigned.extend(&heads);

        let mut members = NodeSet::new();
        for &s in &heads {
            for &v in t.neighbors(s)? {
                if assigned.insert(v) {
                    members.insert(v);
                }
            }
        }

        let gateway = heads
            .iter()
            .filter(|s| dom.contains(s))
            .flat_map(|&s| t.neighbors(s).expect("head is in topology").iter())
            .filter(|g| dom.contains(g) && members.contains(g))
            .min()
            .copied();
        let mut gateways = NodeSet::new();
        if let Some(g) = gateway {
            members.remove(&g);
            gateways.insert(g);
        }

        for s in heads.iter().filter(|s| dom.contains(s)) {
            remaining.remove(s);
        }
        if let Some(g) = gateway {
            remaining.remove(&g);
        }
        last_gateway = gateway;

        let n = heads.len();
        let cluster_id = ClusterId(*heads.first().unwrap());
        clusters.push(Cluster {
            council: Council { heads, cluster_id },
            members,
            gateways,
            k: choose_threshold(n).expect("council is never empty").k,
        });
    }
    Ok(Partition::new(clusters))
}

/// A broken partition invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    UnknownNode { node: NodeId },
    Uncovered { node: NodeId },
    MultiplyAssigned { node: NodeId, clusters: Vec<ClusterId> },
    IndexMismatch { node: NodeId },
    DuplicateClusterId { cluster: ClusterId },
    EmptyCouncil { cluster: ClusterId },
    CouncilNotClique { cluster: ClusterId, a: NodeId, b: NodeId },
    AdjacentHeads { a: NodeId, b: NodeId },
    MemberWithoutHead { cluster: ClusterId, node: NodeId },
    GatewayIsHead { cluster: ClusterId, node: NodeId },
    BadThreshold { cluster: ClusterId, n: usize, k: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownNode { node } => write!(f, "node {node} is not in the topology"),
            Violation::Uncovered { node } => write!(f, "coverage: node {node} is in no cluster"),
            Violation::MultiplyAssigned { node, clusters } => {
                write!(f, "coverage: node {node} is in clusters {clusters:?}")
            }
            Violation::IndexMismatch { node } => write!(f, "node index disagrees for node {node}"),
            Violation::DuplicateClusterId { cluster } => write!(f, "cluster id {cluster} used twice"),
            Violation::EmptyCouncil { cluster } => write!(f, "cluster {cluster} has no heads"),
            Violation::CouncilNotClique { cluster, a, b } => {
                write!(f, "council of {cluster}: heads {a} and {b} are not linked")
            }
            Violation::AdjacentHeads { a, b } => {
                write!(f, "heads {a} and {b} of different clusters are adjacent")
            }
            Violation::MemberWithoutHead { cluster, node } => {
                write!(f, "node {node} of cluster {cluster} has no adjacent head")
            }
            Violation::GatewayIsHead { cluster, node } => {
                write!(f, "node {node} of cluster {cluster} is both gateway and head")
            }
            Violation::BadThreshold { cluster, n, k } => {
                write!(f, "cluster {cluster}: threshold k={k} outside 1..={n}")
            }
        }
    }
}

/// Checks every partition, cluster and council invariant against `t`.
pub fn verify_partition(t: &Topology, p: &Partition) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut owners: BTreeMap<NodeId, Vec<ClusterId>> = BTreeMap::new();
    let mut ids = BTreeSet::new();
    for c in &p.clusters {
        let cid = c.id();
        if !ids.insert(cid) {
            out.push(Violation::DuplicateClusterId { cluster: cid });
        }
        for u in c.all_nodes() {
            owners.entry(u).or_default().push(cid);
        }
        for u in c.council.heads.intersection(&c.gateways) {
            out.push(Violation::GatewayIsHead { cluster: cid, node: *u });
        }
        if c.council.heads.is_empty() {
            out.push(Violation::EmptyCouncil { cluster: cid });
        }
        if c.k == 0 || c.k > c.n() {
            out.push(Violation::BadThreshold { cluster: cid, n: c.n(), k: c.k });
        }
        let heads: Vec<NodeId> = c.council.heads.iter().copied().collect();
        for (i, &a) in heads.iter().enumerate() {
            for &b in &heads[i + 1..] {
                if !t.adjacent(a, b) {
                    out.push(Violation::CouncilNotClique { cluster: cid, a, b });
                }
            }
        }
        for &u in c.members.union(&c.gateways) {
            if c.council.heads.contains(&u) {
                continue;
            }
            if !heads.iter().any(|&h| t.adjacent(u, h)) {
                out.push(Violation::MemberWithoutHead { cluster: cid, node: u });
            }
        }
    }
    for (&u, cs) in &owners {
        if !t.contains(u) {
            out.push(Violation::UnknownNode { node: u });
        }
        if cs.len() > 1 {
            out.push(Violation::MultiplyAssigned { node: u, clusters: cs.clone() });
        }
        if p.node_index.get(&u) != Some(&cs[0]) {
            out.push(Violation::IndexMismatch { node: u });
        }
    }
    for u in p.node_index.keys() {
        if !owners.contains_key(u) {
            out.push(Violation::IndexMismatch { node: *u });
        }
    }
    for u in t.nodes() {
        if !owners.contains_key(&u) {
            out.push(Violation::Uncovered { node: u });
        }
    }
    let head_owner: BTreeMap<NodeId, ClusterId> = p
        .clusters
        .iter()
        .flat_map(|c| c.council.heads.iter().map(move |&h| (h, c.id())))
        .collect();
    for (&a, ca) in &head_owner {
        if let Ok(ns) = t.neighbors(a) {
            for &b in ns.range(a..) {
                if head_owner.get(&b).is_some_and(|cb| cb != ca) {
                    out.push(Violation::AdjacentHeads { a, b });
                }
            }
        }
    }
    out
}
