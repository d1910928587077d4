//! Dominating-set generation: HELLO tables, lowest-ID head election, gateway
//! identification and the set D = heads ∪ gateways.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net_graph::{GraphError, NodeId, NodeSet, Topology, TwoHopView};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElectionError {
    #[error("topology is not connected ({0} components)")]
    DisconnectedTopology(usize),
    #[error("heads and gateways do not dominate node {0}")]
    DominationViolated(NodeId),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Cluster identity: the NID of the head that founded the cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub NodeId);

impl std::fmt::Display for ClusterId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Head,
    Member,
    Gateway,
    Undecided,
}

/// Per-node role and cluster after the CBRP-style election.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoleAssignment {
    pub roles: BTreeMap<NodeId, (Role, ClusterId)>,
}

impl RoleAssignment {
    pub fn role(&self, u: NodeId) -> Role {
        self.roles.get(&u).map_or(Role::Undecided, |r| r.0)
    }

    pub fn cluster(&self, u: NodeId) -> Option<ClusterId> {
        self.roles.get(&u).map(|r| r.1)
    }

    pub fn with_role(&self, role: Role) -> NodeSet {
        self.roles
            .iter()
            .filter(|(_, r)| r.0 == role)
            .map(|(&u, _)| u)
            .collect()
    }

    pub fn heads(&self) -> NodeSet {
        self.with_role(Role::Head)
    }

    pub fn gateways(&self) -> NodeSet {
        self.with_role(Role::Gateway)
    }

    /// All nodes of one cluster, head included.
    pub fn cluster_nodes(&self, cid: ClusterId) -> NodeSet {
        self.roles
            .iter()
            .filter(|(_, r)| r.1 == cid)
            .map(|(&u, _)| u)
            .collect()
    }
}

/// Neighbor NIDs and the role each neighbor last announced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborTable {
    pub owner: NodeId,
    pub entries: BTreeMap<NodeId, Role>,
}

impl NeighborTable {
    pub fn from_topology(t: &Topology, u: NodeId, ra: &RoleAssignment) -> Result<Self, GraphError> {
        Ok(Self {
            owner: u,
            entries: t.neighbors(u)?.iter().map(|&v| (v, ra.role(v))).collect(),
        })
    }

    pub fn neighbor_set(&self) -> NodeSet {
        self.entries.keys().copied().collect()
    }
}

/// Adjacent clusters and the gateway used to reach each of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAdjacencyTable {
    pub owner: NodeId,
    pub entries: BTreeMap<ClusterId, NodeId>,
}

impl ClusterAdjacencyTable {
    /// Foreign clusters reachable from `u` directly or through a same-cluster
    /// neighbor. When several nodes reach the same cluster the lowest NID is
    /// recorded as the route.
    pub fn from_topology(t: &Topology, u: NodeId, ra: &RoleAssignment) -> Result<Self, GraphError> {
        let mut entries: BTreeMap<ClusterId, NodeId> = BTreeMap::new();
        let own = ra.cluster(u);
        let mut relays: Vec<NodeId> = vec![u];
        relays.extend(
            t.neighbors(u)?
                .iter()
                .filter(|&&v| own.is_some() && ra.cluster(v) == own),
        );
        for g in relays {
            for &w in t.neighbors(g)? {
                match ra.cluster(w) {
                    Some(c) if Some(c) != own => {
                        let e = entries.entry(c).or_insert(g);
                        *e = (*e).min(g);
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { owner: u, entries })
    }
}

/// Snapshot a node broadcasts every HELLO interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloMessage {
    pub sender: NodeId,
    pub neighbor_table: NeighborTable,
    pub cluster_adjacency: ClusterAdjacencyTable,
    pub round: u64,
}

/// What a node knows locally: its tables, the last tables heard from each
/// neighbor, and how many HELLOs it has sent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    pub nid: NodeId,
    pub neighbor_table: NeighborTable,
    pub cluster_adjacency: ClusterAdjacencyTable,
    pub heard: BTreeMap<NodeId, NeighborTable>,
    pub next_round: u64,
}

impl NodeState {
    pub fn new(nid: NodeId) -> Self {
        Self {
            nid,
            neighbor_table: NeighborTable { owner: nid, entries: BTreeMap::new() },
            cluster_adjacency: ClusterAdjacencyTable { owner: nid, entries: BTreeMap::new() },
            heard: BTreeMap::new(),
            next_round: 0,
        }
    }

    /// Two-hop view assembled purely from the tables this node has received.
    pub fn two_hop_view(&self) -> TwoHopView {
        let direct = self.neighbor_table.neighbor_set();
        let mut view = TwoHopView { owner: self.nid, direct, via: BTreeMap::new() };
        for (&relay, table) in &self.heard {
            if !view.direct.contains(&relay) {
                continue;
            }
            for &w in table.entries.keys() {
                if w != self.nid {
                    view.via.entry(w).or_default().insert(relay);
                }
            }
        }
        view
    }
}

/// Snapshots `state` into a HELLO and advances its round counter.
pub fn build_hello(state: &mut NodeState) -> HelloMessage {
    let msg = HelloMessage {
        sender: state.nid,
        neighbor_table: state.neighbor_table.clone(),
        cluster_adjacency: state.cluster_adjacency.clone(),
        round: state.next_round,
    };
    state.next_round += 1;
    msg
}

/// One synchronous HELLO round: every node broadcasts, every node receives
/// from its current radio neighbors and updates its tables. Returns the
/// number of messages sent.
pub fn exchange_hellos(
    t: &Topology,
    ra: &RoleAssignment,
    states: &mut BTreeMap<NodeId, NodeState>,
) -> usize {
    let outbox: Vec<HelloMessage> = t
        .nodes()
        .map(|u| build_hello(states.entry(u).or_insert_with(|| NodeState::new(u))))
        .collect();
    for msg in &outbox {
        for &v in t.neighbors(msg.sender).expect("sender is in topology") {
            let st = states.get_mut(&v).expect("state created above");
            st.neighbor_table.entries.insert(msg.sender, ra.role(msg.sender));
            st.heard.insert(msg.sender, msg.neighbor_table.clone());
        }
    }
    for u in t.nodes() {
        let st = states.get_mut(&u).unwrap();
        let alive = t.neighbors(u).unwrap();
        st.neighbor_table.entries.retain(|v, _| alive.contains(v));
        st.heard.retain(|v, _| alive.contains(v));
        st.cluster_adjacency = ClusterAdjacencyTable::from_topology(t, u, ra).unwrap();
    }
    outbox.len()
}

/// Runs the two HELLO rounds needed for every node to hold its two-hop view.
pub fn discover(t: &Topology, ra: &RoleAssignment) -> BTreeMap<NodeId, NodeState> {
    let mut states = BTreeMap::new();
    exchange_hellos(t, ra, &mut states);
    exchange_hellos(t, ra, &mut states);
    states
}

/// Lowest-ID clustering. Repeatedly the lowest undecided node becomes a head
/// (it is the minimum of its closed undecided neighborhood) and claims its
/// undecided neighbors as members.
pub fn elect_heads(t: &Topology) -> Result<RoleAssignment, ElectionError> {
    let comps = t.components().len();
    if comps > 1 {
        return Err(ElectionError::DisconnectedTopology(comps));
    }
    let mut ra = RoleAssignment::default();
    for u in t.nodes() {
        if ra.roles.contains_key(&u) {
            continue;
        }
        let cid = ClusterId(u);
        ra.roles.insert(u, (Role::Head, cid));
        for &v in t.neighbors(u)? {
            ra.roles.entry(v).or_insert((Role::Member, cid));
        }
    }
    Ok(ra)
}

/// Re-tags as gateway every member with a neighbor in a different cluster.
pub fn identify_gateways(t: &Topology, ra: &RoleAssignment) -> RoleAssignment {
    let mut out = ra.clone();
    for (&u, &(role, cid)) in &ra.roles {
        if role != Role::Member {
            continue;
        }
        let foreign = t
            .neighbors(u)
            .map(|ns| ns.iter().any(|v| ra.cluster(*v).is_some_and(|c| c != cid)))
            .unwrap_or(false);
        if foreign {
            out.roles.insert(u, (Role::Gateway, cid));
        }
    }
    out
}

/// The set D = heads ∪ gateways, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominatingSet {
    pub members: NodeSet,
}

impl DominatingSet {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, u: NodeId) -> bool {
        self.members.contains(&u)
    }
}

pub fn build_dominating_set(t: &Topology, ra: &RoleAssignment) -> Result<DominatingSet, ElectionError> {
    let mut members = ra.heads();
    members.extend(ra.gateways());
    for u in t.nodes() {
        let covered = members.contains(&u) || t.neighbors(u)?.iter().any(|v| members.contains(v));
        if !covered {
            return Err(ElectionError::DominationViolated(u));
        }
    }
    Ok(DominatingSet { members })
}

/// Everything phase 1 produces.
#[derive(Debug, Clone)]
pub struct Phase1 {
    pub roles: RoleAssignment,
    pub dominating_set: DominatingSet,
    pub states: BTreeMap<NodeId, NodeState>,
}

/// HELLO discovery, election, gateways and D in one call.
pub fn run_phase1(t: &Topology) -> Result<Phase1, ElectionError> {
    let elected = elect_heads(t)?;
    let roles = identify_gateways(t, &elected);
    let dominating_set = build_dominating_set(t, &roles)?;
    let states = discover(t, &roles);
    Ok(Phase1 { roles, dominating_set, states })
}
