//! Undirected network graph model.
//!
//! A [`Topology`] is an immutable snapshot of the network: the node set, the
//! bi-directional links between them and (optionally) node positions. It can be
//! derived from positions with the unit-disk rule or built from an explicit edge
//! list, which is how hand-drawn fixture topologies are encoded.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Node identity. Always positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

pub type NodeSet = BTreeSet<NodeId>;

/// Planar position in length units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("duplicate node id {0}")]
    DuplicateNid(NodeId),
    #[error("node id must be positive")]
    ZeroNid,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("transmission radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
}

/// Immutable network snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    adjacency: BTreeMap<NodeId, NodeSet>,
    positions: BTreeMap<NodeId, Position>,
    radius: Option<f64>,
}

impl Topology {
    /// Builds a unit-disk topology: `u` and `v` are linked iff their distance
    /// is at most `radius` (inclusive boundary).
    pub fn from_positions<I>(specs: I, radius: f64) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (NodeId, Position)>,
    {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GraphError::InvalidRadius(radius));
        }
        let mut positions = BTreeMap::new();
        for (nid, pos) in specs {
            if nid.0 == 0 {
                return Err(GraphError::ZeroNid);
            }
            if positions.insert(nid, pos).is_some() {
                return Err(GraphError::DuplicateNid(nid));
            }
        }
        let mut adjacency: BTreeMap<NodeId, NodeSet> =
            positions.keys().map(|&n| (n, NodeSet::new())).collect();
        let entries: Vec<_> = positions.iter().map(|(&n, &p)| (n, p)).collect();
        for (i, (u, pu)) in entries.iter().enumerate() {
            for (v, pv) in &entries[i + 1..] {
                if pu.distance(pv) <= radius {
                    adjacency.get_mut(u).unwrap().insert(*v);
                    adjacency.get_mut(v).unwrap().insert(*u);
                }
            }
        }
        Ok(Self {
            adjacency,
            positions,
            radius: Some(radius),
        })
    }

    /// Builds a topology from an explicit node list and undirected edge list.
    /// Repeated edges are merged.
    pub fn from_edges<N, E>(nodes: N, edges: E) -> Result<Self, GraphError>
    where
        N: IntoIterator<Item = NodeId>,
        E: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut adjacency: BTreeMap<NodeId, NodeSet> = BTreeMap::new();
        for nid in nodes {
            if nid.0 == 0 {
                return Err(GraphError::ZeroNid);
            }
            if adjacency.insert(nid, NodeSet::new()).is_some() {
                return Err(GraphError::DuplicateNid(nid));
            }
        }
        let mut t = Self {
            adjacency,
            positions: BTreeMap::new(),
            radius: None,
        };
        for (u, v) in edges {
            t.link(u, v)?;
        }
        Ok(t)
    }

    /// Attaches positions to an edge-list topology (used for reporting only).
    pub fn with_positions(mut self, positions: BTreeMap<NodeId, Position>) -> Result<Self, GraphError> {
        for nid in positions.keys() {
            self.check(*nid)?;
        }
        self.positions = positions;
        Ok(self)
    }

    fn link(&mut self, u: NodeId, v: NodeId) -> Result<(), GraphError> {
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        self.check(u)?;
        self.check(v)?;
        self.adjacency.get_mut(&u).unwrap().insert(v);
        self.adjacency.get_mut(&v).unwrap().insert(u);
        Ok(())
    }

    /// Returns a copy with the given link added.
    pub fn with_edge(&self, u: NodeId, v: NodeId) -> Result<Self, GraphError> {
        let mut t = self.clone();
        t.link(u, v)?;
        Ok(t)
    }

    /// Returns a copy with the given link removed (no-op if absent).
    pub fn without_edge(&self, u: NodeId, v: NodeId) -> Result<Self, GraphError> {
        self.check(u)?;
        self.check(v)?;
        let mut t = self.clone();
        t.adjacency.get_mut(&u).unwrap().remove(&v);
        t.adjacency.get_mut(&v).unwrap().remove(&u);
        Ok(t)
    }

    fn check(&self, u: NodeId) -> Result<(), GraphError> {
        if self.adjacency.contains_key(&u) {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(u))
        }
    }

    fn check_all<'a>(&self, s: impl IntoIterator<Item = &'a NodeId>) -> Result<(), GraphError> {
        s.into_iter().try_for_each(|u| self.check(*u))
    }

    pub fn contains(&self, u: NodeId) -> bool {
        self.adjacency.contains_key(&u)
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Nodes in ascending NID order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn node_set(&self) -> NodeSet {
        self.adjacency.keys().copied().collect()
    }

    /// Each undirected edge once, as `(low, high)`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency
            .iter()
            .flat_map(|(&u, ns)| ns.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn radius(&self) -> Option<f64> {
        self.radius
    }

    pub fn position(&self, u: NodeId) -> Option<Position> {
        self.positions.get(&u).copied()
    }

    pub fn positions(&self) -> &BTreeMap<NodeId, Position> {
        &self.positions
    }

    pub fn adjacent(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency.get(&u).is_some_and(|ns| ns.contains(&v))
    }

    /// The open neighborhood N(u).
    pub fn neighbors(&self, u: NodeId) -> Result<&NodeSet, GraphError> {
        self.adjacency.get(&u).ok_or(GraphError::UnknownNode(u))
    }

    /// The closed neighborhood N[u] = N(u) ∪ {u}.
    pub fn closed_neighbors(&self, u: NodeId) -> Result<NodeSet, GraphError> {
        let mut s = self.neighbors(u)?.clone();
        s.insert(u);
        Ok(s)
    }

    /// What `u` learns about its surroundings from its neighbors' tables.
    pub fn two_hop_view(&self, u: NodeId) -> Result<TwoHopView, GraphError> {
        let direct = self.neighbors(u)?.clone();
        let mut via: BTreeMap<NodeId, NodeSet> = BTreeMap::new();
        for &relay in &direct {
            for &w in &self.adjacency[&relay] {
                if w != u {
                    via.entry(w).or_default().insert(relay);
                }
            }
        }
        Ok(TwoHopView { owner: u, direct, via })
    }

    /// True iff every pair in `s` is linked. Sets of size ≤ 1 are cliques.
    pub fn is_clique(&self, s: &NodeSet) -> Result<bool, GraphError> {
        self.check_all(s)?;
        let v: Vec<_> = s.iter().copied().collect();
        Ok(v
            .iter()
            .enumerate()
            .all(|(i, &a)| v[i + 1..].iter().all(|&b| self.adjacent(a, b))))
    }

    /// True iff every node is in `d` or adjacent to a member of `d`.
    pub fn is_dominating_set(&self, d: &NodeSet) -> Result<bool, GraphError> {
        self.check_all(d)?;
        Ok(self
            .adjacency
            .iter()
            .all(|(u, ns)| d.contains(u) || ns.iter().any(|v| d.contains(v))))
    }

    /// True iff the graph has at most one connected component.
    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Connected components, each in ascending order, ordered by lowest member.
    pub fn components(&self) -> Vec<NodeSet> {
        let mut seen = NodeSet::new();
        let mut out = Vec::new();
        for &start in self.adjacency.keys() {
            if seen.contains(&start) {
                continue;
            }
            let mut comp = NodeSet::new();
            let mut stack = vec![start];
            seen.insert(start);
            while let Some(u) = stack.pop() {
                comp.insert(u);
                for &v in &self.adjacency[&u] {
                    if seen.insert(v) {
                        stack.push(v);
                    }
                }
            }
            out.push(comp);
        }
        out
    }
}

/// Two-hop neighborhood of a node as assembled from HELLO tables.
///
/// `via[w]` lists the direct neighbors that reported `w` in their own
/// neighbor table. A node can be both direct and two-hop (it closes a triangle
/// with the owner).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoHopView {
    pub owner: NodeId,
    pub direct: NodeSet,
    pub via: BTreeMap<NodeId, NodeSet>,
}

impl TwoHopView {
    /// Whether the owner can tell that `a` and `b` are linked. Only answerable
    /// when at least one of them is a direct neighbor or the owner itself.
    pub fn knows_link(&self, a: NodeId, b: NodeId) -> bool {
        if a == self.owner {
            return self.direct.contains(&b);
        }
        if b == self.owner {
            return self.direct.contains(&a);
        }
        self.via.get(&a).is_some_and(|r| r.contains(&b))
            || self.via.get(&b).is_some_and(|r| r.contains(&a))
    }

    /// Nodes at exactly two hops (reachable only through a relay).
    pub fn strictly_two_hop(&self) -> NodeSet {
        self.via
            .keys()
            .filter(|w| !self.direct.contains(w))
            .copied()
            .collect()
    }

    /// Triangles through the owner: a two-hop report of `w` by relay `v`
    /// where `w` is also a direct neighbor.
    pub fn triangles(&self) -> BTreeSet<[NodeId; 3]> {
        let mut out = BTreeSet::new();
        for (&w, relays) in &self.via {
            if !self.direct.contains(&w) {
                continue;
            }
            for &v in relays {
                let mut tri = [self.owner, v, w];
                tri.sort();
                out.insert(tri);
            }
        }
        out
    }
}

/// Random connected unit-disk graph: each new node is dropped within `radius`
/// of a uniformly chosen earlier node, so the result is always connected.
/// NIDs are `1..=n`.
pub fn random_connected_unit_disk<R: Rng>(n: usize, radius: f64, rng: &mut R) -> Topology {
    let mut pts: Vec<Position> = Vec::with_capacity(n);
    for i in 0..n {
        let p = if i == 0 {
            Position::new(0.0, 0.0)
        } else {
            let anchor = pts[rng.gen_range(0..i)];
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let dist = radius * rng.gen_range(0.05..0.95);
            Position::new(anchor.x + dist * angle.cos(), anchor.y + dist * angle.sin())
        };
        pts.push(p);
    }
    Topology::from_positions(
        pts.into_iter()
            .enumerate()
            .map(|(i, p)| (NodeId(i as u32 + 1), p)),
        radius,
    )
    .expect("generated ids are distinct and radius is positive")
}

#[cfg(test)]
pub(crate) fn ids(v: &[u32]) -> NodeSet {
    v.iter().copied().map(NodeId).collect()
}
