//! Cluster maintenance under mobility: local updates (heads leaving or
//! joining a council) versus global re-formation.
//!
//! A cluster is re-formed when more than n − k of its heads have left since
//! formation (fewer than k would remain to serve the secret) or when too many
//! of its gateways are gone. Everything smaller is handled locally.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net_graph::{NodeId, Position, Topology};
use crate::phase1::{run_phase1, ClusterId, ElectionError, Role};
use crate::phase2::{cluster_form, FormationError, Partition};
use crate::threshold::choose_threshold;

pub const DEFAULT_GATEWAY_THRESHOLD: f64 = 0.5;
/// Consecutive HELLO rounds a link change must persist before it is believed.
pub const MISSED_HELLOS_TO_DEPART: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaintenanceError {
    #[error("unknown cluster {0}")]
    UnknownCluster(ClusterId),
    #[error("node {0} is not assigned to any cluster")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Election(#[from] ElectionError),
    #[error(transparent)]
    Formation(#[from] FormationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MobilityEventKind {
    LinkUp { peer: NodeId },
    LinkDown { peer: NodeId },
    PositionUpdate { to: Position },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityEvent {
    pub round: u64,
    pub node: NodeId,
    #[serde(flatten)]
    pub kind: MobilityEventKind,
}

/// Link differences between two snapshots, ordered by (node, peer), one event
/// per undirected link reported from its lower endpoint.
pub fn diff_links(round: u64, before: &Topology, after: &Topology) -> Vec<MobilityEvent> {
    let old: BTreeSet<_> = before.edges().collect();
    let new: BTreeSet<_> = after.edges().collect();
    let mut events: Vec<MobilityEvent> = old
        .difference(&new)
        .map(|&(a, b)| MobilityEvent { round, node: a, kind: MobilityEventKind::LinkDown { peer: b } })
        .chain(
            new.difference(&old)
                .map(|&(a, b)| MobilityEvent { round, node: a, kind: MobilityEventKind::LinkUp { peer: b } }),
        )
        .collect();
    events.sort_by_key(|e| {
        let peer = match e.kind {
            MobilityEventKind::LinkUp { peer } | MobilityEventKind::LinkDown { peer } => peer,
            MobilityEventKind::PositionUpdate { .. } => e.node,
        };
        (e.node, peer)
    });
    events
}

/// The link set as the nodes believe it: a link appears or disappears only
/// after the radio state has disagreed with the belief for
/// [`MISSED_HELLOS_TO_DEPART`] consecutive HELLO rounds.
#[derive(Debug, Clone)]
pub struct LinkMonitor {
    confirmed: Topology,
    pending: BTreeMap<(NodeId, NodeId), u32>,
    confirm_after: u32,
}

impl LinkMonitor {
    pub fn new(initial: Topology) -> Self {
        Self { confirmed: initial, pending: BTreeMap::new(), confirm_after: MISSED_HELLOS_TO_DEPART }
    }

    pub fn confirmed(&self) -> &Topology {
        &self.confirmed
    }

    /// Feeds one HELLO round worth of radio state. Returns the confirmed link
    /// changes, applied all at once.
    pub fn observe(&mut self, round: u64, radio: &Topology) -> Vec<MobilityEvent> {
        let believed: BTreeSet<_> = self.confirmed.edges().collect();
        let actual: BTreeSet<_> = radio.edges().collect();
        let disagreeing: BTreeSet<_> = believed.symmetric_difference(&actual).copied().collect();
        self.pending.retain(|e, _| disagreeing.contains(e));
        let mut flip = Vec::new();
        for e in disagreeing {
            let c = self.pending.entry(e).or_insert(0);
            *c += 1;
            if *c >= self.confirm_after {
                flip.push(e);
            }
        }
        if flip.is_empty() {
            return Vec::new();
        }
        let before = self.confirmed.clone();
        for (a, b) in flip {
            self.pending.remove(&(a, b));
            self.confirmed = if believed.contains(&(a, b)) {
                self.confirmed.without_edge(a, b)
            } else {
                self.confirmed.with_edge(a, b)
            }
            .expect("link endpoints exist in both snapshots");
        }
        diff_links(round, &before, &self.confirmed)
    }

    /// Accepts the radio state wholesale (after a full re-formation).
    pub fn reset(&mut self, radio: Topology) {
        self.confirmed = radio;
        self.pending.clear();
    }
}

/// Change counters for one cluster since it was formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterHealth {
    pub cluster_id: ClusterId,
    /// Head count the trigger math is based on: council size at formation plus
    /// heads admitted since.
    pub n0: usize,
    pub k: usize,
    pub heads_departed: usize,
    pub heads_joined: usize,
    pub members_departed: usize,
    pub members_joined: usize,
    pub gateways_at_formation: usize,
    pub gateways_lost: usize,
}

impl ClusterHealth {
    pub fn new(cluster_id: ClusterId, n0: usize, k: usize, gateways: usize) -> Self {
        Self {
            cluster_id,
            n0,
            k,
            heads_departed: 0,
            heads_joined: 0,
            members_departed: 0,
            members_joined: 0,
            gateways_at_formation: gateways,
            gateways_lost: 0,
        }
    }

    pub fn gateways_lost_fraction(&self) -> f64 {
        if self.gateways_at_formation == 0 {
            0.0
        } else {
            self.gateways_lost as f64 / self.gateways_at_formation as f64
        }
    }

    pub fn changed(&self) -> bool {
        self.heads_departed + self.heads_joined + self.members_departed + self.members_joined + self.gateways_lost > 0
    }

    pub fn apply(&mut self, delta: &HealthDelta) {
        match delta.role {
            Role::Head => self.heads_departed += 1,
            Role::Gateway => {
                self.gateways_lost += 1;
                self.members_departed += 1;
            }
            _ => self.members_departed += 1,
        }
    }

    /// Records an arrival. A new head raises the baseline and the threshold.
    pub fn record_join(&mut self, action: ShareAction, new_k: usize) {
        match action {
            ShareAction::IssueNewShare => {
                self.heads_joined += 1;
                self.n0 += 1;
                self.k = new_k;
            }
            ShareAction::MemberOnly => self.members_joined += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    None,
    LocalUpdate,
    Reform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaintenanceDecision {
    pub action: Action,
}

/// Re-form iff more than n − k heads have departed or the lost-gateway ratio
/// exceeds `gateway_threshold`; local update on any other change.
pub fn classify_change(h: &ClusterHealth, gateway_threshold: f64) -> MaintenanceDecision {
    let action = if h.heads_departed > h.n0.saturating_sub(h.k)
        || h.gateways_lost_fraction() > gateway_threshold
    {
        Action::Reform
    } else if h.changed() {
        Action::LocalUpdate
    } else {
        Action::None
    };
    MaintenanceDecision { action }
}

/// What the council must do about a node that entered its cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareAction {
    IssueNewShare,
    MemberOnly,
}

/// Admits `node` into cluster `visiting`, detaching it from any other cluster
/// first. It joins the council iff it is linked to every current head, is not
/// a gateway, and has no link to another cluster's head. On a council join the
/// threshold is recomputed for the new size.
pub fn handle_visitor(
    t: &Topology,
    p: &Partition,
    node: NodeId,
    visiting: ClusterId,
) -> Result<(Partition, ShareAction), MaintenanceError> {
    let target = p.cluster(visiting).ok_or(MaintenanceError::UnknownCluster(visiting))?;
    let was_gateway = p.role_of(node) == Some(Role::Gateway);
    let linked_to_all = !target.heads().is_empty()
        && target.heads().iter().all(|&h| h != node && t.adjacent(node, h));
    let foreign_head = p
        .clusters
        .iter()
        .filter(|c| c.id() != visiting)
        .flat_map(|c| c.heads().iter())
        .any(|&h| h != node && t.adjacent(node, h));
    let joins = linked_to_all && !was_gateway && !foreign_head;

    let mut out = p.clone();
    detach(&mut out, node);
    let cluster = out.cluster_mut(visiting).expect("checked above");
    let action = if joins {
        cluster.council.heads.insert(node);
        cluster.k = choose_threshold(cluster.n()).expect("council non-empty").k;
        ShareAction::IssueNewShare
    } else {
        cluster.members.insert(node);
        ShareAction::MemberOnly
    };
    out.reindex();
    Ok((out, action))
}

fn detach(p: &mut Partition, node: NodeId) -> Option<(ClusterId, Role)> {
    let mut found = None;
    for c in &mut p.clusters {
        let role = c.role_of(node);
        if let Some(role) = role {
            c.council.heads.remove(&node);
            c.members.remove(&node);
            c.gateways.remove(&node);
            found.get_or_insert((c.id(), role));
        }
    }
    found
}

/// Bookkeeping produced by one departure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthDelta {
    pub cluster_id: ClusterId,
    pub node: NodeId,
    pub role: Role,
    /// The departed node held a share that must no longer be used.
    pub share_revoked: bool,
}

/// Removes `node` from its host cluster.
pub fn handle_departure(p: &Partition, node: NodeId) -> Result<(Partition, HealthDelta), MaintenanceError> {
    let mut out = p.clone();
    let (cluster_id, role) = detach(&mut out, node).ok_or(MaintenanceError::UnknownNode(node))?;
    out.reindex();
    Ok((
        out,
        HealthDelta { cluster_id, node, role, share_revoked: role == Role::Head },
    ))
}

/// Nodes that have left their cluster in `t`: heads that broke the council
/// clique (the head missing most links goes first, ties to the higher NID) and
/// members or gateways no longer linked to any remaining head.
pub fn find_departures(t: &Topology, p: &Partition) -> Vec<NodeId> {
    let mut out = Vec::new();
    for c in &p.clusters {
        let mut heads: Vec<NodeId> = c.heads().iter().copied().filter(|&h| t.contains(h)).collect();
        out.extend(c.heads().iter().filter(|h| !t.contains(**h)));
        loop {
            let missing = |a: NodeId, hs: &[NodeId]| hs.iter().filter(|&&b| b != a && !t.adjacent(a, b)).count();
            let worst = heads
                .iter()
                .map(|&a| (missing(a, &heads), a))
                .filter(|&(m, _)| m > 0)
                .max();
            match worst {
                Some((_, a)) => {
                    heads.retain(|&h| h != a);
                    out.push(a);
                }
                None => break,
            }
        }
        for &u in c.members.union(&c.gateways) {
            if !heads.iter().any(|&h| t.adjacent(u, h)) {
                out.push(u);
            }
        }
    }
    out
}

/// Picks the cluster a detached node should enter: clusters whose whole
/// council it is linked to first, otherwise any cluster with a linked head;
/// lowest cluster id within each group.
pub fn choose_visiting_cluster(t: &Topology, p: &Partition, node: NodeId) -> Option<ClusterId> {
    let linked = |c: &&crate::phase2::Cluster| c.heads().iter().any(|&h| t.adjacent(node, h));
    let full = |c: &&crate::phase2::Cluster| c.heads().iter().all(|&h| t.adjacent(node, h));
    let mut candidates: Vec<_> = p.clusters.iter().filter(linked).collect();
    candidates.sort_by_key(|c| (!full(c), c.id()));
    candidates.first().map(|c| c.id())
}

/// Full re-formation: phase 1 and phase 2 on the current snapshot.
pub fn reform(t: &Topology) -> Result<Partition, MaintenanceError> {
    let p1 = run_phase1(t)?;
    Ok(cluster_form(t, &p1.dominating_set)?)
}

/// Health records for every cluster of a partition.
pub fn fresh_health(p: &Partition) -> BTreeMap<ClusterId, ClusterHealth> {
    p.clusters
        .iter()
        .map(|c| (c.id(), ClusterHealth::new(c.id(), c.n(), c.k, c.gateways.len())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::net_graph::ids;
    use crate::phase2::verify_partition;

    fn health(n0: usize, k: usize, departed: usize) -> ClusterHealth {
        let mut h = ClusterHealth::new(ClusterId(NodeId(1)), n0, k, 1);
        h.heads_departed = departed;
        h
    }

    #[test]
    fn classify_boundaries() {
        let t = DEFAULT_GATEWAY_THRESHOLD;
        assert_eq!(classify_change(&health(3, 2, 1), t).action, Action::LocalUpdate);
        assert_eq!(classify_change(&health(3, 2, 2), t).action, Action::Reform);
        assert_eq!(classify_change(&health(3, 2, 0), t).action, Action::None);
        assert_eq!(classify_change(&health(5, 3, 2), t).action, Action::LocalUpdate);
        assert_eq!(classify_change(&health(5, 3, 3), t).action, Action::Reform);
        assert_eq!(classify_change(&health(1, 1, 1), t).action, Action::Reform);
    }

    #[test]
    fn classify_gateway_loss() {
        let mut h = ClusterHealth::new(ClusterId(NodeId(1)), 3, 2, 2);
        h.gateways_lost = 1;
        assert_eq!(classify_change(&h, 0.5).action, Action::LocalUpdate);
        h.gateways_lost = 2;
        assert_eq!(classify_change(&h, 0.5).action, Action::Reform);
        assert_eq!(classify_change(&h, 1.0).action, Action::LocalUpdate);
    }

    #[test]
    fn classify_is_monotone_in_departures() {
        for n0 in 1..8 {
            let k = choose_threshold(n0).unwrap().k;
            let mut last = Action::None;
            for d in 0..=n0 {
                let a = classify_change(&health(n0, k, d), 0.5).action;
                assert!(a >= last, "n0={n0} d={d}");
                last = a;
            }
        }
    }

    fn canonical_partition() -> (Topology, Partition) {
        let t = fixtures::canonical();
        let p = reform(&t).unwrap();
        (t, p)
    }

    #[test]
    fn visitor_linked_to_whole_council_joins() {
        // node 8 linked to 1, 3 and 5
        let (t, p) = canonical_partition();
        let t = Topology::from_edges(
            t.nodes().chain([NodeId(8)]),
            t.edges().chain([1, 3, 5].map(|h| (NodeId(8), NodeId(h)))),
        )
        .unwrap();
        let cid = ClusterId(NodeId(1));
        let (p2, action) = handle_visitor(&t, &p, NodeId(8), cid).unwrap();
        assert_eq!(action, ShareAction::IssueNewShare);
        let c = p2.cluster(cid).unwrap();
        assert_eq!((c.n(), c.k), (4, 3));
        assert!(verify_partition(&t, &p2).is_empty());
    }

    #[test]
    fn visitor_linked_to_one_head_is_member() {
        let (t, p) = canonical_partition();
        let t = Topology::from_edges(
            t.nodes().chain([NodeId(8)]),
            t.edges().chain([(NodeId(8), NodeId(3))]),
        )
        .unwrap();
        let (p2, action) = handle_visitor(&t, &p, NodeId(8), ClusterId(NodeId(1))).unwrap();
        assert_eq!(action, ShareAction::MemberOnly);
        assert!(p2.cluster(ClusterId(NodeId(1))).unwrap().members.contains(&NodeId(8)));
        assert!(verify_partition(&t, &p2).is_empty());
    }

    #[test]
    fn gateway_visitor_stays_member() {
        // gateway 4 gains links to the whole council {1,3,5}
        let (t, p) = canonical_partition();
        let t = t.with_edge(NodeId(4), NodeId(1)).unwrap().with_edge(NodeId(4), NodeId(3)).unwrap();
        let (_, action) = handle_visitor(&t, &p, NodeId(4), ClusterId(NodeId(1))).unwrap();
        assert_eq!(action, ShareAction::MemberOnly);
    }

    #[test]
    fn visitor_into_unknown_cluster() {
        let (t, p) = canonical_partition();
        assert_eq!(
            handle_visitor(&t, &p, NodeId(2), ClusterId(NodeId(9))).unwrap_err(),
            MaintenanceError::UnknownCluster(ClusterId(NodeId(9)))
        );
    }

    #[test]
    fn departure_bookkeeping() {
        let (_, p) = canonical_partition();
        let mut h = fresh_health(&p)[&ClusterId(NodeId(1))].clone();

        let (p2, d) = handle_departure(&p, NodeId(3)).unwrap();
        assert_eq!(d.role, Role::Head);
        assert!(d.share_revoked);
        h.apply(&d);
        assert_eq!((h.n0, h.heads_departed), (3, 1));
        assert_eq!(p2.cluster(ClusterId(NodeId(1))).unwrap().n(), 2);
        assert_eq!(p2.cluster_of(NodeId(3)), None);

        let (_, d) = handle_departure(&p2, NodeId(2)).unwrap();
        assert_eq!(d.role, Role::Member);
        h.apply(&d);
        assert_eq!(h.heads_departed, 1);

        let (_, d) = handle_departure(&p2, NodeId(4)).unwrap();
        h.apply(&d);
        assert_eq!(h.gateways_lost_fraction(), 1.0);

        assert_eq!(
            handle_departure(&p2, NodeId(3)).unwrap_err(),
            MaintenanceError::UnknownNode(NodeId(3))
        );
    }

    #[test]
    fn reform_is_deterministic() {
        let (t, p) = canonical_partition();
        assert_eq!(reform(&t).unwrap(), p);
    }

    #[test]
    fn reform_after_losing_council_link() {
        let t = fixtures::canonical().without_edge(NodeId(3), NodeId(5)).unwrap();
        let p = reform(&t).unwrap();
        let heads = &p.clusters[0].council.heads;
        assert_eq!(heads.len(), 2);
        assert_eq!(*heads, ids(&[1, 5]));
        assert!(verify_partition(&t, &p).is_empty());
    }

    #[test]
    fn reform_rejects_split_topology() {
        let t = fixtures::canonical().without_edge(NodeId(4), NodeId(5)).unwrap();
        assert!(matches!(
            reform(&t),
            Err(MaintenanceError::Election(ElectionError::DisconnectedTopology(2)))
        ));
    }

    #[test]
    fn departures_from_broken_council() {
        let (t, p) = canonical_partition();
        // 5 loses both council links and leaves; gateway 4 only reached head 5
        let t2 = t.without_edge(NodeId(5), NodeId(1)).unwrap().without_edge(NodeId(5), NodeId(3)).unwrap();
        assert_eq!(find_departures(&t2, &p), vec![NodeId(5), NodeId(4)]);
        // a single broken link: tie broken towards the higher NID
        let t3 = t.without_edge(NodeId(3), NodeId(5)).unwrap();
        assert_eq!(find_departures(&t3, &p), vec![NodeId(5), NodeId(4)]);
        // member 2 cut off from every head
        let t4 = t.without_edge(NodeId(1), NodeId(2)).unwrap();
        assert_eq!(find_departures(&t4, &p), vec![NodeId(2)]);
        assert!(find_departures(&t, &p).is_empty());
    }

    #[test]
    fn link_monitor_needs_two_rounds() {
        let t = fixtures::canonical();
        let mut mon = LinkMonitor::new(t.clone());
        let cut = t.without_edge(NodeId(1), NodeId(2)).unwrap();
        assert!(mon.observe(1, &cut).is_empty());
        assert_eq!(mon.confirmed(), &t);
        let ev = mon.observe(2, &cut);
        assert_eq!(
            ev,
            vec![MobilityEvent { round: 2, node: NodeId(1), kind: MobilityEventKind::LinkDown { peer: NodeId(2) } }]
        );
        assert_eq!(mon.confirmed(), &cut);
        // a flap shorter than two rounds is never believed
        assert!(mon.observe(3, &t).is_empty());
        assert!(mon.observe(4, &cut).is_empty());
        assert_eq!(mon.confirmed(), &cut);
    }

    #[test]
    fn visiting_cluster_choice() {
        let (t, p) = canonical_partition();
        let (p2, _) = handle_departure(&p, NodeId(2)).unwrap();
        assert_eq!(choose_visiting_cluster(&t, &p2, NodeId(2)), Some(ClusterId(NodeId(1))));
        let t2 = t.without_edge(NodeId(1), NodeId(2)).unwrap();
        assert_eq!(choose_visiting_cluster(&t2, &p2, NodeId(2)), None);
    }
}
