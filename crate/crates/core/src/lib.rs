//! Clustering for mobile ad hoc networks where each cluster is led by a
//! fully connected council of heads that share a cluster secret under a
//! (k, n) threshold scheme.
//!
//! Formation runs in two phases: lowest-ID head election with gateway
//! tagging (yielding a dominating set), then greedy council growth over that
//! set. Maintenance decides between local updates and full re-formation as
//! nodes move. The [`sim`] module drives everything in discrete rounds.

pub mod field;
pub mod fixtures;
pub mod maintenance;
pub mod net_graph;
pub mod phase1;
pub mod phase2;
pub mod sim;
pub mod threshold;

pub use field::PrimeField;
pub use net_graph::{NodeId, NodeSet, Position, Topology};
pub use phase1::{run_phase1, ClusterId, Role};
pub use phase2::{cluster_form, verify_partition, Cluster, Partition};
pub use threshold::{choose_threshold, reconstruct, split_secret, Secret, Share, ThresholdPolicy};
