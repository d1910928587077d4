//! Scenario files (JSON).
//!
//! Two topology modes are supported. In position mode every node has a start
//! position and links follow the unit-disk rule with `radius`; nodes may walk
//! along waypoints. In edge-list mode the `edges` array fixes the initial
//! links and `link_events` may toggle them at given rounds.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{PrimeField, MERSENNE_61};
use crate::maintenance::DEFAULT_GATEWAY_THRESHOLD;
use crate::net_graph::{NodeId, Position, Topology};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub nid: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub waypoints: Vec<[f64; 2]>,
    /// Length units per round.
    #[serde(default)]
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub compromise_round: u64,
    pub nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkChange {
    Up,
    Down,
}

/// Scripted link toggle for edge-list scenarios, applied at the start of
/// `round`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkEventSpec {
    pub round: u64,
    pub change: LinkChange,
    pub a: NodeId,
    pub b: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_hello_interval")]
    pub hello_interval_rounds: u64,
    #[serde(default)]
    pub rounds: u64,
    pub nodes: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(NodeId, NodeId)>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub link_events: Vec<LinkEventSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<AdversarySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_prime: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gateway_threshold: Option<f64>,
    /// Proactive refresh period in rounds; 0 or absent disables periodic refresh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refresh_interval_rounds: Option<u64>,
}

fn default_radius() -> f64 {
    1.0
}

fn default_hello_interval() -> u64 {
    1
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn is_edge_list(&self) -> bool {
        self.edges.is_some()
    }

    pub fn field(&self) -> PrimeField {
        PrimeField::new(self.field_prime.unwrap_or(MERSENNE_61)).expect("validated")
    }

    pub fn gateway_threshold(&self) -> f64 {
        self.gateway_threshold.unwrap_or(DEFAULT_GATEWAY_THRESHOLD)
    }

    pub fn refresh_interval(&self) -> Option<u64> {
        self.refresh_interval_rounds.filter(|&r| r > 0)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Validation(m));
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if n.nid.0 == 0 {
                return bad("node ids must be positive".into());
            }
            if !seen.insert(n.nid) {
                return bad(format!("duplicate node id {}", n.nid));
            }
            if !(n.speed >= 0.0 && n.speed.is_finite()) {
                return bad(format!("node {}: speed must be a non-negative number", n.nid));
            }
            if !self.is_edge_list() && n.position.is_none() {
                return bad(format!("node {}: position required unless an edge list is given", n.nid));
            }
            let coords = n.position.iter().chain(&n.waypoints);
            if coords.flatten().any(|c| !c.is_finite()) {
                return bad(format!("node {}: coordinates must be finite", n.nid));
            }
            if self.is_edge_list() && !n.waypoints.is_empty() {
                return bad(format!("node {}: waypoints need position mode", n.nid));
            }
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return bad("radius must be positive".into());
        }
        if self.hello_interval_rounds == 0 {
            return bad("hello_interval_rounds must be at least 1".into());
        }
        let known = |u: &NodeId| seen.contains(u);
        for &(a, b) in self.edges.iter().flatten() {
            if !known(&a) || !known(&b) || a == b {
                return bad(format!("edge ({a}, {b}) must join two distinct declared nodes"));
            }
        }
        if !self.link_events.is_empty() && !self.is_edge_list() {
            return bad("link_events need an edge list".into());
        }
        for ev in &self.link_events {
            if !known(&ev.a) || !known(&ev.b) || ev.a == ev.b {
                return bad(format!("link event ({}, {}) must join two distinct declared nodes", ev.a, ev.b));
            }
        }
        if let Some(adv) = &self.adversary {
            if let Some(u) = adv.nodes.iter().find(|u| !known(u)) {
                return bad(format!("adversary targets unknown node {u}"));
            }
        }
        if let Some(p) = self.field_prime {
            let field = PrimeField::new(p).map_err(|e| ScenarioError::Validation(e.to_string()))?;
            let mut residues = BTreeMap::new();
            for n in &self.nodes {
                let x = field.reduce(n.nid.0 as u64);
                if x == 0 {
                    return bad(format!("node id {} is 0 mod field_prime {p}", n.nid));
                }
                if let Some(other) = residues.insert(x, n.nid) {
                    return bad(format!("node ids {other} and {} coincide mod field_prime {p}", n.nid));
                }
            }
        }
        if let Some(g) = self.gateway_threshold {
            if !(0.0..=1.0).contains(&g) {
                return bad("gateway_threshold must lie in [0, 1]".into());
            }
        }
        Ok(())
    }

    pub fn start_positions(&self) -> BTreeMap<NodeId, Position> {
        self.nodes
            .iter()
            .filter_map(|n| n.position.map(|[x, y]| (n.nid, Position::new(x, y))))
            .collect()
    }

    /// Topology at round 0.
    pub fn initial_topology(&self) -> Topology {
        match &self.edges {
            Some(edges) => Topology::from_edges(self.nodes.iter().map(|n| n.nid), edges.iter().copied())
                .and_then(|t| t.with_positions(self.start_positions()))
                .expect("validated"),
            None => Topology::from_positions(self.start_positions(), self.radius).expect("validated"),
        }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Scenario::from_json(&text)
}
