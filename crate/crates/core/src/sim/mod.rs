//! Round-based simulator: mobility, HELLO rounds, cluster maintenance, share
//! lifecycle, a static adversary and per-round metrics.

pub mod ledger;
pub mod mobility;
pub mod scenario;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::PrimeField;
use crate::maintenance::{
    choose_visiting_cluster, classify_change, find_departures, fresh_health, handle_departure, handle_visitor,
    reform, Action, ClusterHealth, LinkMonitor, MaintenanceError, MobilityEvent, MobilityEventKind, ShareAction,
};
use crate::net_graph::{random_connected_unit_disk, NodeId, NodeSet, Position, Topology};
use crate::phase1::ClusterId;
use crate::phase2::{verify_partition, Partition};
use crate::threshold::ShareError;

pub use ledger::{audit_secrecy, Adversary, AuditResult, ClusterAudit, SecretRecord, ShareLedger};
pub use mobility::{random_walk, Walker};
pub use scenario::{load_scenario, LinkChange, NodeSpec, Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Maintenance(#[from] MaintenanceError),
    #[error(transparent)]
    Share(#[from] ShareError),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("state dump error: {0}")]
    Dump(#[from] serde_json::Error),
}

/// Fixed metrics column order.
pub const CSV_COLUMNS: [&str; 9] = [
    "round",
    "cluster_count",
    "mean_council",
    "min_council",
    "max_council",
    "updates",
    "reforms",
    "hellos",
    "secrecy_ok",
];

/// One metrics row, written after every simulated round. Counters are
/// cumulative since initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: u64,
    pub cluster_count: usize,
    pub mean_council: String,
    pub min_council: usize,
    pub max_council: usize,
    pub updates: u64,
    pub reforms: u64,
    pub hellos: u64,
    pub secrecy_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub hello_rounds: u64,
    pub halted: Option<String>,
}

impl MetricsReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SimError> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(CSV_COLUMNS)?;
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// One maintenance verdict, as emitted to the decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub round: u64,
    /// `None` for network-wide re-formations not caused by one cluster.
    pub cluster_id: Option<ClusterId>,
    pub action: Action,
    pub trigger: String,
    pub heads_departed: usize,
    pub n0: usize,
    pub k: usize,
    pub gateways_lost_fraction: f64,
}

/// Serializable snapshot used by the `audit` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDump {
    pub round: u64,
    pub partition: Partition,
    pub ledger: ShareLedger,
    pub adversary: Adversary,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub scenario: Scenario,
    pub round: u64,
    pub field: PrimeField,
    rng: ChaCha8Rng,
    walkers: BTreeMap<NodeId, Walker>,
    /// Links as the radios see them this round.
    pub radio: Topology,
    /// Links as the nodes believe them (changes need two HELLO rounds).
    pub links: LinkMonitor,
    pub partition: Partition,
    pub health: BTreeMap<ClusterId, ClusterHealth>,
    pub ledger: ShareLedger,
    pub adversary: Adversary,
    pub updates: u64,
    pub reforms: u64,
    pub hellos: u64,
    pub hello_rounds: u64,
    pub rows: Vec<MetricsRow>,
    pub decisions: Vec<DecisionRecord>,
    pub events: Vec<MobilityEvent>,
    /// Partition invariant failures that no re-formation covered.
    pub violations: Vec<String>,
    /// Secrecy audit disagreements.
    pub anomalies: Vec<String>,
    pub halted: Option<String>,
}

impl SimState {
    /// Builds the initial topology and runs both clustering phases, then deals
    /// one secret per cluster.
    pub fn initialize(scenario: &Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let field = scenario.field();
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let radio = scenario.initial_topology();
        let partition = reform(&radio)?;
        let mut ledger = ShareLedger::new(field);
        ledger.deal(&partition, &mut rng)?;
        let walkers = scenario
            .nodes
            .iter()
            .filter_map(|n| {
                n.position.map(|[x, y]| {
                    let wps = n.waypoints.iter().map(|&[x, y]| Position::new(x, y)).collect();
                    (n.nid, Walker::new(Position::new(x, y), wps, n.speed))
                })
            })
            .collect();
        Ok(Self {
            scenario: scenario.clone(),
            round: 0,
            field,
            rng,
            walkers,
            links: LinkMonitor::new(radio.clone()),
            health: fresh_health(&partition),
            hellos: 2 * radio.len() as u64,
            radio,
            partition,
            ledger,
            adversary: Adversary::default(),
            updates: 0,
            reforms: 0,
            hello_rounds: 0,
            rows: Vec::new(),
            decisions: Vec::new(),
            events: Vec::new(),
            violations: Vec::new(),
            anomalies: Vec::new(),
            halted: None,
        })
    }

    pub fn finished(&self) -> bool {
        self.halted.is_some() || self.round >= self.scenario.rounds
    }

    /// Simulates one round: movement, HELLO exchange and maintenance,
    /// scheduled refresh and compromise, then the audit and a metrics row.
    pub fn step(&mut self) {
        if self.finished() {
            return;
        }
        self.round += 1;
        let round = self.round;
        self.move_nodes();

        if round.is_multiple_of(self.scenario.hello_interval_rounds) {
            self.hello_rounds += 1;
            self.hellos += self.radio.len() as u64;
            let changes = self.links.observe(round, &self.radio);
            if !changes.is_empty() {
                self.events.extend(changes);
                self.maintain();
            }
        }

        if self.halted.is_none() {
            if self.scenario.refresh_interval().is_some_and(|r| round.is_multiple_of(r)) {
                if let Err(e) = self.ledger.refresh_all(&mut self.rng) {
                    self.violations.push(format!("round {round}: refresh failed: {e}"));
                }
                self.adversary.absorb(&self.ledger);
            }
            if let Some(adv) = self.scenario.adversary.clone() {
                if adv.compromise_round == round {
                    let nodes: NodeSet = adv.nodes.iter().copied().collect();
                    self.compromise(&nodes).expect("adversary targets validated");
                }
            }
            let v = verify_partition(self.links.confirmed(), &self.partition);
            if !v.is_empty() {
                self.violations
                    .extend(v.iter().map(|x| format!("round {round}: {x}")));
            }
        }

        let audit = self.audit_secrecy();
        self.anomalies
            .extend(audit.anomalies().iter().map(|a| format!("round {round}: {a}")));
        self.push_row(audit.secrecy_ok());
    }

    fn move_nodes(&mut self) {
        let round = self.round;
        if self.scenario.is_edge_list() {
            let mut t = self.radio.clone();
            for ev in self.scenario.link_events.iter().filter(|e| e.round == round) {
                t = match ev.change {
                    LinkChange::Up => t.with_edge(ev.a, ev.b),
                    LinkChange::Down => t.without_edge(ev.a, ev.b),
                }
                .expect("link events validated");
            }
            self.radio = t;
            return;
        }
        let mut moved = false;
        for (&nid, w) in &mut self.walkers {
            if w.advance() {
                moved = true;
                self.events.push(MobilityEvent {
                    round,
                    node: nid,
                    kind: MobilityEventKind::PositionUpdate { to: w.position },
                });
            }
        }
        if moved {
            self.radio = Topology::from_positions(
                self.walkers.iter().map(|(&n, w)| (n, w.position)),
                self.scenario.radius,
            )
            .expect("validated scenario");
        }
    }

    /// Local maintenance on the believed topology; escalates to a full
    /// re-formation when a cluster's trigger fires or the partition cannot be
    /// repaired locally.
    fn maintain(&mut self) {
        let t = self.links.confirmed().clone();
        let mut forced: Option<String> = None;

        loop {
            let leaving = find_departures(&t, &self.partition);
            if leaving.is_empty() {
                break;
            }
            for u in leaving {
                let Ok((p, delta)) = handle_departure(&self.partition, u) else { continue };
                self.partition = p;
                if let Some(h) = self.health.get_mut(&delta.cluster_id) {
                    h.apply(&delta);
                }
                if delta.share_revoked {
                    self.ledger.revoke(delta.cluster_id, u);
                }
            }
        }

        let homeless: Vec<NodeId> = t.nodes().filter(|u| !self.partition.node_index.contains_key(u)).collect();
        for u in homeless {
            let Some(cid) = choose_visiting_cluster(&t, &self.partition, u) else { continue };
            let (p, action) = match handle_visitor(&t, &self.partition, u, cid) {
                Ok(r) => r,
                Err(e) => {
                    forced.get_or_insert(format!("visitor {u}: {e}"));
                    continue;
                }
            };
            let new_k = p.cluster(cid).map_or(1, |c| c.k);
            self.partition = p;
            if let Some(h) = self.health.get_mut(&cid) {
                h.record_join(action, new_k);
            }
            if action == ShareAction::IssueNewShare {
                if let Err(e) = self.ledger.admit(cid, u, new_k, &mut self.rng) {
                    forced.get_or_insert(format!("share issuance for {u} failed: {e}"));
                }
                self.adversary.absorb(&self.ledger);
            }
        }

        let threshold = self.scenario.gateway_threshold();
        let mut any_local = false;
        let mut any_reform = false;
        for h in self.health.values() {
            let d = classify_change(h, threshold);
            if d.action == Action::None {
                continue;
            }
            any_local |= d.action == Action::LocalUpdate;
            any_reform |= d.action == Action::Reform;
            let trigger = match d.action {
                Action::Reform if h.heads_departed > h.n0.saturating_sub(h.k) => "heads_departed",
                Action::Reform => "gateways_lost",
                _ => "local_change",
            };
            self.decisions.push(DecisionRecord {
                round: self.round,
                cluster_id: Some(h.cluster_id),
                action: d.action,
                trigger: trigger.into(),
                heads_departed: h.heads_departed,
                n0: h.n0,
                k: h.k,
                gateways_lost_fraction: h.gateways_lost_fraction(),
            });
        }

        if !any_reform && forced.is_none() {
            if let Some(v) = verify_partition(&t, &self.partition).first() {
                forced = Some(format!("invariant: {v}"));
            }
        }
        if any_reform || forced.is_some() {
            if let Some(reason) = forced {
                self.decisions.push(DecisionRecord {
                    round: self.round,
                    cluster_id: None,
                    action: Action::Reform,
                    trigger: reason,
                    heads_departed: 0,
                    n0: 0,
                    k: 0,
                    gateways_lost_fraction: 0.0,
                });
            }
            self.reform_all();
        } else if any_local {
            self.updates += 1;
        }
    }

    fn reform_all(&mut self) {
        self.reforms += 1;
        self.hellos += 2 * self.radio.len() as u64;
        self.links.reset(self.radio.clone());
        match reform(&self.radio) {
            Ok(p) => {
                self.partition = p;
                self.health = fresh_health(&self.partition);
                if let Err(e) = self.ledger.deal(&self.partition, &mut self.rng) {
                    self.violations.push(format!("round {}: re-split failed: {e}", self.round));
                }
                self.adversary.absorb(&self.ledger);
            }
            Err(e) => {
                let msg = format!("round {}: re-formation failed: {e}", self.round);
                self.violations.push(msg.clone());
                self.halted = Some(msg);
            }
        }
    }

    /// Marks nodes compromised; the adversary copies every share they hold
    /// now and at every later epoch.
    pub fn compromise(&mut self, nodes: &NodeSet) -> Result<(), SimError> {
        if let Some(&u) = nodes.iter().find(|u| !self.radio.contains(**u)) {
            return Err(SimError::UnknownNode(u));
        }
        self.adversary.compromise(nodes, &self.ledger);
        Ok(())
    }

    pub fn audit_secrecy(&self) -> AuditResult {
        audit_secrecy(&self.ledger, &self.adversary)
    }

    fn push_row(&mut self, secrecy_ok: bool) {
        let sizes = self.partition.council_sizes();
        let mean = if sizes.is_empty() { 0.0 } else { sizes.iter().sum::<usize>() as f64 / sizes.len() as f64 };
        self.rows.push(MetricsRow {
            round: self.round,
            cluster_count: sizes.len(),
            mean_council: format!("{mean:.3}"),
            min_council: sizes.iter().copied().min().unwrap_or(0),
            max_council: sizes.iter().copied().max().unwrap_or(0),
            updates: self.updates,
            reforms: self.reforms,
            hellos: self.hellos,
            secrecy_ok,
        });
    }

    pub fn run_to_end(&mut self) {
        while !self.finished() {
            self.step();
        }
    }

    pub fn report(&self) -> MetricsReport {
        MetricsReport { rows: self.rows.clone(), hello_rounds: self.hello_rounds, halted: self.halted.clone() }
    }

    pub fn dump(&self) -> StateDump {
        StateDump {
            round: self.round,
            partition: self.partition.clone(),
            ledger: self.ledger.clone(),
            adversary: self.adversary.clone(),
        }
    }

    /// Process exit status: 0 clean, 1 on any invariant violation or audit
    /// anomaly.
    pub fn exit_code(&self) -> i32 {
        if self.violations.is_empty() && self.anomalies.is_empty() {
            0
        } else {
            1
        }
    }
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: MetricsReport,
    pub exit_code: i32,
    pub state: SimState,
}

/// Simulates a scenario to the end (or until it halts).
pub fn simulate(scenario: &Scenario) -> Result<RunOutcome, SimError> {
    let mut state = SimState::initialize(scenario)?;
    state.run_to_end();
    Ok(RunOutcome { report: state.report(), exit_code: state.exit_code(), state })
}

/// Loads a scenario, simulates it and writes the metrics CSV.
pub fn run(scenario_path: impl AsRef<Path>, output_path: impl AsRef<Path>) -> Result<RunOutcome, SimError> {
    let scenario = load_scenario(scenario_path)?;
    let outcome = simulate(&scenario)?;
    let file = std::fs::File::create(output_path)?;
    outcome.report.write_csv(std::io::BufWriter::new(file))?;
    Ok(outcome)
}

/// Random connected unit-disk scenario. With `speed > 0` each node gets a
/// random-walk itinerary inside the initial bounding box.
pub fn random_scenario(seed: u64, n: usize, radius: f64, rounds: u64, speed: f64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = random_connected_unit_disk(n, radius, &mut rng);
    let pos = t.positions();
    let lo = Position::new(
        pos.values().map(|p| p.x).fold(f64::INFINITY, f64::min),
        pos.values().map(|p| p.y).fold(f64::INFINITY, f64::min),
    );
    let hi = Position::new(
        pos.values().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
        pos.values().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
    );
    let nodes = pos
        .iter()
        .map(|(&nid, &p)| {
            let waypoints = if speed > 0.0 {
                let legs = rng.gen_range(1..4);
                random_walk(p, legs, radius, (lo, hi), &mut rng)
                    .into_iter()
                    .map(|q| [q.x, q.y])
                    .collect()
            } else {
                Vec::new()
            };
            NodeSpec { nid, position: Some([p.x, p.y]), waypoints, speed }
        })
        .collect();
    Scenario {
        seed,
        radius,
        hello_interval_rounds: 1,
        rounds,
        nodes,
        edges: None,
        link_events: Vec::new(),
        adversary: None,
        field_prime: None,
        gateway_threshold: None,
        refresh_interval_rounds: None,
    }
}
