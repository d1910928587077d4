//! Who holds which share of which cluster secret, what the adversary has
//! collected, and the secrecy audit over both.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::field::PrimeField;
use crate::net_graph::{NodeId, NodeSet};
use crate::phase1::ClusterId;
use crate::phase2::Partition;
use crate::threshold::{
    consistent_secrets, issue_share, reconstruct, refresh_shares, split_secret, x_for_node, Secret, Share,
    ShareError, ThresholdPolicy,
};

/// Largest field for which the audit enumerates polynomials.
pub const BRUTE_FORCE_MAX_PRIME: u64 = 17;

/// One cluster's current secret and its shares.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretRecord {
    pub secret_id: u64,
    pub cluster_id: ClusterId,
    pub secret: Secret,
    pub k: usize,
    pub epoch: u64,
    /// Shares of current council heads.
    pub live: BTreeMap<NodeId, Share>,
    /// Shares still held by heads that left; useless after the next refresh.
    pub revoked: BTreeMap<NodeId, Share>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareLedger {
    pub field: PrimeField,
    pub records: BTreeMap<ClusterId, SecretRecord>,
    next_secret_id: u64,
}

impl ShareLedger {
    pub fn new(field: PrimeField) -> Self {
        Self { field, records: BTreeMap::new(), next_secret_id: 0 }
    }

    /// Draws a fresh secret for every cluster and splits it over its council.
    pub fn deal<R: Rng + ?Sized>(&mut self, p: &Partition, rng: &mut R) -> Result<(), ShareError> {
        self.records.clear();
        for c in &p.clusters {
            let heads: Vec<NodeId> = c.heads().iter().copied().collect();
            let xs = heads
                .iter()
                .map(|&h| x_for_node(h, &self.field))
                .collect::<Result<Vec<_>, _>>()?;
            let secret = Secret(rng.gen_range(0..self.field.modulus()));
            let policy = ThresholdPolicy::new(heads.len(), c.k)?;
            let shares = split_secret(secret, policy, &xs, &self.field, rng)?;
            self.records.insert(
                c.id(),
                SecretRecord {
                    secret_id: self.next_secret_id,
                    cluster_id: c.id(),
                    secret,
                    k: c.k,
                    epoch: 0,
                    live: heads.into_iter().zip(shares).collect(),
                    revoked: BTreeMap::new(),
                },
            );
            self.next_secret_id += 1;
        }
        Ok(())
    }

    /// Moves a departed head's share out of the live set.
    pub fn revoke(&mut self, cid: ClusterId, node: NodeId) {
        if let Some(r) = self.records.get_mut(&cid) {
            if let Some(s) = r.live.remove(&node) {
                r.revoked.insert(node, s);
            }
        }
    }

    /// Gives a newly admitted head its share (issued by the lowest-NID quorum
    /// of live holders), then refreshes every live share under the new
    /// threshold so the polynomial degree matches it.
    pub fn admit<R: Rng + ?Sized>(
        &mut self,
        cid: ClusterId,
        node: NodeId,
        new_k: usize,
        rng: &mut R,
    ) -> Result<(), ShareError> {
        let field = self.field;
        let r = self.records.get_mut(&cid).ok_or(ShareError::InsufficientShares { k: new_k, got: 0 })?;
        let quorum: Vec<Share> = r.live.values().take(r.k).copied().collect();
        let issued = issue_share(&quorum, x_for_node(node, &field)?, r.k, &field)?;
        r.live.insert(node, issued.share);
        let k = new_k.max(r.k);
        refresh_record(r, k, &field, rng)
    }

    /// Proactive refresh of every cluster.
    pub fn refresh_all<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(), ShareError> {
        let field = self.field;
        for r in self.records.values_mut() {
            let k = r.k;
            refresh_record(r, k, &field, rng)?;
        }
        Ok(())
    }

    /// Every share a node currently holds, with the secret it belongs to.
    pub fn held_by(&self, node: NodeId) -> Vec<(u64, Share)> {
        self.records
            .values()
            .flat_map(|r| {
                r.live
                    .get(&node)
                    .into_iter()
                    .chain(r.revoked.get(&node))
                    .map(move |s| (r.secret_id, *s))
            })
            .collect()
    }
}

fn refresh_record<R: Rng + ?Sized>(
    r: &mut SecretRecord,
    k: usize,
    field: &PrimeField,
    rng: &mut R,
) -> Result<(), ShareError> {
    let holders: Vec<NodeId> = r.live.keys().copied().collect();
    let shares: Vec<Share> = r.live.values().copied().collect();
    let fresh = refresh_shares(&shares, k, field, rng)?;
    r.live = holders.into_iter().zip(fresh).collect();
    r.revoked.clear();
    r.k = k;
    r.epoch += 1;
    Ok(())
}

/// Static adversary: the compromised set and every share it has copied,
/// keyed by secret, then epoch, then x-coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Adversary {
    pub compromised: NodeSet,
    pub holdings: BTreeMap<u64, BTreeMap<u64, BTreeMap<u64, Share>>>,
}

impl Adversary {
    pub fn compromise(&mut self, nodes: &NodeSet, ledger: &ShareLedger) {
        self.compromised.extend(nodes);
        self.absorb(ledger);
    }

    /// Copies whatever the compromised nodes hold right now.
    pub fn absorb(&mut self, ledger: &ShareLedger) {
        for &u in &self.compromised {
            for (sid, s) in ledger.held_by(u) {
                self.holdings.entry(sid).or_default().entry(s.epoch).or_default().insert(s.x, s);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAudit {
    pub cluster_id: ClusterId,
    pub secret_id: u64,
    /// Adversary-held shares in its best single epoch.
    pub compromised_head_count: usize,
    pub k: usize,
    pub breached: bool,
    /// Number of secrets consistent with the adversary's view (small fields only).
    pub consistent_secrets: Option<usize>,
    pub anomaly: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AuditResult {
    pub clusters: Vec<ClusterAudit>,
}

impl AuditResult {
    pub fn any_breach(&self) -> bool {
        self.clusters.iter().any(|c| c.breached)
    }

    pub fn anomalies(&self) -> Vec<&str> {
        self.clusters.iter().filter_map(|c| c.anomaly.as_deref()).collect()
    }

    /// No cluster breached and the brute-force cross-check agreed everywhere.
    pub fn secrecy_ok(&self) -> bool {
        !self.any_breach() && self.anomalies().is_empty()
    }
}

/// Counts, per cluster, the adversary's same-epoch shares of the current
/// secret. Fewer than k must reveal nothing: reconstruction is refused and,
/// for fields up to [`BRUTE_FORCE_MAX_PRIME`], every secret stays consistent.
pub fn audit_secrecy(ledger: &ShareLedger, adversary: &Adversary) -> AuditResult {
    let field = ledger.field;
    let clusters = ledger
        .records
        .values()
        .map(|r| {
            let worst: Vec<Share> = adversary
                .holdings
                .get(&r.secret_id)
                .and_then(|by_epoch| {
                    by_epoch
                        .values()
                        .map(|m| m.values().copied().collect::<Vec<_>>())
                        .max_by_key(|v| (v.len() >= v[0].k, v.len()))
                })
                .unwrap_or_default();
            let k = worst.first().map_or(r.k, |s| s.k);
            let count = worst.len();
            let breached = count >= k;
            let mut anomaly = None;
            if !breached && !matches!(reconstruct(&worst, k, &field), Err(ShareError::InsufficientShares { .. })) {
                anomaly = Some(format!("cluster {}: {count} < k={k} shares reconstructed", r.cluster_id));
            }
            if breached && reconstruct(&worst, k, &field) != Ok(r.secret) {
                anomaly = Some(format!("cluster {}: {count} shares failed to reconstruct", r.cluster_id));
            }
            let consistent = (field.modulus() <= BRUTE_FORCE_MAX_PRIME).then(|| {
                let c = consistent_secrets(&worst, k, &field);
                if !breached && c.len() != field.modulus() as usize {
                    anomaly = Some(format!(
                        "cluster {}: {count} < k={k} shares narrow the secret to {} candidates",
                        r.cluster_id,
                        c.len()
                    ));
                }
                if breached && c != [r.secret.0] {
                    anomaly = Some(format!("cluster {}: {} candidates at threshold", r.cluster_id, c.len()));
                }
                c.len()
            });
            ClusterAudit {
                cluster_id: r.cluster_id,
                secret_id: r.secret_id,
                compromised_head_count: count,
                k,
                breached,
                consistent_secrets: consistent,
                anomaly,
            }
        })
        .collect();
    AuditResult { clusters }
}
