//! (k, n) threshold secret sharing over a prime field.
//!
//! A cluster secret is the constant term of a random polynomial of degree
//! k − 1; each COUNCIL head holds one evaluation. Any k evaluations recover the
//! secret by Lagrange interpolation at zero, fewer than k are consistent with
//! every possible secret.
//!
//! Besides plain split/reconstruct this module covers the share lifecycle a
//! council needs: issuing a share to a head that joins later (computed from
//! the quorum's Lagrange contributions, without a dealer) and proactive
//! refresh, which re-randomizes all shares under a new epoch while keeping the
//! secret.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::PrimeField;
use crate::net_graph::NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShareError {
    #[error("council size must be at least 1")]
    InvalidCouncilSize,
    #[error("invalid threshold policy: k={k}, n={n}")]
    InvalidPolicy { n: usize, k: usize },
    #[error("duplicate share x-coordinate {0}")]
    DuplicateX(u64),
    #[error("share x-coordinate must be nonzero")]
    ZeroX,
    #[error("expected {expected} x-coordinates, got {got}")]
    WrongShareCount { expected: usize, got: usize },
    #[error("value {0} is outside the field")]
    OutOfField(u64),
    #[error("need at least {k} shares, got {got}")]
    InsufficientShares { k: usize, got: usize },
    #[error("shares come from different refresh epochs")]
    MixedEpoch,
    #[error("shares belong to different fields or thresholds")]
    MixedParameters,
    #[error("refresh needs at least {k} live shares, got {got}")]
    IncompleteShareSet { k: usize, got: usize },
    #[error("expected {expected} coefficients, got {got}")]
    WrongCoefficientCount { expected: usize, got: usize },
}

/// The cluster secret, a field element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Secret(pub u64);

/// One point of the sharing polynomial plus the bookkeeping needed to use it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[u64; 5]", try_from = "[u64; 5]")]
pub struct Share {
    pub x: u64,
    pub y: u64,
    pub k: usize,
    pub epoch: u64,
    pub p: u64,
}

impl From<Share> for [u64; 5] {
    fn from(s: Share) -> Self {
        [s.x, s.y, s.k as u64, s.epoch, s.p]
    }
}

impl TryFrom<[u64; 5]> for Share {
    type Error = String;

    fn try_from([x, y, k, epoch, p]: [u64; 5]) -> Result<Self, String> {
        if x == 0 || x >= p || y >= p || k == 0 {
            return Err(format!("malformed share ({x}, {y}, {k}, {epoch}, {p})"));
        }
        Ok(Share { x, y, k: k as usize, epoch, p })
    }
}

/// Council size and reconstruction threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub n: usize,
    pub k: usize,
}

impl ThresholdPolicy {
    /// Validates `1 ≤ k ≤ n` and the honest-majority rule `2k ≥ n + 1`.
    pub fn new(n: usize, k: usize) -> Result<Self, ShareError> {
        if n == 0 {
            return Err(ShareError::InvalidCouncilSize);
        }
        if k == 0 || k > n || 2 * k < n + 1 {
            return Err(ShareError::InvalidPolicy { n, k });
        }
        Ok(Self { n, k })
    }

    /// Like [`ThresholdPolicy::new`] without the majority rule. Used for the
    /// exhaustive correctness checks and the `shares` CLI utilities.
    pub fn unrestricted(n: usize, k: usize) -> Result<Self, ShareError> {
        if n == 0 {
            return Err(ShareError::InvalidCouncilSize);
        }
        if k == 0 || k > n {
            return Err(ShareError::InvalidPolicy { n, k });
        }
        Ok(Self { n, k })
    }
}

/// Smallest honest-majority threshold: k = ⌊n/2⌋ + 1.
pub fn choose_threshold(n: usize) -> Result<ThresholdPolicy, ShareError> {
    if n == 0 {
        return Err(ShareError::InvalidCouncilSize);
    }
    ThresholdPolicy::new(n, n / 2 + 1)
}

/// Share x-coordinate for a node: its NID reduced into the field.
pub fn x_for_node(nid: NodeId, field: &PrimeField) -> Result<u64, ShareError> {
    match field.reduce(nid.get() as u64) {
        0 => Err(ShareError::ZeroX),
        x => Ok(x),
    }
}

fn check_xs(xs: &[u64], field: &PrimeField) -> Result<(), ShareError> {
    let mut seen = BTreeSet::new();
    for &x in xs {
        if !field.contains(x) {
            return Err(ShareError::OutOfField(x));
        }
        if x == 0 {
            return Err(ShareError::ZeroX);
        }
        if !seen.insert(x) {
            return Err(ShareError::DuplicateX(x));
        }
    }
    Ok(())
}

/// Splits with random higher coefficients drawn uniformly from the field.
pub fn split_secret<R: Rng + ?Sized>(
    secret: Secret,
    policy: ThresholdPolicy,
    xs: &[u64],
    field: &PrimeField,
    rng: &mut R,
) -> Result<Vec<Share>, ShareError> {
    let coeffs = random_coefficients(policy.k - 1, field, rng);
    split_with_coefficients(secret, policy, xs, field, &coeffs)
}

/// Splits with caller-chosen coefficients `a_1 .. a_{k-1}`.
pub fn split_with_coefficients(
    secret: Secret,
    policy: ThresholdPolicy,
    xs: &[u64],
    field: &PrimeField,
    higher: &[u64],
) -> Result<Vec<Share>, ShareError> {
    if !field.contains(secret.0) {
        return Err(ShareError::OutOfField(secret.0));
    }
    if xs.len() != policy.n {
        return Err(ShareError::WrongShareCount { expected: policy.n, got: xs.len() });
    }
    if higher.len() != policy.k - 1 {
        return Err(ShareError::WrongCoefficientCount { expected: policy.k - 1, got: higher.len() });
    }
    check_xs(xs, field)?;
    let mut poly = Vec::with_capacity(policy.k);
    poly.push(secret.0);
    poly.extend(higher.iter().map(|&c| field.reduce(c)));
    Ok(xs
        .iter()
        .map(|&x| Share {
            x,
            y: field.eval_poly(&poly, x),
            k: policy.k,
            epoch: 0,
            p: field.modulus(),
        })
        .collect())
}

fn random_coefficients<R: Rng + ?Sized>(count: usize, field: &PrimeField, rng: &mut R) -> Vec<u64> {
    (0..count).map(|_| rng.gen_range(0..field.modulus())).collect()
}

/// Checks a share set is usable together: same field, threshold and epoch,
/// distinct x, and at least `k` of them.
fn check_quorum(shares: &[Share], k: usize, field: &PrimeField) -> Result<(), ShareError> {
    if shares.len() < k || shares.is_empty() {
        return Err(ShareError::InsufficientShares { k, got: shares.len() });
    }
    let first = shares[0];
    if shares
        .iter()
        .any(|s| s.p != field.modulus() || s.k != first.k)
    {
        return Err(ShareError::MixedParameters);
    }
    if shares.iter().any(|s| s.epoch != first.epoch) {
        return Err(ShareError::MixedEpoch);
    }
    let xs: Vec<u64> = shares.iter().map(|s| s.x).collect();
    check_xs(&xs, field)
}

/// Lagrange basis polynomial `l_i` for the points `xs`, evaluated at `at`.
fn lagrange_basis(xs: &[u64], i: usize, at: u64, field: &PrimeField) -> u64 {
    let xi = xs[i];
    let (num, den) = xs
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .fold((1, 1), |(num, den), (_, &xj)| {
            (
                field.mul(num, field.sub(at, xj)),
                field.mul(den, field.sub(xi, xj)),
            )
        });
    field.div(num, den)
}

/// Per-holder Lagrange contributions `l_i(at) · y_i`; their sum is `f(at)`.
fn contributions(shares: &[Share], at: u64, field: &PrimeField) -> Vec<u64> {
    let xs: Vec<u64> = shares.iter().map(|s| s.x).collect();
    shares
        .iter()
        .enumerate()
        .map(|(i, s)| field.mul(lagrange_basis(&xs, i, at, field), s.y))
        .collect()
}

/// Recovers the secret from at least `k` same-epoch shares.
pub fn reconstruct(shares: &[Share], k: usize, field: &PrimeField) -> Result<Secret, ShareError> {
    check_quorum(shares, k, field)?;
    Ok(Secret(
        contributions(shares, 0, field)
            .into_iter()
            .fold(0, |acc, c| field.add(acc, c)),
    ))
}

/// A share generated for a newly admitted head by an existing quorum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issuance {
    pub share: Share,
    /// What each quorum member sends to the newcomer, in quorum order.
    pub contributions: Vec<u64>,
}

/// Generates the share at `new_x` from a quorum of existing shares. Each
/// quorum member contributes `l_i(new_x) · y_i`; the newcomer sums them.
pub fn issue_share(
    quorum: &[Share],
    new_x: u64,
    k: usize,
    field: &PrimeField,
) -> Result<Issuance, ShareError> {
    check_quorum(quorum, k, field)?;
    if new_x == 0 {
        return Err(ShareError::ZeroX);
    }
    if !field.contains(new_x) {
        return Err(ShareError::OutOfField(new_x));
    }
    if quorum.iter().any(|s| s.x == new_x) {
        return Err(ShareError::DuplicateX(new_x));
    }
    let parts = contributions(quorum, new_x, field);
    let y = parts.iter().fold(0, |acc, &c| field.add(acc, c));
    Ok(Issuance {
        share: Share {
            x: new_x,
            y,
            k: quorum[0].k,
            epoch: quorum[0].epoch,
            p: field.modulus(),
        },
        contributions: parts,
    })
}

/// Proactive refresh: adds a random degree-(k−1) polynomial with zero constant
/// term to every share and bumps the epoch. `k` becomes the threshold of the
/// refreshed shares, so refreshing with a larger `k` also raises the degree.
pub fn refresh_shares<R: Rng + ?Sized>(
    shares: &[Share],
    k: usize,
    field: &PrimeField,
    rng: &mut R,
) -> Result<Vec<Share>, ShareError> {
    let coeffs = random_coefficients(k.saturating_sub(1), field, rng);
    refresh_with_coefficients(shares, k, field, &coeffs)
}

/// Refresh with caller-chosen update coefficients `b_1 .. b_{k-1}`.
pub fn refresh_with_coefficients(
    shares: &[Share],
    k: usize,
    field: &PrimeField,
    higher: &[u64],
) -> Result<Vec<Share>, ShareError> {
    let old_k = shares.first().map_or(k, |s| s.k);
    if shares.len() < k.max(old_k) || k == 0 {
        return Err(ShareError::IncompleteShareSet { k: k.max(old_k), got: shares.len() });
    }
    check_quorum(shares, old_k, field)?;
    if higher.len() != k - 1 {
        return Err(ShareError::WrongCoefficientCount { expected: k - 1, got: higher.len() });
    }
    let mut delta = Vec::with_capacity(k);
    delta.push(0);
    delta.extend(higher.iter().map(|&c| field.reduce(c)));
    Ok(shares
        .iter()
        .map(|s| Share {
            y: field.add(s.y, field.eval_poly(&delta, s.x)),
            k: k.max(old_k),
            epoch: s.epoch + 1,
            ..*s
        })
        .collect())
}

/// Brute force: every secret in the field for which some polynomial of degree
/// below `k` passes through all the given points. Cost is `p^k`, so only meant
/// for toy fields.
pub fn consistent_secrets(shares: &[Share], k: usize, field: &PrimeField) -> Vec<u64> {
    let p = field.modulus();
    let mut found = vec![false; p as usize];
    let mut remaining = p as usize;
    let mut coeffs = vec![0u64; k.max(1)];
    loop {
        if !found[coeffs[0] as usize] && shares.iter().all(|s| field.eval_poly(&coeffs, s.x) == s.y) {
            found[coeffs[0] as usize] = true;
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
        // odometer over all coefficient vectors
        let mut i = 0;
        loop {
            if i == coeffs.len() {
                return collect(&found);
            }
            coeffs[i] += 1;
            if coeffs[i] < p {
                break;
            }
            coeffs[i] = 0;
            i += 1;
        }
    }
    collect(&found)
}

fn collect(found: &[bool]) -> Vec<u64> {
    found
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(i, _)| i as u64)
        .collect()
}
