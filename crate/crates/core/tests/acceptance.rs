//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use council::field::{PrimeField, MERSENNE_61};
use council::fixtures;
use council::maintenance::Action;
use council::net_graph::{random_connected_unit_disk, NodeId, NodeSet};
use council::phase1::{discover, run_phase1, RoleAssignment};
use council::phase2::{cluster_form, verify_partition};
use council::sim::{load_scenario, run, simulate, Scenario};
use council::threshold::{
    choose_threshold, issue_share, reconstruct, refresh_shares, split_with_coefficients, Secret, Share,
    ShareError, ThresholdPolicy,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn set(v: &[u32]) -> NodeSet {
    v.iter().copied().map(NodeId).collect()
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn canonical_reproduction() -> Check {
    let start = Instant::now();
    let t = fixtures::canonical();
    let p1 = run_phase1(&t).map_err(|e| e.to_string())?;
    ensure(p1.roles.heads() == set(&[1, 4]), || format!("heads {:?}", p1.roles.heads()))?;
    ensure(p1.roles.gateways() == set(&[5]), || format!("gateways {:?}", p1.roles.gateways()))?;
    let p = cluster_form(&t, &p1.dominating_set).map_err(|e| e.to_string())?;
    let councils: Vec<NodeSet> = p.clusters.iter().map(|c| c.council.heads.clone()).collect();
    ensure(councils == vec![set(&[1, 3, 5]), set(&[6])], || format!("councils {councils:?}"))?;
    let gateways: NodeSet = p.clusters.iter().flat_map(|c| c.gateways.iter().copied()).collect();
    ensure(gateways == set(&[4]), || format!("gateways {gateways:?}"))?;
    ensure(verify_partition(&t, &p).is_empty(), || "partition invariants broken".into())?;
    let took = start.elapsed();
    ensure(took < Duration::from_secs(1), || format!("took {took:?}"))?;
    Ok(format!("heads {{1,4}}, gateway {{5}}, councils {{1,3,5}} {{6}}, gateway {{4}} in {took:?}"))
}

fn clique_detection() -> Check {
    let t = fixtures::triangle();
    let views = discover(&t, &RoleAssignment::default());
    let tri = [NodeId(1), NodeId(2), NodeId(3)];
    for (u, st) in &views {
        let found = st.two_hop_view().triangles();
        ensure(found.contains(&tri), || format!("node {u} sees triangles {found:?}"))?;
    }
    for (name, t, n) in [("K4", fixtures::k4(), 4u32), ("K5", fixtures::k5(), 5)] {
        let all: NodeSet = (1..=n).map(NodeId).collect();
        ensure(t.is_clique(&all) == Ok(true), || format!("{name} is not a clique"))?;
        let views = discover(&t, &RoleAssignment::default());
        let mut seen = BTreeSet::new();
        for st in views.values() {
            seen.extend(st.two_hop_view().triangles());
        }
        for a in 1..=n {
            for b in a + 1..=n {
                for c in b + 1..=n {
                    let s = set(&[a, b, c]);
                    ensure(t.is_clique(&s) == Ok(true), || format!("{name}: {s:?} not a clique"))?;
                    ensure(seen.contains(&[NodeId(a), NodeId(b), NodeId(c)]), || {
                        format!("{name}: triangle {a},{b},{c} not found from two-hop views")
                    })?;
                }
            }
        }
        let expected = (n * (n - 1) * (n - 2) / 6) as usize;
        ensure(seen.len() == expected, || format!("{name}: {} triangles, expected {expected}", seen.len()))?;
    }
    Ok("triangle {1,2,3} found from HELLO views; K4 and K5 give 4 and 10 triangles".into())
}

fn council_shapes() -> Check {
    let t = fixtures::shapes();
    let p1 = run_phase1(&t).map_err(|e| e.to_string())?;
    let p = cluster_form(&t, &p1.dominating_set).map_err(|e| e.to_string())?;
    ensure(verify_partition(&t, &p).is_empty(), || "partition invariants broken".into())?;
    let sizes = p.council_sizes();
    ensure(sizes == vec![2, 3, 4, 5], || format!("council sizes {sizes:?}"))?;
    // the 6-clique {12..17}: gateway 12 stays out, the other five lead
    let clique: NodeSet = (12..=17).map(NodeId).collect();
    ensure(t.is_clique(&clique) == Ok(true), || "fixture lost its 6-clique".into())?;
    let last = &p.clusters[3];
    ensure(last.council.heads == set(&[13, 14, 15, 16, 17]), || format!("last council {:?}", last.council.heads))?;
    ensure(p.clusters[2].gateways.contains(&NodeId(12)), || "12 is not a gateway".into())?;
    Ok("council sizes 2, 3, 4, 5; 6-clique minus gateway gives 5 heads".into())
}

fn dominating_set_property() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut nodes = 0usize;
    for case in 0..200 {
        let n = rng.gen_range(10..=50);
        let t = random_connected_unit_disk(n, 1.0, &mut rng);
        let p1 = run_phase1(&t).map_err(|e| format!("case {case}: {e}"))?;
        let d = p1.dominating_set.members.clone();
        let hg: NodeSet = p1.roles.heads().union(&p1.roles.gateways()).copied().collect();
        ensure(d == hg, || format!("case {case}: D differs from heads and gateways"))?;
        ensure(t.is_dominating_set(&d) == Ok(true), || format!("case {case}: not dominating"))?;
        let p = cluster_form(&t, &p1.dominating_set).map_err(|e| format!("case {case}: {e}"))?;
        let covered: NodeSet = p.clusters.iter().flat_map(|c| c.all_nodes()).collect();
        ensure(covered == t.node_set(), || format!("case {case}: coverage {}/{n}", covered.len()))?;
        let v = verify_partition(&t, &p);
        ensure(v.is_empty(), || format!("case {case}: {}", v[0]))?;
        nodes += n;
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(30), || format!("took {took:?}"))?;
    Ok(format!("200 graphs, {nodes} nodes, all dominated and covered in {took:?}"))
}

/// Test-side modular arithmetic, independent of the library field.
fn eval_mod(coeffs: &[u64], x: u64, p: u64) -> u64 {
    coeffs.iter().rev().fold(0u128, |acc, &c| (acc * x as u128 + c as u128) % p as u128) as u64
}

/// Every constant term of a degree < k polynomial through all `points`,
/// found by walking the whole coefficient space. The constant term is fixed
/// by the first point once the higher coefficients are chosen.
fn brute_force_secrets(points: &[(u64, u64)], k: usize, p: u64) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    if points.is_empty() {
        return (0..p).collect();
    }
    let mut higher = vec![0u64; k - 1];
    let tail_at = |higher: &[u64], x: u64| -> u64 {
        // sum of a_j x^j for j >= 1
        higher.iter().rev().fold(0u64, |acc, &c| (acc + c) * x % p)
    };
    let (x0, y0) = points[0];
    loop {
        let a0 = (y0 + p - tail_at(&higher, x0)) % p;
        if points[1..].iter().all(|&(x, y)| (a0 + tail_at(&higher, x)) % p == y) {
            out.insert(a0);
        }
        // odometer over the higher coefficients
        let mut i = 0;
        loop {
            if i == higher.len() {
                return out;
            }
            higher[i] += 1;
            if higher[i] < p {
                break;
            }
            higher[i] = 0;
            i += 1;
        }
    }
}

fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn go(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    go(0, n, size, &mut cur, &mut out);
    out
}

fn threshold_exhaustive() -> Check {
    let start = Instant::now();
    const P: u64 = 13;
    let field = PrimeField::new(P).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut checked = 0usize;
    for n in 1..=6usize {
        let xs: Vec<u64> = (1..=n as u64).collect();
        for k in 1..=n {
            let policy = ThresholdPolicy::unrestricted(n, k).map_err(|e| e.to_string())?;
            for s in 0..P {
                let higher: Vec<u64> = (0..k - 1).map(|_| rng.gen_range(0..P)).collect();
                let shares = split_with_coefficients(Secret(s), policy, &xs, &field, &higher)
                    .map_err(|e| e.to_string())?;
                let mut coeffs = vec![s];
                coeffs.extend(&higher);
                for sh in &shares {
                    ensure(sh.y == eval_mod(&coeffs, sh.x, P), || format!("share {sh:?} off the polynomial"))?;
                }
                for idx in subsets(n, k) {
                    let sub: Vec<Share> = idx.iter().map(|&i| shares[i]).collect();
                    let got = reconstruct(&sub, k, &field).map_err(|e| e.to_string())?;
                    ensure(got == Secret(s), || format!("n={n} k={k} s={s} {idx:?} -> {got:?}"))?;
                    checked += 1;
                }
                for idx in subsets(n, k - 1) {
                    let sub: Vec<Share> = idx.iter().map(|&i| shares[i]).collect();
                    if k > 1 {
                        let refused = reconstruct(&sub, k, &field);
                        ensure(
                            refused == Err(ShareError::InsufficientShares { k, got: k - 1 }),
                            || format!("n={n} k={k}: {refused:?} from k-1 shares"),
                        )?;
                    }
                    let points: Vec<(u64, u64)> = sub.iter().map(|s| (s.x, s.y)).collect();
                    let cands = brute_force_secrets(&points, k, P);
                    ensure(cands.len() == P as usize, || {
                        format!("n={n} k={k} s={s} {idx:?}: only {} candidates", cands.len())
                    })?;
                    checked += 1;
                }
            }
        }
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(5), || format!("took {took:?}"))?;
    Ok(format!("{checked} subsets over all 1 <= k <= n <= 6 and all 13 secrets in {took:?}"))
}

fn threshold_table() -> Check {
    let want = [(1, 1), (2, 2), (3, 2), (4, 3), (5, 3)];
    for (n, k) in want {
        let got = choose_threshold(n).map_err(|e| e.to_string())?;
        ensure(got.n == n && got.k == k, || format!("n={n}: got k={}", got.k))?;
        ensure(2 * k > n, || format!("n={n}: k={k} is not a majority"))?;
    }
    Ok("n 1..5 -> k 1,2,2,3,3".into())
}

fn maintenance_triggers() -> Check {
    let cases = [
        ("council3_one_leaves.json", 3, 2, 1, Action::LocalUpdate),
        ("council3_two_leave.json", 3, 2, 2, Action::Reform),
        ("council5_two_leave.json", 5, 3, 2, Action::LocalUpdate),
        ("council5_three_leave.json", 5, 3, 3, Action::Reform),
    ];
    for (file, n, k, departed, want) in cases {
        let s = load_scenario(data(file)).map_err(|e| format!("{file}: {e}"))?;
        let out = simulate(&s).map_err(|e| format!("{file}: {e}"))?;
        let st = &out.state;
        let initial = council::maintenance::reform(&s.initial_topology()).map_err(|e| e.to_string())?;
        ensure(initial.clusters.len() == 1 && initial.clusters[0].n() == n && initial.clusters[0].k == k, || {
            format!("{file}: initial cluster is not ({n},{k})")
        })?;
        let decisions: Vec<_> = st.decisions.iter().filter(|d| d.cluster_id.is_some()).collect();
        ensure(decisions.len() == 1, || format!("{file}: {} decisions", decisions.len()))?;
        let d = decisions[0];
        ensure(d.action == want && d.heads_departed == departed, || {
            format!("{file}: {:?} after {} departures", d.action, d.heads_departed)
        })?;
        let last = out.report.rows.last().ok_or("no rows")?;
        let (updates, reforms) = if want == Action::Reform { (0, 1) } else { (1, 0) };
        ensure((last.updates, last.reforms) == (updates, reforms), || {
            format!("{file}: updates {} reforms {}", last.updates, last.reforms)
        })?;
        ensure(out.exit_code == 0, || format!("{file}: violations {:?}", st.violations))?;
    }
    Ok("n-k departures update locally, n-k+1 re-form, for (3,2) and (5,3)".into())
}

fn share_lifecycle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let primes = [13u64, 17, 101, 7919, MERSENNE_61];
    for case in 0..100 {
        let p = primes[case % primes.len()];
        let field = PrimeField::new(p).map_err(|e| e.to_string())?;
        let n = rng.gen_range(2..=7usize);
        let k = rng.gen_range(1..=n);
        let mut pool: Vec<u64> = (1..p.min(1000)).collect();
        pool.shuffle(&mut rng);
        let xs = pool[..n].to_vec();
        let new_x = pool[n];
        let secret = rng.gen_range(0..p);
        let higher: Vec<u64> = (0..k - 1).map(|_| rng.gen_range(0..p)).collect();
        let policy = ThresholdPolicy::unrestricted(n, k).map_err(|e| e.to_string())?;
        let shares = split_with_coefficients(Secret(secret), policy, &xs, &field, &higher)
            .map_err(|e| e.to_string())?;
        let mut coeffs = vec![secret];
        coeffs.extend(&higher);

        let mut quorum = shares.clone();
        quorum.shuffle(&mut rng);
        quorum.truncate(k);
        let issued = issue_share(&quorum, new_x, k, &field).map_err(|e| format!("case {case}: {e}"))?;
        let oracle = eval_mod(&coeffs, new_x, p);
        ensure(issued.share.y == oracle, || format!("case {case}: issued {} expected {oracle}", issued.share.y))?;
        let sum = issued.contributions.iter().fold(0u128, |a, &c| (a + c as u128) % p as u128) as u64;
        ensure(sum == oracle, || format!("case {case}: contributions do not sum to the share"))?;

        let fresh = refresh_shares(&shares, k, &field, &mut rng).map_err(|e| e.to_string())?;
        let mut pick = fresh.clone();
        pick.shuffle(&mut rng);
        pick.truncate(k);
        let got = reconstruct(&pick, k, &field).map_err(|e| e.to_string())?;
        ensure(got == Secret(secret), || format!("case {case}: refresh changed the secret"))?;
        ensure(fresh.iter().all(|s| s.epoch == 1), || format!("case {case}: epoch not bumped"))?;

        if k >= 2 {
            let mut mixed: Vec<Share> = shares[..k - 1].to_vec();
            mixed.push(fresh[k - 1]);
            let r = reconstruct(&mixed, k, &field);
            ensure(r == Err(ShareError::MixedEpoch), || format!("case {case}: mixed epochs gave {r:?}"))?;
        }
    }
    Ok("100 issued shares match the polynomial; refresh keeps the secret; mixed epochs refused".into())
}

fn determinism() -> Check {
    let mut s: Scenario = council::sim::random_scenario(1, 40, 1.0, 30, 0.15);
    s.refresh_interval_rounds = Some(5);
    s.adversary = Some(serde_json::from_str(r#"{"compromise_round": 10, "nodes": [2, 7, 11]}"#).unwrap());
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scen = dir.path().join("scenario.json");
    std::fs::write(&scen, s.to_json()).map_err(|e| e.to_string())?;
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run(&scen, &a).map_err(|e| e.to_string())?;
    run(&scen, &b).map_err(|e| e.to_string())?;
    let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    ensure(ba == bb, || "metrics differ between runs".into())?;
    let rows = ba.iter().filter(|&&c| c == b'\n').count() - 1;
    ensure(rows == 30, || format!("expected 30 rows, got {rows}"))?;
    Ok(format!("two runs wrote identical CSVs ({} bytes, {rows} rows)", ba.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("canonical seven-node topology", canonical_reproduction),
        ("clique detection from two-hop views", clique_detection),
        ("council sizes 2 to 5", council_shapes),
        ("dominating set on 200 random graphs", dominating_set_property),
        ("threshold scheme exhaustive, p = 13", threshold_exhaustive),
        ("choose_threshold table", threshold_table),
        ("maintenance trigger boundary", maintenance_triggers),
        ("share lifecycle", share_lifecycle),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
