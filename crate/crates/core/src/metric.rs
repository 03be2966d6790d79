//! Exact 1-Wasserstein distance between empirical prediction distributions.
//!
//! [`wasserstein1`] integrates the absolute CDF difference over the merged
//! breakpoints. [`wasserstein1_transport`] solves the primal transport
//! problem directly and serves as a cross-check on tiny supports.

use crate::data::EmpiricalDistribution;
use crate::error::{Error, Result};

/// Largest combined number of distinct support points the transport solver accepts.
pub const TRANSPORT_ORACLE_MAX_SUPPORT: usize = 12;

/// `∫ |F_P(x) - F_Q(x)| dx` evaluated exactly on the piecewise-constant CDFs.
pub fn wasserstein1(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> f64 {
    let (a, b) = (p.values(), q.values());
    let (m, k) = (a.len() as i128, b.len() as i128);
    let (mut i, mut j) = (0usize, 0usize);
    let mut cur = a[0].min(b[0]);
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    loop {
        while i < a.len() && a[i] <= cur {
            i += 1;
        }
        while j < b.len() && b[j] <= cur {
            j += 1;
        }
        let next = match (a.get(i), b.get(j)) {
            (None, None) => break,
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (Some(&x), Some(&y)) => x.min(y),
        };
        // cdf_P - cdf_Q on [cur, next) is (i*k - j*m) / (m*k), exact in integers
        let gap = (i as i128 * k - j as i128 * m).unsigned_abs() as f64;
        let term = gap * (next - cur);
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        cur = next;
    }
    (sum + comp) / (m * k) as f64
}

/// Solves `min_π Σ π(x, y)|x - y|` over couplings of `p` and `q` by
/// successive shortest augmenting paths on the bipartite transport network.
///
/// Masses are scaled to integers (`|Q|` per unit of `P`, `|P|` per unit of
/// `Q`), so every flow is exact and only the path costs are floating point.
pub fn wasserstein1_transport(
    p: &EmpiricalDistribution,
    q: &EmpiricalDistribution,
) -> Result<f64> {
    let sp = grouped(p.values());
    let sq = grouped(q.values());
    let mut distinct: Vec<f64> = sp.iter().chain(&sq).map(|&(v, _)| v).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() > TRANSPORT_ORACLE_MAX_SUPPORT {
        return Err(Error::OracleScope(format!(
            "{} distinct support points (limit {TRANSPORT_ORACLE_MAX_SUPPORT})",
            distinct.len()
        )));
    }
    let (m, k) = (p.len() as u64, q.len() as u64);
    let supply: Vec<(f64, u64)> = sp.iter().map(|&(v, c)| (v, c * k)).collect();
    let demand: Vec<(f64, u64)> = sq.iter().map(|&(v, c)| (v, c * m)).collect();
    let cost = min_cost_transport(&supply, &demand);
    Ok(cost / (m * k) as f64)
}

fn grouped(sorted: &[f64]) -> Vec<(f64, u64)> {
    let mut out: Vec<(f64, u64)> = Vec::new();
    for &v in sorted {
        match out.last_mut() {
            Some((last, c)) if *last == v => *c += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

struct Edge {
    to: usize,
    cap: u64,
    cost: f64,
}

fn min_cost_transport(supply: &[(f64, u64)], demand: &[(f64, u64)]) -> f64 {
    let (ns, nd) = (supply.len(), demand.len());
    let source = ns + nd;
    let sink = source + 1;
    let nodes = sink + 1;
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut add = |edges: &mut Vec<Edge>, from: usize, to: usize, cap: u64, cost: f64| {
        adj[from].push(edges.len());
        edges.push(Edge { to, cap, cost });
        adj[to].push(edges.len());
        edges.push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
        });
    };
    for (i, &(_, w)) in supply.iter().enumerate() {
        add(&mut edges, source, i, w, 0.0);
    }
    for (j, &(_, w)) in demand.iter().enumerate() {
        add(&mut edges, ns + j, sink, w, 0.0);
    }
    for (i, &(x, w)) in supply.iter().enumerate() {
        for (j, &(y, _)) in demand.iter().enumerate() {
            add(&mut edges, i, ns + j, w, (x - y).abs());
        }
    }

    let total: u64 = supply.iter().map(|s| s.1).sum();
    let mut shipped = 0u64;
    let mut cost = 0.0f64;
    while shipped < total {
        // Bellman-Ford: the residual graph has negative reverse edges.
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via: Vec<Option<usize>> = vec![None; nodes];
        dist[source] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u].is_infinite() {
                    continue;
                }
                for &e in &adj[u] {
                    let edge = &edges[e];
                    if edge.cap > 0 && dist[u] + edge.cost < dist[edge.to] - 1e-15 {
                        dist[edge.to] = dist[u] + edge.cost;
                        via[edge.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut bottleneck = u64::MAX;
        let mut v = sink;
        while v != source {
            let e = via[v].expect("transport network stays connected until all mass ships");
            bottleneck = bottleneck.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = sink;
        while v != source {
            let e = via[v].expect("path recorded above");
            edges[e].cap -= bottleneck;
            edges[e ^ 1].cap += bottleneck;
            cost += bottleneck as f64 * edges[e].cost;
            v = edges[e ^ 1].to;
        }
        shipped += bottleneck;
    }
    cost
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(v: &[f64]) -> EmpiricalDistribution {
        EmpiricalDistribution::new(v.to_vec()).unwrap()
    }

    fn sorted_coupling(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
        assert_eq!(a.len(), b.len());
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / a.len() as f64
    }

    #[test]
    fn identical_distributions_are_at_distance_zero() {
        let p = dist(&[-0.5, 0.1, 0.1, 0.9]);
        assert_eq!(wasserstein1(&p, &p), 0.0);
        assert_eq!(wasserstein1_transport(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn opposite_point_masses_are_at_distance_two() {
        assert_eq!(wasserstein1(&dist(&[-1.0]), &dist(&[1.0])), 2.0);
    }

    #[test]
    fn two_point_example() {
        // LP by hand: move the mass at -1 (weight 1/2) to +1 at cost 2.
        let p = dist(&[-1.0, 1.0]);
        let q = dist(&[1.0, 1.0]);
        assert_eq!(wasserstein1(&p, &q), 1.0);
        assert_eq!(wasserstein1_transport(&p, &q).unwrap(), 1.0);
    }

    #[test]
    fn point_masses_transport_cost() {
        let d = wasserstein1_transport(&dist(&[-0.3]), &dist(&[0.45])).unwrap();
        assert!((d - 0.75).abs() < 1e-15);
    }

    #[test]
    fn unequal_sizes_supported() {
        let p = dist(&[0.0]);
        let q = dist(&[0.0, 1.0, 1.0]);
        assert!((wasserstein1(&p, &q) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn transport_rejects_large_supports() {
        let v: Vec<f64> = (0..13).map(|i| i as f64 / 13.0).collect();
        assert!(matches!(
            wasserstein1_transport(&dist(&v), &dist(&[0.0])),
            Err(Error::OracleScope(_))
        ));
    }

    #[test]
    fn random_four_point_instances_agree_with_transport() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let p: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let (p, q) = (dist(&p), dist(&q));
            let w = wasserstein1(&p, &q);
            assert!((w - wasserstein1_transport(&p, &q).unwrap()).abs() < 1e-9);
            assert!((w - sorted_coupling(&p, &q)).abs() < 1e-9);
        }
    }
}
