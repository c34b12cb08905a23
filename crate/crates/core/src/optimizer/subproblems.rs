//! The two families of Lagrangian subproblems.
//!
//! For fixed per-class source rates the user subproblem is a min-cost
//! unicast per class; with nonnegative multipliers on an acyclic graph that
//! is a shortest path scaled by the class rate. What remains is a linear
//! program in the L class rates over nested cumulative caps, which the
//! greedy below solves exactly.

use super::graph::NetworkGraph;
use crate::prlnc::VideoProfile;

/// Shortest Interest-direction path from `from` to the server under
/// per-link weights. Ties keep the first path found in topological order,
/// then link declaration order. Returns `(cost, links)`.
pub fn shortest_path(g: &NetworkGraph, from: usize, weights: &[f64]) -> Option<(f64, Vec<usize>)> {
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    dist[from] = 0.0;
    for &v in g.topo_order() {
        if !dist[v].is_finite() {
            continue;
        }
        for &l in g.out_links(v) {
            let w = g.links()[l].to;
            let d = dist[v] + weights[l];
            if d < dist[w] {
                dist[w] = d;
                pred[w] = Some(l);
            }
        }
    }
    let s = g.server();
    if !dist[s].is_finite() {
        return None;
    }
    let mut path = Vec::new();
    let mut v = s;
    while v != from {
        let l = pred[v].expect("finite distance implies a predecessor");
        path.push(l);
        v = g.links()[l].from;
    }
    path.reverse();
    Some((dist[s], path))
}

/// Optimal response of one client to the current multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSolution {
    /// Chosen decodable layer, `None` when requesting nothing is best.
    pub level: Option<usize>,
    /// Source rate of each class, packets per second.
    pub class_rates: Vec<f64>,
    /// Route carrying each class (empty when its rate is zero).
    pub paths: Vec<Vec<usize>>,
    /// Subproblem objective value.
    pub value: f64,
}

impl UserSolution {
    /// Dense per-link rates, indexed `[class][link]`.
    pub fn link_rates(&self, links: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; links]; self.class_rates.len()];
        for (l, path) in self.paths.iter().enumerate() {
            for &e in path {
                out[l][e] += self.class_rates[l];
            }
        }
        out
    }
}

/// Minimise `sum w_l rho_l` subject to `rho >= 0`, prefix sums
/// `sum_{j<=m} rho_j <= caps[m]` for `m < k`, and total `caps[k]`.
///
/// The feasible set is the base polytope of a nested (laminar) capacity
/// system, so filling classes cheapest-first is optimal. Equal weights
/// fill the higher class first, which yields the lexicographically
/// smaller rate vector.
pub fn greedy_class_rates(weights: &[f64], caps: &[f64], k: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..=k).collect();
    order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(b.cmp(&a)));
    let mut rho = vec![0.0; weights.len()];
    for l in order {
        let total: f64 = rho.iter().sum();
        let mut room = caps[k] - total;
        for m in l..k {
            let prefix: f64 = rho[..=m].iter().sum();
            room = room.min(caps[m] - prefix);
        }
        rho[l] = room.max(0.0);
    }
    rho
}

/// Client `u` picks the level and routes maximising
/// `(q_k - c.r)/U - sum mu.r` over the rate region of level `k`.
///
/// `mu` is this client's slice indexed `[class * links + link]`.
/// Returns `None` when the client cannot reach the server.
pub fn solve_user_subproblem(
    g: &NetworkGraph,
    u: usize,
    mu: &[f64],
    profile: &VideoProfile,
    costs: &[f64],
    users: usize,
) -> Option<UserSolution> {
    let layers = profile.layers();
    let e = g.link_count();
    let mut sp = Vec::with_capacity(layers);
    let mut paths = Vec::with_capacity(layers);
    for l in 0..layers {
        let (d, p) = shortest_path(g, u, &mu[l * e..(l + 1) * e])?;
        sp.push(d);
        paths.push(p);
    }
    let uf = users as f64;
    let weights: Vec<f64> = (0..layers).map(|l| costs[l] / uf + sp[l]).collect();
    let caps: Vec<f64> = (0..layers).map(|l| profile.cumulative_rate(l)).collect();

    let mut best = UserSolution { level: None, class_rates: vec![0.0; layers], paths: vec![Vec::new(); layers], value: 0.0 };
    for k in 0..layers {
        let rho = greedy_class_rates(&weights, &caps, k);
        let value = profile.quality[k] / uf - rho.iter().zip(&weights).map(|(r, w)| r * w).sum::<f64>();
        // Ascending k with >= hands ties to the larger level.
        if value >= best.value {
            let chosen = (0..layers).map(|l| if rho[l] > 0.0 { paths[l].clone() } else { Vec::new() }).collect();
            best = UserSolution { level: Some(k), class_rates: rho, paths: chosen, value };
        }
    }
    Some(best)
}

/// Spend the whole link budget on the class with the largest aggregated
/// multiplier; ties go to the smallest class, all-zero weights spend nothing.
pub fn solve_link_subproblem(weights: &[f64], budget: f64) -> Vec<f64> {
    let mut x = vec![0.0; weights.len()];
    let mut best: Option<usize> = None;
    for (l, &w) in weights.iter().enumerate() {
        if w > 0.0 && best.map_or(true, |b| w > weights[b]) {
            best = Some(l);
        }
    }
    if let Some(l) = best {
        x[l] = budget;
    }
    x
}

/// Packets per second a link of `bandwidth` bits/s can carry as
/// Interest/Data exchanges.
pub fn link_budget(profile: &VideoProfile, bandwidth: f64) -> f64 {
    bandwidth / profile.bits_per_exchange()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::graph::tests::{line, node};
    use crate::optimizer::graph::Role;

    fn diamond(bw: f64) -> NetworkGraph {
        // client 3 -> {1, 2} -> server 0
        NetworkGraph::new(
            vec![node(0, Role::Server), node(1, Role::Intermediate), node(2, Role::Intermediate), node(3, Role::Client)],
            &[(3, 1, bw, 0.0), (3, 2, bw, 0.0), (1, 0, bw, 0.0), (2, 0, bw, 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn shortest_path_prefers_cheaper_branch() {
        let g = diamond(1.0);
        let (d, p) = shortest_path(&g, 3, &[0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(p, vec![0, 2]);
        let (d, p) = shortest_path(&g, 3, &[1.0, 0.5, 1.0, 0.2]).unwrap();
        assert!((d - 0.7).abs() < 1e-12);
        assert_eq!(p, vec![1, 3]);
    }

    #[test]
    fn greedy_examples() {
        let caps = [38.0, 53.0, 73.0];
        assert_eq!(greedy_class_rates(&[0.1, 0.2, 0.3], &caps, 2), vec![38.0, 15.0, 20.0]);
        assert_eq!(greedy_class_rates(&[0.3, 0.2, 0.1], &caps, 2), vec![0.0, 0.0, 73.0]);
        assert_eq!(greedy_class_rates(&[0.3, 0.1, 0.2], &caps, 2), vec![0.0, 53.0, 20.0]);
        assert_eq!(greedy_class_rates(&[0.1, 0.2, 0.3], &caps, 0), vec![38.0, 0.0, 0.0]);
        assert_eq!(greedy_class_rates(&[0.2, 0.2, 0.3], &caps, 1), vec![0.0, 53.0, 0.0]);
    }

    #[test]
    fn zero_multipliers_give_full_rates() {
        let p = VideoProfile::cif_three_layer();
        let g = line(1e9);
        let mu = vec![0.0; 3 * g.link_count()];
        let s = solve_user_subproblem(&g, 2, &mu, &p, &[0.005, 0.01, 0.015], 1).unwrap();
        assert_eq!(s.level, Some(2));
        assert_eq!(s.class_rates, vec![38.0, 15.0, 20.0]);
        let lr = s.link_rates(2);
        assert_eq!(lr[1], vec![15.0, 15.0]);
    }

    #[test]
    fn huge_multipliers_give_nothing() {
        let p = VideoProfile::cif_three_layer();
        let g = line(1e9);
        let mu = vec![1e6; 3 * g.link_count()];
        let s = solve_user_subproblem(&g, 2, &mu, &p, &[0.005, 0.01, 0.015], 1).unwrap();
        assert_eq!(s.level, None);
        assert!(s.class_rates.iter().all(|&r| r == 0.0));
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn unreachable_server_is_none() {
        let g = NetworkGraph::new(vec![node(0, Role::Server), node(1, Role::Client)], &[]).unwrap();
        let p = VideoProfile::cif_three_layer();
        assert!(solve_user_subproblem(&g, 1, &[], &p, &[0.005, 0.01, 0.015], 1).is_none());
    }

    #[test]
    fn link_subproblem_examples() {
        assert_eq!(solve_link_subproblem(&[0.0, 0.0, 0.0], 9.0), vec![0.0, 0.0, 0.0]);
        assert_eq!(solve_link_subproblem(&[1.0, 2.0, 3.0], 9.0), vec![0.0, 0.0, 9.0]);
        assert_eq!(solve_link_subproblem(&[5.0, 5.0, 1.0], 9.0), vec![9.0, 0.0, 0.0]);
    }

    #[test]
    fn link_subproblem_beats_every_vertex() {
        // Vertices of {x >= 0, sum x <= B} are 0 and B*e_l.
        let cases = [[0.3, 0.1, 0.7], [2.0, 2.0, 2.0], [0.0, 1e-9, 0.0]];
        for w in cases {
            let x = solve_link_subproblem(&w, 4.0);
            let got: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
            for l in 0..3 {
                assert!(got >= 4.0 * w[l] - 1e-12);
            }
            assert!(got >= 0.0);
        }
    }

    #[test]
    fn budget_uses_exchange_bits() {
        let p = VideoProfile::cif_three_layer();
        assert!((link_budget(&p, 288_000.0) - 20.0).abs() < 1e-12);
    }
}
