//! Edmonds–Karp max-flow over the link graph.

use std::collections::VecDeque;

use super::graph::NetworkGraph;

/// Maximum flow from `source` to `sink` with per-link capacities, links
/// usable in their Interest orientation only. Flow conservation makes the
/// value identical for the reversed (Data) orientation.
pub fn max_flow(g: &NetworkGraph, source: usize, sink: usize, capacity: &[f64]) -> f64 {
    if source == sink {
        return f64::INFINITY;
    }
    let links = g.links();
    // Residual arcs: 2i forward, 2i+1 backward.
    let mut residual: Vec<f64> = Vec::with_capacity(links.len() * 2);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); g.node_count()];
    for (i, l) in links.iter().enumerate() {
        residual.push(capacity[i].max(0.0));
        residual.push(0.0);
        adj[l.from].push(2 * i);
        adj[l.to].push(2 * i + 1);
    }
    let head = |arc: usize| if arc % 2 == 0 { links[arc / 2].to } else { links[arc / 2].from };
    let mut total = 0.0;
    loop {
        let mut pred: Vec<Option<usize>> = vec![None; g.node_count()];
        let mut seen = vec![false; g.node_count()];
        seen[source] = true;
        let mut q = VecDeque::from([source]);
        while let Some(v) = q.pop_front() {
            if v == sink {
                break;
            }
            for &a in &adj[v] {
                let w = head(a);
                if !seen[w] && residual[a] > 1e-12 {
                    seen[w] = true;
                    pred[w] = Some(a);
                    q.push_back(w);
                }
            }
        }
        if !seen[sink] {
            return total;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while let Some(a) = pred[v] {
            push = push.min(residual[a]);
            v = head(a ^ 1);
        }
        let mut v = sink;
        while let Some(a) = pred[v] {
            residual[a] -= push;
            residual[a ^ 1] += push;
            v = head(a ^ 1);
        }
        total += push;
    }
}
