//! From averaged conceptual flows to per-generation integer forwarding counts.

use super::graph::NetworkGraph;
use super::quality::RATE_TOL;
use super::subproblems::{link_budget, shortest_path};
use crate::prlnc::VideoProfile;

/// A route from a client to the server and the rate (or count) it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFlow {
    pub links: Vec<usize>,
    pub rate: f64,
}

/// Splits a conserving flow out of `u` into paths, widest branch first.
pub fn decompose(g: &NetworkGraph, u: usize, flow: &[f64]) -> Vec<PathFlow> {
    let mut rest = flow.to_vec();
    let total: f64 = g.out_links(u).iter().map(|&e| rest[e]).sum();
    let eps = 1e-9 * total.max(1.0);
    let mut paths = Vec::new();
    for _ in 0..=g.link_count() * 4 {
        let out: f64 = g.out_links(u).iter().map(|&e| rest[e]).sum();
        if out <= eps {
            break;
        }
        let mut links = Vec::new();
        let mut v = u;
        let mut bottleneck = f64::INFINITY;
        while v != g.server() {
            let Some(&e) = g
                .out_links(v)
                .iter()
                .filter(|&&e| rest[e] > eps)
                .max_by(|&&a, &&b| rest[a].total_cmp(&rest[b]).then(b.cmp(&a)))
            else {
                break;
            };
            bottleneck = bottleneck.min(rest[e]);
            links.push(e);
            v = g.links()[e].to;
        }
        if v != g.server() || links.is_empty() {
            // Residue that does not reach the server is numerical noise.
            break;
        }
        for &e in &links {
            rest[e] -= bottleneck;
        }
        paths.push(PathFlow { links, rate: bottleneck });
    }
    paths
}

/// Dense `[link]` rates of a path set.
pub fn compose(links: usize, paths: &[PathFlow]) -> Vec<f64> {
    let mut out = vec![0.0; links];
    for p in paths {
        for &e in &p.links {
            out[e] += p.rate;
        }
    }
    out
}

/// Scales every path by the worst capacity ratio along it, so the actual
/// flows `z = max_u r` fit every link. Paths through no overloaded link
/// are untouched; conservation holds because whole paths are scaled.
pub fn restore_feasibility(g: &NetworkGraph, profile: &VideoProfile, paths: &mut [Vec<Vec<PathFlow>>]) {
    let layers = profile.layers();
    let mut z = vec![vec![0.0f64; layers]; g.link_count()];
    for per_user in paths.iter() {
        for (l, ps) in per_user.iter().enumerate() {
            let dense = compose(g.link_count(), ps);
            for e in 0..g.link_count() {
                z[e][l] = z[e][l].max(dense[e]);
            }
        }
    }
    let ratio: Vec<f64> = (0..g.link_count())
        .map(|e| {
            let load: f64 = z[e].iter().sum();
            let cap = link_budget(profile, g.links()[e].bandwidth);
            if load <= cap * (1.0 + RATE_TOL) {
                1.0
            } else {
                cap / load
            }
        })
        .collect();
    for per_user in paths.iter_mut() {
        for ps in per_user.iter_mut() {
            for p in ps.iter_mut() {
                let s = p.links.iter().map(|&e| ratio[e]).fold(1.0, f64::min);
                p.rate *= s;
            }
        }
    }
}

/// Integer per-generation forwarding plan.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegerAllocation {
    /// Decodable layer per client (in `g.clients()` order).
    pub levels: Vec<Option<usize>>,
    /// Interests per generation each client issues per class, `[user][class]`.
    pub class_counts: Vec<Vec<u32>>,
    /// Conceptual-flow counts, `[user][class][link]`.
    pub link_counts: Vec<Vec<Vec<u32>>>,
    /// Actual forwarding counts `max_u link_counts`, `[link][class]`.
    pub forward_counts: Vec<Vec<u32>>,
    /// Routes with integer counts, `[user][class]`.
    pub routes: Vec<Vec<Vec<(Vec<usize>, u32)>>>,
}

impl IntegerAllocation {
    pub fn empty(users: usize, layers: usize, links: usize) -> Self {
        Self {
            levels: vec![None; users],
            class_counts: vec![vec![0; layers]; users],
            link_counts: vec![vec![vec![0; links]; layers]; users],
            forward_counts: vec![vec![0; layers]; links],
            routes: vec![vec![Vec::new(); layers]; users],
        }
    }
}

/// Exchanges per generation that fit on each link.
pub fn link_caps(g: &NetworkGraph, profile: &VideoProfile) -> Vec<u32> {
    g.links()
        .iter()
        .map(|l| (link_budget(profile, l.bandwidth) * profile.gen_duration + 1e-9).floor().max(0.0) as u32)
        .collect()
}

/// Class counts for level `k`: every class up to `k` at its encoding
/// rate. Costs increase with the class index, so this is the cheapest way
/// to reach `beta(k)` and it keeps the split identical across clients.
pub fn level_counts(profile: &VideoProfile, k: Option<usize>) -> Vec<u32> {
    (0..profile.layers()).map(|l| if k.is_some_and(|k| l <= k) { profile.alpha[l] as u32 } else { 0 }).collect()
}

/// Highest level whose cumulative threshold the rates reach within `snap`.
pub fn snapped_level(profile: &VideoProfile, rates: &[f64], snap: f64) -> Option<usize> {
    let mut have = 0.0;
    let mut best = None;
    for l in 0..profile.layers() {
        have += rates[l];
        if have >= profile.cumulative_rate(l) * (1.0 - snap) - 1e-12 {
            best = Some(l);
        }
    }
    best
}

/// Largest-remainder split of `n` over weights; ties go to earlier slots.
fn apportion(n: u32, weights: &[f64]) -> Vec<u32> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if total <= 0.0 {
        let mut v = vec![0; weights.len()];
        v[0] = n;
        return v;
    }
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut out: Vec<u32> = exact.iter().map(|x| x.floor() as u32).collect();
    let mut left = n - out.iter().sum::<u32>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

struct Plan<'a> {
    g: &'a NetworkGraph,
    layers: usize,
    caps: Vec<u32>,
    alloc: IntegerAllocation,
}

impl Plan<'_> {
    fn add_route(&mut self, u: usize, l: usize, links: &[usize], n: u32) {
        if n == 0 {
            return;
        }
        for &e in links {
            self.alloc.link_counts[u][l][e] += n;
            let c = self.alloc.link_counts[u][l][e];
            let z = &mut self.alloc.forward_counts[e][l];
            *z = (*z).max(c);
        }
        let routes = &mut self.alloc.routes[u][l];
        match routes.iter_mut().find(|(p, _)| p == links) {
            Some((_, c)) => *c += n,
            None => routes.push((links.to_vec(), n)),
        }
    }

    fn remove_route(&mut self, u: usize, l: usize, idx: usize, n: u32) {
        let links = self.alloc.routes[u][l][idx].0.clone();
        self.alloc.routes[u][l][idx].1 -= n;
        if self.alloc.routes[u][l][idx].1 == 0 {
            self.alloc.routes[u][l].remove(idx);
        }
        for &e in &links {
            self.alloc.link_counts[u][l][e] -= n;
            self.refresh_z(e, l);
        }
    }

    fn refresh_z(&mut self, e: usize, l: usize) {
        self.alloc.forward_counts[e][l] = self.alloc.link_counts.iter().map(|per| per[l][e]).max().unwrap_or(0);
    }

    fn load(&self, e: usize) -> u32 {
        self.alloc.forward_counts[e].iter().sum()
    }

    fn clear_user(&mut self, u: usize) {
        for l in 0..self.layers {
            while !self.alloc.routes[u][l].is_empty() {
                let n = self.alloc.routes[u][l][0].1;
                self.remove_route(u, l, 0, n);
            }
        }
    }

    /// Cheapest route for one more unit of (u, l): links where the unit
    /// rides an existing aggregate cost 0, links with spare capacity cost
    /// 1, full links and `avoid` are unusable.
    fn spare_route(&self, user: usize, u: usize, l: usize, avoid: Option<usize>) -> Option<Vec<usize>> {
        let weights: Vec<f64> = (0..self.g.link_count())
            .map(|e| {
                if Some(e) == avoid || self.g.links()[e].from == self.g.server() {
                    f64::INFINITY
                } else if self.alloc.link_counts[user][l][e] < self.alloc.forward_counts[e][l] {
                    1e-6
                } else if self.load(e) < self.caps[e] {
                    1.0
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let (d, path) = shortest_path(self.g, u, &weights)?;
        d.is_finite().then_some(path)
    }

    fn route_user(&mut self, u: usize, user: usize, profile: &VideoProfile, paths: &[Vec<PathFlow>], level: Option<usize>) {
        let counts = level_counts(profile, level);
        self.alloc.levels[user] = level;
        self.alloc.class_counts[user] = counts.clone();
        for l in 0..self.layers {
            if counts[l] == 0 {
                continue;
            }
            let usable: Vec<&PathFlow> = paths[l].iter().filter(|p| p.rate > 0.0).collect();
            let fallback: Vec<PathFlow>;
            let chosen: Vec<&PathFlow> = if !usable.is_empty() {
                usable
            } else if let Some(other) = (0..self.layers).map(|m| &paths[m]).find(|ps| ps.iter().any(|p| p.rate > 0.0)) {
                other.iter().filter(|p| p.rate > 0.0).collect()
            } else {
                let hops = vec![1.0; self.g.link_count()];
                let Some((_, links)) = shortest_path(self.g, u, &hops) else { continue };
                fallback = vec![PathFlow { links, rate: 1.0 }];
                fallback.iter().collect()
            };
            let weights: Vec<f64> = chosen.iter().map(|p| p.rate).collect();
            let split = apportion(counts[l], &weights);
            for (p, n) in chosen.iter().zip(split) {
                self.add_route(user, l, &p.links, n);
            }
        }
    }

    fn first_violation(&self) -> Option<usize> {
        (0..self.g.link_count()).find(|&e| self.load(e) > self.caps[e])
    }

    /// Tries to lower `forward_counts[e][l]` by one by moving one unit of
    /// every maximal holder off `e`. Leaves the plan untouched on failure.
    fn relieve(&mut self, e: usize, l: usize) -> bool {
        let z = self.alloc.forward_counts[e][l];
        if z == 0 {
            return false;
        }
        let holders: Vec<usize> = (0..self.alloc.link_counts.len()).filter(|&u| self.alloc.link_counts[u][l][e] == z).collect();
        let snapshot = self.alloc.clone();
        for &user in &holders {
            let Some(idx) = self.alloc.routes[user][l].iter().position(|(p, c)| *c > 0 && p.contains(&e)) else {
                self.alloc = snapshot;
                return false;
            };
            self.remove_route(user, l, idx, 1);
            let u = self.g.clients()[user];
            match self.spare_route(user, u, l, Some(e)) {
                Some(path) => self.add_route(user, l, &path, 1),
                None => {
                    self.alloc = snapshot;
                    return false;
                }
            }
        }
        true
    }
}

/// Turns restored continuous path flows into integer counts that respect
/// every link's per-generation capacity, starting each client at the level
/// its flows reach within `snap`.
pub fn integerize(g: &NetworkGraph, profile: &VideoProfile, paths: &[Vec<Vec<PathFlow>>], snap: f64) -> IntegerAllocation {
    let levels = paths
        .iter()
        .map(|per| {
            let rates: Vec<f64> = per.iter().map(|ps| ps.iter().map(|p| p.rate).sum()).collect();
            snapped_level(profile, &rates, snap)
        })
        .collect();
    integerize_from(g, profile, paths, levels)
}

/// Routes every client at its starting level along `paths` (falling back
/// to other classes' paths, then to a fewest-hop path), then clears
/// overloaded links by rerouting single units and, failing that, lowering
/// the highest-level client on the link by one layer.
pub fn integerize_from(
    g: &NetworkGraph,
    profile: &VideoProfile,
    paths: &[Vec<Vec<PathFlow>>],
    mut levels: Vec<Option<usize>>,
) -> IntegerAllocation {
    let layers = profile.layers();
    let users = g.clients().len();
    let mut plan = Plan { g, layers, caps: link_caps(g, profile), alloc: IntegerAllocation::empty(users, layers, g.link_count()) };
    for user in 0..users {
        plan.route_user(g.clients()[user], user, profile, &paths[user], levels[user]);
    }

    let mut guard = 0usize;
    while let Some(e) = plan.first_violation() {
        guard += 1;
        let relieved = guard < 100_000 && (0..layers).rev().any(|l| plan.relieve(e, l));
        if relieved {
            continue;
        }
        let victim = (0..users)
            .filter(|&u| (0..layers).any(|l| plan.alloc.link_counts[u][l][e] > 0))
            .max_by_key(|&u| (levels[u].map_or(0, |k| k + 1), std::cmp::Reverse(u)))
            .expect("an overloaded link carries some flow");
        levels[victim] = levels[victim].and_then(|k| k.checked_sub(1));
        log::debug!("integerize: lowering client {} to {:?}", g.id(g.clients()[victim]), levels[victim]);
        plan.clear_user(victim);
        plan.route_user(g.clients()[victim], victim, profile, &paths[victim], levels[victim]);
    }
    plan.alloc
}
