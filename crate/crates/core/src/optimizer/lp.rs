//! Exact LP formulations used as oracles and as a dense fallback.

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Variable};

use super::graph::NetworkGraph;
use super::subproblems::link_budget;
use super::OptimizerError;
use crate::prlnc::VideoProfile;

/// Size limits for exhaustive level enumeration.
pub const ORACLE_MAX_USERS: usize = 3;
pub const ORACLE_MAX_LAYERS: usize = 3;
pub const ORACLE_MAX_LINKS: usize = 20;

/// Links on some path from `u` to the server.
pub(crate) fn relevant_links(g: &NetworkGraph, u: usize) -> Vec<bool> {
    let n = g.node_count();
    let mut from_u = vec![false; n];
    from_u[u] = true;
    for &v in g.topo_order() {
        if from_u[v] {
            for &l in g.out_links(v) {
                from_u[g.links()[l].to] = true;
            }
        }
    }
    let mut to_s = vec![false; n];
    to_s[g.server()] = true;
    for &v in g.topo_order().iter().rev() {
        if g.out_links(v).iter().any(|&l| to_s[g.links()[l].to]) {
            to_s[v] = true;
        }
    }
    g.links().iter().map(|l| from_u[l.from] && to_s[l.to] && l.from != g.server()).collect()
}

/// Flow variables for one (client, class) unicast from `u` to the server:
/// conservation at every node other than `u` and the server. Returns the
/// per-link variables (None outside the relevant set) and the expression
/// for the source rate leaving `u`.
fn add_unicast(
    p: &mut Problem,
    g: &NetworkGraph,
    u: usize,
    relevant: &[bool],
    link_obj: impl Fn(usize) -> f64,
) -> (Vec<Option<Variable>>, LinearExpr) {
    let vars: Vec<Option<Variable>> =
        (0..g.link_count()).map(|e| relevant[e].then(|| p.add_var(link_obj(e), (0.0, f64::INFINITY)))).collect();
    for v in 0..g.node_count() {
        if v == u || v == g.server() {
            continue;
        }
        let mut expr = LinearExpr::empty();
        let mut any = false;
        for &e in g.in_links(v) {
            if let Some(x) = vars[e] {
                expr.add(x, 1.0);
                any = true;
            }
        }
        for &e in g.out_links(v) {
            if let Some(x) = vars[e] {
                expr.add(x, -1.0);
                any = true;
            }
        }
        if any {
            p.add_constraint(expr, ComparisonOp::Eq, 0.0);
        }
    }
    let mut out = LinearExpr::empty();
    for &e in g.out_links(u) {
        if let Some(x) = vars[e] {
            out.add(x, 1.0);
        }
    }
    (vars, out)
}

fn sum_exprs(parts: &[&[(Variable, f64)]]) -> LinearExpr {
    let mut e = LinearExpr::empty();
    for part in parts {
        for &(v, c) in *part {
            e.add(v, c);
        }
    }
    e
}

fn out_terms(g: &NetworkGraph, u: usize, vars: &[Option<Variable>]) -> Vec<(Variable, f64)> {
    g.out_links(u).iter().filter_map(|&e| vars[e].map(|v| (v, 1.0))).collect()
}

/// Level-`k` rate region on the class source rates of one client:
/// prefix sums capped below `k`, exact at `k`; classes above `k` absent.
fn add_level_region(p: &mut Problem, profile: &VideoProfile, class_out: &[Vec<(Variable, f64)>], k: usize) {
    for m in 0..=k {
        let parts: Vec<&[(Variable, f64)]> = class_out[..=m].iter().map(|v| v.as_slice()).collect();
        let op = if m == k { ComparisonOp::Eq } else { ComparisonOp::Le };
        p.add_constraint(sum_exprs(&parts), op, profile.cumulative_rate(m));
    }
}

/// Exact optimum of the full rate-allocation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub objective: f64,
    /// Decodable level per client, in `g.clients()` order.
    pub levels: Vec<Option<usize>>,
    /// Rates indexed `[user][class][link]`.
    pub rates: Vec<Vec<Vec<f64>>>,
}

/// Enumerates every assignment of decodable levels to clients; with the
/// indicators fixed the problem is an LP. Returns the best.
pub fn oracle_solve(g: &NetworkGraph, profile: &VideoProfile, costs: &[f64]) -> Result<OracleSolution, OptimizerError> {
    let users = g.clients();
    let nu = users.len();
    let layers = profile.layers();
    if nu > ORACLE_MAX_USERS || layers > ORACLE_MAX_LAYERS || g.link_count() > ORACLE_MAX_LINKS {
        return Err(OptimizerError::TooLarge { users: nu, layers, links: g.link_count() });
    }
    let uf = nu.max(1) as f64;
    let relevant: Vec<Vec<bool>> = users.iter().map(|&u| relevant_links(g, u)).collect();

    let mut best = OracleSolution { objective: 0.0, levels: vec![None; nu], rates: vec![vec![vec![0.0; g.link_count()]; layers]; nu] };
    let combos = (layers + 1).pow(nu as u32);
    for code in 1..combos {
        let mut c = code;
        let levels: Vec<Option<usize>> = (0..nu)
            .map(|_| {
                let d = c % (layers + 1);
                c /= layers + 1;
                d.checked_sub(1)
            })
            .collect();
        if levels.iter().enumerate().any(|(i, k)| k.is_some() && !relevant[i].iter().any(|&r| r)) {
            continue;
        }
        let constant: f64 = levels.iter().map(|&k| profile.quality_of(k)).sum::<f64>() / uf;
        if constant <= best.objective {
            // Costs only subtract; this assignment cannot win.
            continue;
        }
        let mut p = Problem::new(OptimizationDirection::Minimize);
        let mut flow_vars: Vec<Vec<Vec<Option<Variable>>>> = Vec::with_capacity(nu);
        for (i, &u) in users.iter().enumerate() {
            let mut per_class = Vec::with_capacity(layers);
            let mut class_out = Vec::new();
            if let Some(k) = levels[i] {
                for l in 0..=k {
                    let cost = costs[l] / uf;
                    let (vars, _) = add_unicast(&mut p, g, u, &relevant[i], |e| if g.links()[e].from == u { cost } else { 0.0 });
                    class_out.push(out_terms(g, u, &vars));
                    per_class.push(vars);
                }
                add_level_region(&mut p, profile, &class_out, k);
            }
            while per_class.len() < layers {
                per_class.push(vec![None; g.link_count()]);
            }
            flow_vars.push(per_class);
        }
        for e in 0..g.link_count() {
            let budget = link_budget(profile, g.links()[e].bandwidth);
            let mut cap = LinearExpr::empty();
            let mut any = false;
            for l in 0..layers {
                let users_here: Vec<Variable> = flow_vars.iter().filter_map(|fv| fv[l][e]).collect();
                if users_here.is_empty() {
                    continue;
                }
                let x = p.add_var(0.0, (0.0, f64::INFINITY));
                for r in users_here {
                    p.add_constraint(&[(x, 1.0), (r, -1.0)], ComparisonOp::Ge, 0.0);
                }
                cap.add(x, 1.0);
                any = true;
            }
            if any {
                p.add_constraint(cap, ComparisonOp::Le, budget);
            }
        }
        let Ok(sol) = p.solve() else { continue };
        let objective = constant - sol.objective();
        if objective > best.objective + 1e-12 {
            let rates = flow_vars
                .iter()
                .map(|pc| pc.iter().map(|vars| vars.iter().map(|v| v.map_or(0.0, |v| *sol.var_value(v))).collect()).collect())
                .collect();
            best = OracleSolution { objective, levels, rates };
        }
    }
    Ok(best)
}

/// Dense-LP version of the user subproblem: returns `(level, value)`.
/// Used to cross-check the shortest-path + greedy solver.
pub fn solve_user_subproblem_lp(
    g: &NetworkGraph,
    u: usize,
    mu: &[f64],
    profile: &VideoProfile,
    costs: &[f64],
    users: usize,
) -> Option<(Option<usize>, f64)> {
    let relevant = relevant_links(g, u);
    if !relevant.iter().any(|&r| r) {
        return None;
    }
    let e_count = g.link_count();
    let uf = users as f64;
    let mut best = (None, 0.0);
    for k in 0..profile.layers() {
        let mut p = Problem::new(OptimizationDirection::Minimize);
        let mut class_out = Vec::new();
        for l in 0..=k {
            let (vars, _) = add_unicast(&mut p, g, u, &relevant, |e| {
                mu[l * e_count + e] + if g.links()[e].from == u { costs[l] / uf } else { 0.0 }
            });
            class_out.push(out_terms(g, u, &vars));
        }
        add_level_region(&mut p, profile, &class_out, k);
        if let Ok(sol) = p.solve() {
            let value = profile.quality[k] / uf - sol.objective();
            if value >= best.1 {
                best = (Some(k), value);
            }
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::graph::tests::{line, node};
    use crate::optimizer::graph::Role;
    use crate::optimizer::subproblems::solve_user_subproblem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const COSTS: [f64; 3] = [0.005, 0.01, 0.015];

    #[test]
    fn zero_bandwidth_gives_zero() {
        let p = VideoProfile::cif_three_layer();
        let sol = oracle_solve(&line(0.0), &p, &COSTS).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert_eq!(sol.levels, vec![None]);
    }

    #[test]
    fn ample_single_path_closed_form() {
        let p = VideoProfile::cif_three_layer();
        let sol = oracle_solve(&line(1e9), &p, &COSTS).unwrap();
        let expected = 39.09 - (0.005 * 38.0 + 0.01 * 15.0 + 0.015 * 20.0);
        assert!((sol.objective - expected).abs() < 1e-6, "{}", sol.objective);
        assert_eq!(sol.levels, vec![Some(2)]);
    }

    #[test]
    fn too_large_rejected() {
        let p = VideoProfile::cif_three_layer();
        let mut nodes = vec![node(0, Role::Server)];
        let mut links = Vec::new();
        for i in 1..=4 {
            nodes.push(node(i, Role::Client));
            links.push((i, 0, 1.0, 0.0));
        }
        let g = NetworkGraph::new(nodes, &links).unwrap();
        assert!(matches!(oracle_solve(&g, &p, &COSTS), Err(OptimizerError::TooLarge { .. })));
    }

    fn diamond() -> NetworkGraph {
        NetworkGraph::new(
            vec![node(0, Role::Server), node(1, Role::Intermediate), node(2, Role::Intermediate), node(3, Role::Intermediate), node(4, Role::Client)],
            &[(4, 1, 1.0, 0.0), (4, 2, 1.0, 0.0), (1, 3, 1.0, 0.0), (2, 3, 1.0, 0.0), (1, 0, 1.0, 0.0), (3, 0, 1.0, 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn dense_lp_matches_greedy_user_solver() {
        let p = VideoProfile::cif_three_layer();
        let g = diamond();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for trial in 0..200 {
            let scale = [0.0, 1e-4, 1e-3, 1e-2, 0.1][trial % 5];
            let mu: Vec<f64> = (0..3 * g.link_count()).map(|_| rng.gen::<f64>() * scale).collect();
            let users = 1 + trial % 3;
            let fast = solve_user_subproblem(&g, 4, &mu, &p, &COSTS, users).unwrap();
            let (_, value) = solve_user_subproblem_lp(&g, 4, &mu, &p, &COSTS, users).unwrap();
            assert!((fast.value - value).abs() < 1e-7, "trial {trial}: {} vs {}", fast.value, value);
        }
    }
}
