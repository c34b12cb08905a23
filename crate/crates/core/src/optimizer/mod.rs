//! Interest-rate allocation by Lagrangian relaxation.
//!
//! The coupling constraints `x >= r` are dualised. Each iteration solves
//! one subproblem per client and one per link, moves the multipliers along
//! the subgradient `r - x`, and folds the subproblem solutions into running
//! averages from which the final allocation is recovered.

pub mod allocation;
pub mod graph;
pub mod lp;
pub mod maxflow;
pub mod quality;
pub mod subproblems;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use allocation::IntegerAllocation;
pub use graph::{GraphError, Link, NetworkGraph, Node, Role};
pub use lp::{oracle_solve, OracleSolution};
pub use quality::{decodable_level, quality, validate_costs, CostViolation};
pub use subproblems::{solve_link_subproblem, solve_user_subproblem, UserSolution};

use allocation::{decompose, integerize, integerize_from, restore_feasibility, PathFlow};
use subproblems::link_budget;

use crate::prlnc::VideoProfile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("client {client} has no path to the server")]
    Infeasible { client: u32 },
    #[error("instance too large for the oracle: {users} users, {layers} layers, {links} links")]
    TooLarge { users: usize, layers: usize, links: usize },
    #[error("cost vector has {found} entries, expected {expected}")]
    CostLength { expected: usize, found: usize },
}

/// Step size `theta[t] = a / (b + c t)` and stopping rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub max_iter: usize,
    /// Relative duality gap at which iteration stops.
    pub tol: f64,
    /// Relative shortfall below a layer threshold still rounded up to it
    /// when integerizing.
    pub level_snap: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self { a: 0.01, b: 10.0, c: 1.0, max_iter: 2000, tol: 1e-3, level_snap: 0.05 }
    }
}

impl OptimizerParams {
    pub fn step(&self, t: usize) -> f64 {
        self.a / (self.b + self.c * t as f64)
    }
}

/// Multipliers and recovered primal averages.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    /// `mu[user][class * links + link]`.
    pub mu: Vec<Vec<f64>>,
    /// Running average of the user subproblem solutions, `[user][class][link]`.
    pub r_hat: Vec<Vec<Vec<f64>>>,
    /// Running average of the link subproblem solutions, `[link][class]`.
    pub x_hat: Vec<Vec<f64>>,
    /// Completed iterations.
    pub t: usize,
}

impl DualState {
    pub fn new(users: usize, layers: usize, links: usize) -> Self {
        Self {
            mu: vec![vec![0.0; layers * links]; users],
            r_hat: vec![vec![vec![0.0; links]; layers]; users],
            x_hat: vec![vec![0.0; layers]; links],
            t: 0,
        }
    }

    /// One multiplier update with iterate `r[t]`, `x[t]`, then the
    /// `1/t`-weighted running averages.
    pub fn subgradient_step(&mut self, params: &OptimizerParams, r: &[Vec<Vec<f64>>], x: &[Vec<f64>]) {
        self.t += 1;
        let t = self.t as f64;
        let theta = params.step(self.t);
        let links = x.len();
        for (u, per_user) in r.iter().enumerate() {
            for (l, rl) in per_user.iter().enumerate() {
                for e in 0..links {
                    let m = &mut self.mu[u][l * links + e];
                    *m = (*m + theta * (rl[e] - x[e][l])).max(0.0);
                    let avg = &mut self.r_hat[u][l][e];
                    *avg = (t - 1.0) / t * *avg + rl[e] / t;
                }
            }
        }
        for e in 0..links {
            for (l, &xl) in x[e].iter().enumerate() {
                let avg = &mut self.x_hat[e][l];
                *avg = (t - 1.0) / t * *avg + xl / t;
            }
        }
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub dual: f64,
    pub primal: f64,
    /// Recovered source rate per client and class, `[user][class]`.
    pub rates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateAllocationResult {
    /// Client node ids, in the order used by every per-user vector.
    pub clients: Vec<u32>,
    pub profile: VideoProfile,
    pub costs: Vec<f64>,
    /// Recovered and feasibility-restored conceptual flows, `[user][class][link]`.
    pub r_hat: Vec<Vec<Vec<f64>>>,
    /// Actual flows after restoration (`max_u r_hat`), `[link][class]`.
    pub x_hat: Vec<Vec<f64>>,
    /// Integer per-generation plan handed to the protocol.
    pub allocation: IntegerAllocation,
    /// Objective of the integer plan.
    pub objective: f64,
    /// Smallest dual value seen.
    pub dual_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl RateAllocationResult {
    pub fn level(&self, user: usize) -> Option<usize> {
        self.allocation.levels[user]
    }

    /// Quality the integer plan delivers to a client.
    pub fn expected_quality(&self, user: usize) -> f64 {
        self.profile.quality_of(self.level(user))
    }

    /// Integer plan's source rates per class for a client, packets/s.
    pub fn class_rates(&self, user: usize) -> Vec<f64> {
        self.allocation.class_counts[user].iter().map(|&n| n as f64 / self.profile.gen_duration).collect()
    }

    pub fn user_index(&self, client_id: u32) -> Option<usize> {
        self.clients.iter().position(|&c| c == client_id)
    }

    /// `link_from,link_to,class,user,rate_pps`; `user` is `*` on the
    /// forwarding rows, the client id on the conceptual-flow rows.
    pub fn write_allocation_csv<W: Write>(&self, g: &NetworkGraph, mut w: W) -> io::Result<()> {
        writeln!(w, "link_from,link_to,class,user,rate_pps")?;
        let t = self.profile.gen_duration;
        for (e, link) in g.links().iter().enumerate() {
            let (a, b) = (g.id(link.from), g.id(link.to));
            for l in 0..self.profile.layers() {
                let z = self.allocation.forward_counts[e][l];
                if z > 0 {
                    writeln!(w, "{a},{b},{l},*,{}", fmt_rate(z as f64 / t))?;
                }
                for (u, &cid) in self.clients.iter().enumerate() {
                    let n = self.allocation.link_counts[u][l][e];
                    if n > 0 {
                        writeln!(w, "{a},{b},{l},{cid},{}", fmt_rate(n as f64 / t))?;
                    }
                }
            }
        }
        Ok(())
    }

    /// `iter,dual_obj,primal_obj,r_<client>_<class>...`
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "iter,dual_obj,primal_obj")?;
        for c in &self.clients {
            for l in 0..self.profile.layers() {
                write!(w, ",r_{c}_{l}")?;
            }
        }
        writeln!(w)?;
        for row in &self.trace {
            write!(w, "{},{:.9},{:.9}", row.iter, row.dual, row.primal)?;
            for per in &row.rates {
                for r in per {
                    write!(w, ",{r:.6}")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn fmt_rate(r: f64) -> String {
    let s = format!("{r:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

/// Objective `(1/U) sum_u (Q_u - c.r^u)` for given per-user class rates.
pub fn objective(profile: &VideoProfile, costs: &[f64], class_rates: &[Vec<f64>]) -> f64 {
    if class_rates.is_empty() {
        return 0.0;
    }
    let sum: f64 = class_rates
        .iter()
        .map(|r| quality(profile, r) - r.iter().zip(costs).map(|(a, c)| a * c).sum::<f64>())
        .sum();
    sum / class_rates.len() as f64
}

fn decompose_all(g: &NetworkGraph, users: &[usize], flows: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<PathFlow>>> {
    users.iter().zip(flows).map(|(&u, per)| per.iter().map(|f| decompose(g, u, f)).collect()).collect()
}

fn dense(g: &NetworkGraph, paths: &[Vec<Vec<PathFlow>>]) -> Vec<Vec<Vec<f64>>> {
    paths.iter().map(|per| per.iter().map(|ps| allocation::compose(g.link_count(), ps)).collect()).collect()
}

/// Restored primal value of the current averages.
fn primal_value(g: &NetworkGraph, profile: &VideoProfile, costs: &[f64], r_hat: &[Vec<Vec<f64>>]) -> (f64, Vec<Vec<Vec<PathFlow>>>) {
    let mut paths = decompose_all(g, g.clients(), r_hat);
    restore_feasibility(g, profile, &mut paths);
    let totals: Vec<Vec<f64>> = paths.iter().map(|per| per.iter().map(|ps| ps.iter().map(|p| p.rate).sum()).collect()).collect();
    (objective(profile, costs, &totals), paths)
}

pub fn optimize(
    g: &NetworkGraph,
    profile: &VideoProfile,
    costs: &[f64],
    params: &OptimizerParams,
) -> Result<RateAllocationResult, OptimizerError> {
    let layers = profile.layers();
    if costs.len() != layers {
        return Err(OptimizerError::CostLength { expected: layers, found: costs.len() });
    }
    for v in validate_costs(profile, costs) {
        log::warn!("cost vector: {v}");
    }
    let users = g.clients();
    let nu = users.len();
    for &u in users {
        if !g.reaches_server(u) {
            return Err(OptimizerError::Infeasible { client: g.id(u) });
        }
    }
    let ne = g.link_count();
    let budgets: Vec<f64> = g.links().iter().map(|l| link_budget(profile, l.bandwidth)).collect();
    let mut state = DualState::new(nu, layers, ne);
    let mut trace = Vec::new();
    let mut best_dual = f64::INFINITY;
    let mut converged = false;

    while state.t < params.max_iter {
        let mut dual = 0.0;
        let mut r: Vec<Vec<Vec<f64>>> = Vec::with_capacity(nu);
        for (i, &u) in users.iter().enumerate() {
            let sol = solve_user_subproblem(g, u, &state.mu[i], profile, costs, nu)
                .ok_or(OptimizerError::Infeasible { client: g.id(u) })?;
            dual += sol.value;
            r.push(sol.link_rates(ne));
        }
        let mut x = Vec::with_capacity(ne);
        for e in 0..ne {
            let w: Vec<f64> = (0..layers).map(|l| (0..nu).map(|i| state.mu[i][l * ne + e]).sum()).collect();
            let xe = solve_link_subproblem(&w, budgets[e]);
            dual += xe.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            x.push(xe);
        }
        best_dual = best_dual.min(dual);
        state.subgradient_step(params, &r, &x);

        let (primal, paths) = primal_value(g, profile, costs, &state.r_hat);
        let rates = paths.iter().map(|per| per.iter().map(|ps| ps.iter().map(|p| p.rate).sum()).collect()).collect();
        trace.push(TraceRow { iter: state.t, dual, primal, rates });
        let gap = (best_dual - primal) / best_dual.abs().max(1e-9);
        if nu == 0 || gap.abs() <= params.tol {
            converged = true;
            break;
        }
    }

    let (_, paths) = primal_value(g, profile, costs, &state.r_hat);
    let r_hat = dense(g, &paths);
    let mut x_hat = vec![vec![0.0; layers]; ne];
    for per in &r_hat {
        for (l, f) in per.iter().enumerate() {
            for e in 0..ne {
                x_hat[e][l] = f64::max(x_hat[e][l], f[e]);
            }
        }
    }
    // The averages of a nonconvex dual can straddle two levels, so two
    // integer plans are built from the same routes and the better is kept:
    // one from the snapped averages, one starting every client at its
    // max-flow level and degrading where the plan overloads a link.
    let integer_value = |a: &IntegerAllocation| {
        let counts: Vec<Vec<f64>> =
            a.class_counts.iter().map(|c| c.iter().map(|&n| n as f64 / profile.gen_duration).collect()).collect();
        objective(profile, costs, &counts)
    };
    let snapped = integerize(g, profile, &paths, params.level_snap);
    let greedy_levels = users.iter().map(|&u| upper_bound_level(g, profile, u)).collect();
    let greedy = integerize_from(g, profile, &paths, greedy_levels);
    let (alloc, obj) = {
        let (a, b) = (integer_value(&snapped), integer_value(&greedy));
        if b > a + 1e-12 {
            (greedy, b)
        } else {
            (snapped, a)
        }
    };
    log::info!(
        "optimize: {} iterations, dual {:.6}, integer objective {:.6}, converged {}",
        state.t,
        best_dual,
        obj,
        converged
    );
    Ok(RateAllocationResult {
        clients: users.iter().map(|&u| g.id(u)).collect(),
        profile: profile.clone(),
        costs: costs.to_vec(),
        r_hat,
        x_hat,
        allocation: alloc,
        objective: obj,
        dual_bound: if best_dual.is_finite() { best_dual } else { 0.0 },
        iterations: state.t,
        converged,
        trace,
    })
}

/// Per-client upper bound: the client's max-flow with every link
/// dedicated to it, mapped to the layer it could decode.
pub fn upper_bound_level(g: &NetworkGraph, profile: &VideoProfile, client: usize) -> Option<usize> {
    let caps: Vec<f64> = g.links().iter().map(|l| link_budget(profile, l.bandwidth)).collect();
    let flow = maxflow::max_flow(g, client, g.server(), &caps);
    (0..profile.layers()).rev().find(|&l| flow >= profile.cumulative_rate(l) * (1.0 - quality::RATE_TOL))
}
