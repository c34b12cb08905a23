//! Bandwidth points, seed fan-out and the per-point reductions.

use anyhow::{Context, Result};
use ncndn::config::ExperimentConfig;
use ncndn::optimizer::{optimize, upper_bound_level, NetworkGraph, RateAllocationResult};
use ncndn::sim::{self, SimParams, SimReport};
use rayon::prelude::*;

/// The topology at one bandwidth scale with its allocation.
pub struct Point {
    pub scale: f64,
    pub graph: NetworkGraph,
    pub plan: RateAllocationResult,
    /// Quality each client could reach with the network to itself.
    pub ub: Vec<f64>,
}

impl Point {
    pub fn prepare(cfg: &ExperimentConfig, base: &NetworkGraph, scale: f64) -> Result<Self> {
        let graph = base.scaled(scale);
        let plan = optimize(&graph, &cfg.video, &cfg.costs, &cfg.optimizer)
            .with_context(|| format!("optimizing at bandwidth scale {scale}"))?;
        let ub = graph.clients().iter().map(|&v| cfg.video.quality_of(upper_bound_level(&graph, &cfg.video, v))).collect();
        Ok(Self { scale, graph, plan, ub })
    }

    pub fn exp(&self, user: usize) -> f64 {
        self.plan.expected_quality(user)
    }
}

/// Seed-averaged metrics of one point.
#[derive(Debug, Clone)]
pub struct Summary {
    pub runs: usize,
    /// Mean PSNR per client.
    pub sim: Vec<f64>,
    /// Mean PSNR per client and generation.
    pub per_generation: Vec<Vec<f64>>,
    pub utilization: Vec<f64>,
    /// Largest single-window link load over all runs, as a fraction of
    /// the link's capacity for one window.
    pub peak_utilization: Vec<f64>,
    pub excess: u64,
    pub repeated: u64,
    pub non_innovative: u64,
    /// Event trace of the first seed, when requested.
    pub trace: Option<Vec<String>>,
}

/// Runs every seed at every point; jobs run in parallel and are reduced
/// in (point, seed) order so results do not depend on scheduling.
pub fn simulate(points: &[Point], params: &SimParams, trace: bool) -> Result<Vec<Summary>> {
    let seeds: Vec<u64> = params.seeds().collect();
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..seeds.len()).map(move |k| (p, k))).collect();
    let reports: Vec<SimReport> = jobs
        .par_iter()
        .map(|&(p, k)| {
            let pt = &points[p];
            sim::run(&pt.graph, &pt.plan, params, seeds[k], trace && k == 0)
                .with_context(|| format!("simulating scale {} seed {}", pt.scale, seeds[k]))
        })
        .collect::<Result<_>>()?;
    Ok(reports.chunks(seeds.len()).zip(points).map(|(runs, pt)| summarize(pt, runs, params)).collect())
}

fn summarize(pt: &Point, runs: &[SimReport], params: &SimParams) -> Summary {
    let n = runs.len() as f64;
    let nu = pt.plan.clients.len();
    let gens = params.generations as usize;
    let mut sim = vec![0.0; nu];
    let mut per_generation = vec![vec![0.0; gens]; nu];
    let mut utilization = vec![0.0; pt.graph.link_count()];
    let mut peak_utilization = vec![0.0f64; pt.graph.link_count()];
    let (mut excess, mut repeated, mut non_innovative) = (0, 0, 0);
    let window = pt.plan.profile.gen_duration;
    for r in runs {
        for u in 0..nu {
            sim[u] += r.mean_psnr(u) / n;
            for (acc, p) in per_generation[u].iter_mut().zip(&r.psnr[u]) {
                *acc += p / n;
            }
        }
        for (acc, x) in utilization.iter_mut().zip(r.utilization(&pt.graph)) {
            *acc += x / n;
        }
        for ((acc, bits), link) in peak_utilization.iter_mut().zip(&r.link_window_bits).zip(pt.graph.links()) {
            if link.bandwidth > 0.0 {
                *acc = acc.max(bits / (link.bandwidth * window));
            }
        }
        excess += r.excess_deliveries.iter().sum::<u64>();
        repeated += r.repeated_deliveries.iter().sum::<u64>();
        non_innovative += r.non_innovative_deliveries.iter().sum::<u64>();
    }
    let trace = runs.first().filter(|r| !r.trace.is_empty()).map(|r| r.trace.clone());
    Summary { runs: runs.len(), sim, per_generation, utilization, peak_utilization, excess, repeated, non_innovative, trace }
}

/// Nominal link bandwidth of a scaled topology in kbps (1 kbps = 1024
/// bps): the largest link's rate.
pub fn nominal_kbps(base: &NetworkGraph, scale: f64) -> f64 {
    base.links().iter().map(|l| l.bandwidth).fold(0.0, f64::max) * scale / 1024.0
}

/// Shortest decimal form with at most four fractional digits.
pub fn fmt_num(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(281.25), "281.25");
        assert_eq!(fmt_num(330.00000000001), "330");
        assert_eq!(fmt_num(323.4375), "323.4375");
        assert_eq!(fmt_num(0.0), "0");
    }
}
