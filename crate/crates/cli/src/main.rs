mod experiment;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ncndn::config::{ConfigError, ExperimentConfig};
use ncndn::optimizer::{validate_costs, NetworkGraph, OptimizerError};

use experiment::{fmt_num, nominal_kbps, Point};

#[derive(Parser)]
#[command(name = "ncndn", version, about = "Rate allocation and simulation for coded layered video over NDN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, default_value = "fixtures/planetlab.toml")]
    config: PathBuf,
    /// Output directory, overriding the config's.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimFlags {
    /// Run only this seed, or start the seed list here when `--runs` is
    /// also given.
    #[arg(long)]
    seed: Option<u64>,
    /// Seeds averaged per bandwidth point.
    #[arg(long)]
    runs: Option<u32>,
    /// Carry exact client sets instead of hashed Bloom filters.
    #[arg(long)]
    exact_bloom: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check the config, topology and cost vector.
    Validate {
        #[arg(long, default_value = "fixtures/planetlab.toml")]
        config: PathBuf,
    },
    /// Compute the Interest-rate allocation at one bandwidth scale.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        bandwidth_scale: f64,
    },
    /// Simulate the configured bandwidth sweep, or a single scale.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
        #[arg(long)]
        bandwidth_scale: Option<f64>,
        /// Write the first seed's event trace for every point.
        #[arg(long)]
        trace: bool,
    },
    /// Convergence traces, the quality-vs-bandwidth sweep and the
    /// per-generation quality series in one run.
    ReproducePaper {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
    },
}

/// Failures map to exit codes: 1 invalid input, 2 infeasible, 3 I/O.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(OptimizerError::Infeasible { .. }) = cause.downcast_ref::<OptimizerError>() {
            return 2;
        }
        if matches!(cause.downcast_ref::<ConfigError>(), Some(ConfigError::Io { .. })) || cause.is::<std::io::Error>() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Validate { config } => validate(&config),
        Command::Optimize { common, bandwidth_scale } => cmd_optimize(&common, bandwidth_scale),
        Command::Simulate { common, sim, bandwidth_scale, trace } => cmd_simulate(&common, &sim, bandwidth_scale, trace),
        Command::ReproducePaper { common, sim } => reproduce(&common, &sim),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load(common: &Common, sim: Option<&SimFlags>) -> Result<(ExperimentConfig, NetworkGraph, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(f) = sim {
        if let Some(seed) = f.seed {
            cfg.sim.base_seed = seed;
            cfg.sim.runs = 1;
        }
        if let Some(runs) = f.runs {
            anyhow::ensure!(runs > 0, "--runs must be positive");
            cfg.sim.runs = runs;
        }
        cfg.sim.exact_bloom |= f.exact_bloom;
    }
    let g = cfg.load_topology()?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output.clone());
    Ok((cfg, g, out))
}

fn check_scale(s: f64) -> Result<f64> {
    anyhow::ensure!(s.is_finite() && s >= 0.0, "bandwidth scale must be finite and nonnegative, got {s}");
    Ok(s)
}

fn validate(path: &Path) -> Result<ExitCode> {
    let mut ok = true;
    let mut report = |pass: bool, what: &str, detail: String| {
        ok &= pass;
        println!("{} {what}: {detail}", if pass { "PASS" } else { "FAIL" });
    };
    let cfg = match ExperimentConfig::load(path) {
        Ok(cfg) => cfg,
        Err(e @ ConfigError::Io { .. }) => return Err(e.into()),
        Err(e) => {
            report(false, "config", e.to_string());
            return Ok(ExitCode::from(1));
        }
    };
    report(true, "config", format!("{} layers, {} seeds per point", cfg.video.layers(), cfg.sim.runs));
    let violations = validate_costs(&cfg.video, &cfg.costs);
    if violations.is_empty() {
        report(true, "costs", format!("{:?} increasing and below every quality-gain bound", cfg.costs));
    }
    for v in &violations {
        report(false, "costs", v.to_string());
    }
    match cfg.load_topology() {
        Err(e @ ConfigError::Io { .. }) => return Err(e.into()),
        Err(e) => report(false, "topology", e.to_string()),
        Ok(g) => {
            report(
                true,
                "topology",
                format!("{} nodes, {} links, {} clients, acyclic", g.node_count(), g.link_count(), g.clients().len()),
            );
            let stranded: Vec<u32> = g.clients().iter().filter(|&&v| !g.reaches_server(v)).map(|&v| g.id(v)).collect();
            if stranded.is_empty() {
                report(true, "reachability", "every client reaches the server".into());
            } else {
                report(false, "reachability", format!("no path to the server from clients {stranded:?}"));
            }
        }
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_optimize(common: &Common, scale: f64) -> Result<ExitCode> {
    let (cfg, base, out) = load(common, None)?;
    let pt = Point::prepare(&cfg, &base, check_scale(scale)?)?;
    output::write_allocation(&out, &pt)?;
    print_plan(&base, &pt);
    Ok(ExitCode::SUCCESS)
}

fn print_plan(base: &NetworkGraph, pt: &Point) {
    let plan = &pt.plan;
    println!(
        "bandwidth {} kbps: objective {:.4}, dual bound {:.4}, {} iterations{}",
        fmt_num(nominal_kbps(base, pt.scale)),
        plan.objective,
        plan.dual_bound,
        plan.iterations,
        if plan.converged { "" } else { " (iteration limit)" }
    );
    println!("client  level  UB     EXP    rates (pkts/s)");
    for (u, c) in plan.clients.iter().enumerate() {
        let level = plan.level(u).map_or("-".to_string(), |l| l.to_string());
        let rates: Vec<String> = plan.class_rates(u).iter().map(|&r| fmt_num(r)).collect();
        println!("{c:<7} {level:<6} {:<6.2} {:<6.2} {}", pt.ub[u], pt.exp(u), rates.join("/"));
    }
}

fn cmd_simulate(common: &Common, flags: &SimFlags, scale: Option<f64>, trace: bool) -> Result<ExitCode> {
    let (cfg, base, out) = load(common, Some(flags))?;
    let scales = match scale {
        Some(s) => vec![check_scale(s)?],
        None => cfg.sim.bandwidth_scales.clone(),
    };
    let points = scales.iter().map(|&s| Point::prepare(&cfg, &base, s)).collect::<Result<Vec<_>>>()?;
    let sums = experiment::simulate(&points, &cfg.sim, trace)?;
    output::write_psnr_vs_bandwidth(&out, &base, &points, &sums)?;
    for (pt, s) in points.iter().zip(&sums) {
        let dir = output::point_dir(&out, &base, pt.scale);
        output::write_allocation(&dir, pt)?;
        output::write_point_metrics(&dir, pt, s)?;
    }
    print_sweep(&base, &points, &sums);
    Ok(ExitCode::SUCCESS)
}

fn print_sweep(base: &NetworkGraph, points: &[Point], sums: &[experiment::Summary]) {
    for (pt, s) in points.iter().zip(sums) {
        let cells: Vec<String> = pt
            .plan
            .clients
            .iter()
            .enumerate()
            .map(|(u, c)| format!("{c}: {:.2}/{:.2}", pt.exp(u), s.sim[u]))
            .collect();
        println!(
            "{:>9} kbps  EXP/SIM  {}  ({} runs, {} redundant, {} non-innovative)",
            fmt_num(nominal_kbps(base, pt.scale)),
            cells.join("  "),
            s.runs,
            s.repeated + s.excess,
            s.non_innovative
        );
    }
}

fn reproduce(common: &Common, flags: &SimFlags) -> Result<ExitCode> {
    let (cfg, base, out) = load(common, Some(flags))?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    // Convergence at the lowest, middle and highest sweep bandwidth.
    let mut sweep = cfg.sim.bandwidth_scales.clone();
    sweep.sort_by(f64::total_cmp);
    let mut conv_scales = vec![sweep[0], sweep[sweep.len() / 2], sweep[sweep.len() - 1]];
    conv_scales.dedup();
    let mut conv_dirs = Vec::new();
    for &s in &conv_scales {
        let pt = Point::prepare(&cfg, &base, s)?;
        let dir = output::point_dir(&out, &base, s);
        output::write_allocation(&dir, &pt)?;
        conv_dirs.push(dir.file_name().unwrap().to_string_lossy().into_owned());
        print_plan(&base, &pt);
    }

    let points = cfg.sim.bandwidth_scales.iter().map(|&s| Point::prepare(&cfg, &base, s)).collect::<Result<Vec<_>>>()?;
    let sums = experiment::simulate(&points, &cfg.sim, false)?;
    output::write_psnr_vs_bandwidth(&out, &base, &points, &sums)?;
    print_sweep(&base, &points, &sums);

    let series = cfg.sim.time_series_scales.iter().map(|&s| Point::prepare(&cfg, &base, s)).collect::<Result<Vec<_>>>()?;
    let series_sums = experiment::simulate(&series, &cfg.sim, true)?;
    let mut series_dirs = Vec::new();
    for (pt, s) in series.iter().zip(&series_sums) {
        let dir = output::point_dir(&out, &base, pt.scale);
        output::write_allocation(&dir, pt)?;
        output::write_point_metrics(&dir, pt, s)?;
        series_dirs.push(dir.file_name().unwrap().to_string_lossy().into_owned());
    }
    print_sweep(&base, &series, &series_sums);

    let clients: Vec<u32> = base.clients().iter().map(|&v| base.id(v)).collect();
    output::write_gnuplot(&out, &clients, cfg.video.layers(), &conv_dirs, &series_dirs)?;
    // Warn when a bound the sweep relies on is violated.
    for (pt, s) in points.iter().zip(&sums) {
        for (u, c) in pt.plan.clients.iter().enumerate() {
            if pt.exp(u) > pt.ub[u] + 1e-9 {
                log::warn!("client {c} at scale {}: EXP {} above UB {}", pt.scale, pt.exp(u), pt.ub[u]);
            }
            if s.sim[u] > pt.exp(u) + 1e-9 {
                log::warn!("client {c} at scale {}: SIM {} above EXP {}", pt.scale, s.sim[u], pt.exp(u));
            }
        }
    }
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}
