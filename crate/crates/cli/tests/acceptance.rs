//! Exit criteria. Runs every check in order, prints one verdict line per
//! criterion and fails the target if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ncndn::config::{read_topology, ExperimentConfig};
use ncndn::galois::CoefficientMatrix;
use ncndn::optimizer::{optimize, oracle_solve, validate_costs, CostViolation, NetworkGraph, OptimizerParams};
use ncndn::prlnc::{encode, DecoderState, Generation, VideoProfile};
use ncndn::protocol::{build_bloom, BloomMode};
use ncndn::sim::{self, SimParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const COSTS: [f64; 3] = [0.005, 0.01, 0.015];

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn topo(name: &str) -> NetworkGraph {
    read_topology(&fixture(&format!("{name}.topo"))).expect("fixture topology")
}

fn ncndn(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_ncndn")).args(args).output().expect("run ncndn");
    assert!(out.status.success(), "ncndn {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Optimizer objective within 1% of the exhaustive oracle on the five small
/// fixtures, each in under a minute.
fn optimizer_vs_oracle() -> Verdict {
    let p = VideoProfile::cif_three_layer();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["line", "diamond", "butterfly", "bottleneck", "tree"] {
        let g = topo(name);
        let t = Instant::now();
        let plan = optimize(&g, &p, &COSTS, &OptimizerParams::default()).unwrap();
        let oracle = oracle_solve(&g, &p, &COSTS).unwrap();
        let secs = t.elapsed().as_secs_f64();
        let rel = (plan.objective - oracle.objective).abs() / oracle.objective.abs().max(1e-12);
        pass &= rel <= 0.01 && secs < 60.0;
        parts.push(format!("{name} {:.4}/{:.4} ({:.3}%, {secs:.2}s)", plan.objective, oracle.objective, rel * 100.0));
    }
    verdict(pass, parts.join(", "))
}

/// Client 29's recovered per-class rates at the top and bottom of the sweep.
fn convergence() -> Verdict {
    let cfg = ExperimentConfig::load(&fixture("planetlab.toml")).unwrap();
    let g0 = cfg.load_topology().unwrap();
    let within = |x: f64, want: f64| (x - want).abs() <= 0.02 * want;
    let rates_at = |scale: f64| {
        let plan = optimize(&g0.scaled(scale), &cfg.video, &cfg.costs, &cfg.optimizer).unwrap();
        let u = plan.user_index(29).unwrap();
        assert!(plan.iterations <= cfg.optimizer.max_iter);
        plan.class_rates(u)
    };
    let high = rates_at(2.0);
    let low = rates_at(1.0);
    let high_ok = high.iter().zip([38.0, 15.0, 20.0]).all(|(&x, w)| within(x, w));
    let low_ok = within(low[0], 38.0) && low[1..].iter().all(|&x| x == 0.0);
    verdict(high_ok && low_ok, format!("client 29 at 562.5 kbps {high:?}, at 281.25 kbps {low:?}"))
}

/// |SIM - EXP| <= 0.5 dB for every client and sweep point, 100 seeds each,
/// through the command-line driver.
fn psnr_fidelity() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("planetlab.toml");
    let t = Instant::now();
    ncndn(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--runs", "100"]);
    let elapsed = t.elapsed();
    let csv = std::fs::read_to_string(dir.path().join("psnr_vs_bandwidth.csv")).unwrap();
    let mut rows = 0;
    let mut worst = (0.0f64, String::new());
    let mut over = Vec::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (exp, sim): (f64, f64) = (f[3].parse().unwrap(), f[4].parse().unwrap());
        let dev = (sim - exp).abs();
        rows += 1;
        if dev > worst.0 {
            worst = (dev, format!("client {} at {} kbps: EXP {exp} SIM {sim}", f[0], f[1]));
        }
        if dev > 0.5 {
            over.push(format!("{}@{}={dev:.2}", f[0], f[1]));
        }
    }
    let pass = rows == 45 && over.is_empty() && elapsed < Duration::from_secs(30 * 60);
    verdict(
        pass,
        format!(
            "{rows} rows in {:.0}s, worst {:.3} dB ({}){}",
            elapsed.as_secs_f64(),
            worst.0,
            worst.1,
            if over.is_empty() { String::new() } else { format!(", above 0.5 dB: {}", over.join(" ")) }
        ),
    )
}

/// EXP on a one-client line steps through the four quality values, each
/// step within one increment of its cumulative-rate threshold.
fn staircase() -> Verdict {
    let p = VideoProfile::cif_three_layer();
    let base = topo("staircase");
    let unit = base.links()[0].bandwidth;
    // Thresholds: cumulative rate times the bits of one Interest/Data pair.
    let exchange_bits = f64::from((200 + 1600) * 8);
    let thresholds: Vec<f64> = [38.0, 38.0 + 15.0, 38.0 + 15.0 + 20.0].iter().map(|r| r * exchange_bits).collect();
    let step = 5_000.0;
    let mut seen: Vec<f64> = Vec::new();
    let mut first_at: BTreeMap<u64, f64> = BTreeMap::new();
    let mut bw = 0.0;
    while bw <= 1_200_000.0 {
        let plan = optimize(&base.scaled(bw / unit), &p, &COSTS, &OptimizerParams::default()).unwrap();
        let q = plan.expected_quality(0);
        if seen.last() != Some(&q) {
            seen.push(q);
            first_at.entry((q * 100.0).round() as u64).or_insert(bw);
        }
        bw += step;
    }
    let values_ok = seen == [0.0, 36.48, 37.82, 39.09];
    let locs: Vec<f64> = [36.48, 37.82, 39.09].iter().map(|q| first_at.get(&((q * 100.0f64).round() as u64)).copied().unwrap_or(f64::NAN)).collect();
    let locs_ok = locs.iter().zip(&thresholds).all(|(l, t)| (l - t).abs() <= step);
    verdict(values_ok && locs_ok, format!("values {seen:?}, steps at {locs:?} bps vs {thresholds:?}"))
}

/// No client receives the same coded packet twice for one (class,
/// generation), nor more Data than it asked for, in exact-set mode.
fn redundancy() -> Verdict {
    let p = VideoProfile::cif_three_layer();
    let params = SimParams { exact_bloom: true, ..SimParams::default() };
    let mut jobs: Vec<(String, NetworkGraph, f64)> = Vec::new();
    for name in ["line", "diamond", "butterfly", "bottleneck", "tree"] {
        jobs.push((name.into(), topo(name), 1.0));
    }
    let planetlab = topo("planetlab");
    for &s in &params.bandwidth_scales {
        jobs.push(("planetlab".into(), planetlab.clone(), s));
    }
    let seeds = 10u64;
    let results: Vec<(String, u64, u64, u64)> = jobs
        .par_iter()
        .flat_map_iter(|(name, g, s)| {
            let g = g.scaled(*s);
            let plan = optimize(&g, &p, &COSTS, &OptimizerParams::default()).unwrap();
            (1..=seeds)
                .map(|seed| {
                    let r = sim::run(&g, &plan, &params, seed, true).unwrap();
                    assert!(!r.trace.is_empty());
                    (format!("{name}@{s}"), seed, r.repeated_deliveries.iter().sum::<u64>(), r.excess_deliveries.iter().sum::<u64>())
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let bad: Vec<String> =
        results.iter().filter(|r| r.2 + r.3 > 0).map(|r| format!("{} seed {}: {} repeated {} excess", r.0, r.1, r.2, r.3)).collect();
    verdict(bad.is_empty(), format!("{} traced runs, {} with redundant deliveries {}", results.len(), bad.len(), bad.join("; ")))
}

/// beta(l) fresh class-l packets decode layer l in at least 99% of 1000
/// trials per class, and every full-rank system solves back to the sources.
fn codec() -> Verdict {
    let p = VideoProfile::cif_three_layer();
    let mut pass = true;
    let mut parts = Vec::new();
    for l in 0..p.layers() {
        let beta = p.beta(l);
        let (mut failures, mut mismatches) = (0, 0);
        for trial in 0..1000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(trial * 31 + l as u64);
            let gen = Generation::synthetic(&p, trial as u32, 8, 1.0);
            let packets: Vec<_> = (0..beta).map(|_| encode(&p, &gen, l, &mut rng).unwrap()).collect();
            let mut dec = DecoderState::new(&p, gen.index);
            for pk in &packets {
                dec.absorb(pk).unwrap();
            }
            let m = CoefficientMatrix::from_rows(&packets.iter().map(|pk| pk.coefficients.clone()).collect::<Vec<_>>()).unwrap();
            let full = m.rank() == beta;
            if dec.decodable_layer() != Some(l) {
                failures += 1;
                mismatches += usize::from(full);
                continue;
            }
            let payloads: Vec<Vec<u8>> = packets.iter().map(|pk| pk.payload.clone()).collect();
            let solved = m.solve(&payloads).ok();
            let decoded = dec.decoded_sources();
            if !full || solved.as_deref() != Some(&gen.sources[..beta]) || decoded.as_deref() != Some(&gen.sources[..beta]) {
                mismatches += 1;
            }
        }
        pass &= failures <= 10 && mismatches == 0;
        parts.push(format!("class {l}: {failures}/1000 rank-deficient, {mismatches} round-trip mismatches"));
    }
    verdict(pass, parts.join(", "))
}

/// Nine Interests for two clients with 9 and 3 conceptual Interests.
fn bloom_golden() -> Verdict {
    let (u1, u2) = (1u32, 2u32);
    let r = [(u1, 9), (u2, 3)];
    let mut u1_in = Vec::new();
    let mut u2_in = Vec::new();
    for counter in (1..=9u32).rev() {
        let p = 9 - counter + 1;
        let members: Vec<u32> = build_bloom(counter, 9, &r, BloomMode::Exact).members(&[u1, u2]).collect();
        if members.contains(&u1) {
            u1_in.push(p);
        }
        if members.contains(&u2) {
            u2_in.push(p);
        }
    }
    verdict(u1_in == (1..=9).collect::<Vec<_>>() && u2_in == [3, 6, 9], format!("u1 in {u1_in:?}, u2 in {u2_in:?}"))
}

/// Flags c_2 = 0.025 against the reference profile and accepts (0.01, 0.02, 0.017).
fn cost_validator() -> Verdict {
    let p = VideoProfile::cif_three_layer();
    let loose = validate_costs(&p, &[0.01, 0.02, 0.025]);
    let flagged = loose.iter().any(|v| matches!(v, CostViolation::AboveBound { class: 2, .. }));
    let replacement = validate_costs(&p, &[0.01, 0.02, 0.017]);
    let show = |v: &[CostViolation]| {
        if v.is_empty() {
            "accepted".to_string()
        } else {
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
        }
    };
    verdict(
        flagged && replacement.is_empty(),
        format!("(0.01, 0.02, 0.025): {}; (0.01, 0.02, 0.017): {}", show(&loose), show(&replacement)),
    )
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

/// Two `reproduce-paper --seed 7` runs write identical files.
fn determinism() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = fixture("planetlab.toml");
    for d in [&a, &b] {
        ncndn(&["reproduce-paper", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", d.path().to_str().unwrap()]);
    }
    let (fa, fb) = (tree_bytes(a.path()), tree_bytes(b.path()));
    let traces = fa.keys().filter(|k| k.ends_with("trace.txt")).count();
    let csvs = fa.keys().filter(|k| k.extension().is_some_and(|e| e == "csv")).count();
    let differing: Vec<String> =
        fa.iter().filter(|(k, v)| fb.get(*k) != Some(*v)).map(|(k, _)| k.display().to_string()).collect();
    let same_set = fa.keys().eq(fb.keys());
    verdict(
        same_set && differing.is_empty() && traces > 0 && csvs > 0,
        format!("{} files ({csvs} CSVs, {traces} traces), {} differ", fa.len(), differing.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("optimizer vs oracle", optimizer_vs_oracle),
        ("convergence of client 29", convergence),
        ("PSNR fidelity", psnr_fidelity),
        ("quality staircase", staircase),
        ("no redundant deliveries", redundancy),
        ("codec decode rate", codec),
        ("Bloom filter schedule", bloom_golden),
        ("cost validator", cost_validator),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = check();
        failed += usize::from(!v.pass);
        println!(
            "criterion {} {name}: {} [{:.1}s] {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            v.detail
        );
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
