//! Report files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ncndn::optimizer::NetworkGraph;

use crate::experiment::{fmt_num, nominal_kbps, Point, Summary};

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().with_context(|| format!("writing {}", path.display()))
}

/// Directory holding one point's files.
pub fn point_dir(out: &Path, base: &NetworkGraph, scale: f64) -> PathBuf {
    out.join(format!("bw_{}", fmt_num(nominal_kbps(base, scale))))
}

pub fn write_allocation(dir: &Path, pt: &Point) -> Result<()> {
    let path = dir.join("allocation.csv");
    let mut w = create(&path)?;
    pt.plan.write_allocation_csv(&pt.graph, &mut w)?;
    finish(w, &path)?;
    let path = dir.join("convergence.csv");
    let mut w = create(&path)?;
    pt.plan.write_trace_csv(&mut w)?;
    finish(w, &path)
}

/// `client,bandwidth,UB,EXP,SIM`, one row per client and point.
pub fn write_psnr_vs_bandwidth(out: &Path, base: &NetworkGraph, points: &[Point], sums: &[Summary]) -> Result<()> {
    let path = out.join("psnr_vs_bandwidth.csv");
    let mut w = create(&path)?;
    writeln!(w, "client,bandwidth,UB,EXP,SIM")?;
    let clients = points.first().map(|p| p.plan.clients.clone()).unwrap_or_default();
    for (u, c) in clients.iter().enumerate() {
        for (pt, s) in points.iter().zip(sums) {
            writeln!(
                w,
                "{c},{},{:.2},{:.2},{:.4}",
                fmt_num(nominal_kbps(base, pt.scale)),
                pt.ub[u],
                pt.exp(u),
                s.sim[u]
            )?;
        }
    }
    finish(w, &path)
}

/// Per-point metrics: `psnr_vs_time.csv`, `link_util.csv` and, when
/// present, the event trace.
pub fn write_point_metrics(dir: &Path, pt: &Point, s: &Summary) -> Result<()> {
    let path = dir.join("psnr_vs_time.csv");
    let mut w = create(&path)?;
    writeln!(w, "client,generation,psnr")?;
    for (c, per) in pt.plan.clients.iter().zip(&s.per_generation) {
        for (g, p) in per.iter().enumerate() {
            writeln!(w, "{c},{g},{p:.4}")?;
        }
    }
    finish(w, &path)?;

    let path = dir.join("link_util.csv");
    let mut w = create(&path)?;
    writeln!(w, "link_from,link_to,bandwidth,utilization,peak_utilization")?;
    for (e, link) in pt.graph.links().iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6}",
            pt.graph.id(link.from),
            pt.graph.id(link.to),
            fmt_num(link.bandwidth / 1024.0),
            s.utilization[e],
            s.peak_utilization[e]
        )?;
    }
    finish(w, &path)?;

    if let Some(trace) = &s.trace {
        let path = dir.join("trace.txt");
        let mut w = create(&path)?;
        for line in trace {
            writeln!(w, "{line}")?;
        }
        finish(w, &path)?;
    }
    Ok(())
}

/// gnuplot script for the files above, run from the output directory.
/// Convergence panels follow the last client.
pub fn write_gnuplot(out: &Path, clients: &[u32], layers: usize, convergence: &[String], series: &[String]) -> Result<()> {
    let trace_client = clients.last().copied().unwrap_or_default();
    let path = out.join("plots.gp");
    let mut w = create(&path)?;
    writeln!(w, "set datafile separator ','")?;
    writeln!(w, "set terminal pngcairo size 900,600")?;
    writeln!(w, "set key bottom right")?;
    writeln!(w)?;
    for c in clients {
        writeln!(w, "set output 'psnr_vs_bandwidth_{c}.png'")?;
        writeln!(w, "set xlabel 'link bandwidth (kbps)'; set ylabel 'PSNR (dB)'")?;
        writeln!(w, "set title 'client {c}'")?;
        writeln!(
            w,
            "plot for [col in 'UB EXP SIM'] 'psnr_vs_bandwidth.csv' using 2:(column(1) == {c} ? column(col) : 1/0) \
             every ::1 with linespoints title col"
        )?;
    }
    writeln!(w)?;
    for dir in convergence {
        writeln!(w, "set output '{dir}_convergence.png'")?;
        writeln!(w, "set xlabel 'iteration'; set ylabel 'Interest rate (pkts/s)'")?;
        writeln!(w, "set title 'client {trace_client}, {dir}'")?;
        writeln!(
            w,
            "plot for [l=0:{}] '{dir}/convergence.csv' using 1:(column('r_{trace_client}_'.l)) every ::1 with lines title 'class '.l",
            layers.saturating_sub(1)
        )?;
    }
    writeln!(w)?;
    for dir in series {
        writeln!(w, "set output '{dir}_psnr_vs_time.png'")?;
        writeln!(w, "set xlabel 'generation'; set ylabel 'PSNR (dB)'")?;
        writeln!(w, "set title '{dir}'")?;
        let plots: Vec<String> = clients
            .iter()
            .map(|c| format!("'{dir}/psnr_vs_time.csv' using 2:(column(1) == {c} ? column(3) : 1/0) every ::1 with lines title '{c}'"))
            .collect();
        writeln!(w, "plot {}", plots.join(", \\\n     "))?;
    }
    finish(w, &path)
}
