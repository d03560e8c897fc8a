//! Throughput and speedup figures, CSV tables and static SVG charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::stencil::{flops_per_cell, KernelKind, StencilKernel};

pub const CSV_HEADER: &str = "kernel,h,w,d,iterations,fpgas,ips_per_fpga,elapsed_s,gflops,speedup";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub kernel: KernelKind,
    pub h: usize,
    pub w: usize,
    pub d: usize,
    pub iterations: usize,
    pub fpgas: usize,
    pub ips_per_fpga: usize,
    pub elapsed_s: f64,
    pub gflops: f64,
    pub speedup: f64,
}

impl ExperimentRecord {
    pub fn dims(&self) -> Dims {
        if self.kernel.rank() == 3 {
            Dims::d3(self.h, self.w, self.d)
        } else {
            Dims::d2(self.h, self.w)
        }
    }
}

/// Which cells count towards the FLOP total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlopCells {
    /// Boundary cells are copied, not computed.
    #[default]
    Interior,
    All,
}

/// Interior cells only; see [`compute_gflops_counting`] for the other mode.
pub fn compute_gflops(kernel: &StencilKernel, dims: Dims, iterations: usize, elapsed_s: f64) -> Result<f64> {
    compute_gflops_counting(kernel, dims, iterations, elapsed_s, FlopCells::Interior)
}

pub fn compute_gflops_counting(
    kernel: &StencilKernel,
    dims: Dims,
    iterations: usize,
    elapsed_s: f64,
    cells: FlopCells,
) -> Result<f64> {
    if iterations == 0 {
        return Ok(0.0);
    }
    if !(elapsed_s > 0.0) {
        return Err(Error::Metrics(format!("elapsed time must be positive, got {elapsed_s}")));
    }
    let n = match cells {
        FlopCells::Interior => dims.interior_cells(),
        FlopCells::All => dims.cells(),
    };
    let flops = flops_per_cell(kernel) as f64 * n as f64 * iterations as f64;
    Ok(flops / elapsed_s / 1e9)
}

/// Fills `speedup` relative to the first record matching `is_baseline` among
/// records of the same kernel.
pub fn compute_speedup(
    records: &[ExperimentRecord],
    is_baseline: impl Fn(&ExperimentRecord) -> bool,
) -> Result<Vec<ExperimentRecord>> {
    let mut base: BTreeMap<KernelKind, f64> = BTreeMap::new();
    for r in records {
        if is_baseline(r) {
            base.entry(r.kernel).or_insert(r.elapsed_s);
        }
    }
    records
        .iter()
        .map(|r| {
            let b = *base
                .get(&r.kernel)
                .ok_or_else(|| Error::Metrics(format!("no baseline record for {}", r.kernel)))?;
            let speedup = if r.elapsed_s == b {
                1.0
            } else if r.elapsed_s > 0.0 {
                b / r.elapsed_s
            } else {
                return Err(Error::Metrics("speedup of a zero-time record".into()));
            };
            Ok(ExperimentRecord { speedup, ..r.clone() })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XAxis {
    Fpgas,
    Iterations,
    Ips,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YAxis {
    Speedup,
    Gflops,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg { x: XAxis, y: YAxis },
}

pub fn emit_report(records: &[ExperimentRecord], format: ReportFormat) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Metrics("no records to report".into()));
    }
    match format {
        ReportFormat::Csv => to_csv(records),
        ReportFormat::Svg { x, y } => Ok(to_svg(records, x, y)),
    }
}

fn to_csv(records: &[ExperimentRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Metrics(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Metrics(e.to_string()))
}

pub fn load_csv(text: &str) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Metrics(format!("unexpected CSV header {:?}", header.join(","))));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const ML: f64 = 64.0;
const MR: f64 = 150.0;
const MT: f64 = 36.0;
const MB: f64 = 52.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

fn nice_max(v: f64) -> f64 {
    if !(v > 0.0) {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if v <= m * mag {
            return m * mag;
        }
    }
    10.0 * mag
}

fn to_svg(records: &[ExperimentRecord], x: XAxis, y: YAxis) -> String {
    let xv = |r: &ExperimentRecord| match x {
        XAxis::Fpgas => r.fpgas as f64,
        XAxis::Iterations => r.iterations as f64,
        XAxis::Ips => r.ips_per_fpga as f64,
    };
    let yv = |r: &ExperimentRecord| match y {
        YAxis::Speedup => r.speedup,
        YAxis::Gflops => r.gflops,
    };
    let mixed_ips = records.iter().any(|r| r.ips_per_fpga != records[0].ips_per_fpga);
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        let name = if mixed_ips && x != XAxis::Ips {
            format!("{} ({} IPs)", r.kernel, r.ips_per_fpga)
        } else {
            r.kernel.to_string()
        };
        series.entry(name).or_default().push((xv(r), yv(r)));
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let (x_lo, x_hi) = records.iter().map(xv).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (x_lo, x_hi) = if x_lo == x_hi { (x_lo - 1.0, x_hi + 1.0) } else { (x_lo, x_hi) };
    let y_hi = nice_max(records.iter().map(yv).fold(0.0, f64::max));
    let pw = W - ML - MR;
    let ph = H - MT - MB;
    let px = |v: f64| ML + (v - x_lo) / (x_hi - x_lo) * pw;
    let py = |v: f64| MT + ph - v / y_hi * ph;
    let (xlabel, ylabel) = (
        match x {
            XAxis::Fpgas => "FPGAs",
            XAxis::Iterations => "iterations",
            XAxis::Ips => "IPs per FPGA",
        },
        match y {
            YAxis::Speedup => "speedup",
            YAxis::Gflops => "GFLOPS",
        },
    );

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{ylabel} vs {xlabel}</text>"#, ML + pw / 2.0);
    for i in 0..=5 {
        let v = y_hi * i as f64 / 5.0;
        let yy = py(v);
        let _ = writeln!(s, r##"<line x1="{ML}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#ddd"/>"##, ML + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, ML - 6.0, yy + 4.0, fmt_tick(v));
    }
    let mut xs: Vec<f64> = records.iter().map(xv).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for v in xs {
        let xx = px(v);
        let _ = writeln!(s, r##"<line x1="{xx:.2}" y1="{:.2}" x2="{xx:.2}" y2="{:.2}" stroke="#999"/>"##, MT + ph, MT + ph + 4.0);
        let _ = writeln!(s, r#"<text x="{xx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, MT + ph + 18.0, fmt_tick(v));
    }
    let _ = writeln!(s, r##"<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xlabel}</text>"#, ML + pw / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{ylabel}</text>"#,
        MT + ph / 2.0,
        MT + ph / 2.0
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts.iter().map(|&(a, b)| format!("{:.2},{:.2}", px(a), py(b))).collect();
        if coords.len() > 1 {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, coords.join(" "));
        }
        for &(a, b) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(a), py(b));
        }
        let ly = MT + 12.0 + 18.0 * i as f64;
        let lx = W - MR + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{name}</text>"#, lx + 24.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e9 {
        format!("{}", v as i64)
    } else if v.abs() >= 0.01 {
        format!("{v:.2}")
    } else {
        format!("{v:.1e}")
    }
}
