use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ompfpga::config::{load_config_file, validate_resources, ClusterDesc, HostLink, ResourceCost, Topology};
use ompfpga::experiment::{run_sweep, seeded_grid, PointOutcome, SweepAxis};
use ompfpga::fabric::SimParams;
use ompfpga::grid::{Dims, Grid};
use ompfpga::metrics::{emit_report, ExperimentRecord, ReportFormat, XAxis, YAxis};
use ompfpga::plan::write_conf_hex;
use ompfpga::stencil::{run_iterations, KernelKind, Laplace3dForm, StencilKernel};
use ompfpga::Error;

/// Offload iterated stencils to a simulated ring of FPGA boards.
#[derive(Parser)]
#[command(name = "ompfpga", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Plan, simulate and report one configuration or a sweep.
    Run(RunArgs),
    /// Check a cluster config and print its resource budget.
    Validate {
        config: PathBuf,
    },
    /// Run the CPU reference on a grid file.
    Oracle {
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        iters: usize,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Form::Verbatim)]
        laplace3d_form: Form,
    },
    /// Write a grid file.
    Grid {
        #[arg(long)]
        dims: String,
        /// Random cells from this seed.
        #[arg(long, conflicts_with = "impulse")]
        seed: Option<u64>,
        /// Zero grid with this value at the centre.
        #[arg(long)]
        impulse: Option<f32>,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Pcie {
    Gen1,
    Gen2,
    Gen3,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Form {
    Verbatim,
    SixNeighbor,
}

impl From<Form> for Laplace3dForm {
    fn from(f: Form) -> Self {
        match f {
            Form::Verbatim => Laplace3dForm::Verbatim,
            Form::SixNeighbor => Laplace3dForm::SixNeighbor,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "laplace2d")]
    kernel: String,
    #[arg(long, default_value = "256x64")]
    grid: String,
    #[arg(long, default_value_t = 24)]
    iters: usize,
    /// Cluster config; without one a 6-board ring sized for the kernel is used.
    #[arg(long, env = "FPGA_FABRIC_CONFIG")]
    config: Option<PathBuf>,
    /// `fpgas=1..6`, `ips=1..4` or `iterations=30,60,120,240`.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    pcie: Option<Pcie>,
    #[arg(long)]
    clock_hz: Option<u64>,
    /// Seed of the random input grid.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input grid file instead of a random grid.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Form::Verbatim)]
    laplace3d_form: Form,
    #[arg(long)]
    dump_graph: bool,
    #[arg(long)]
    dump_plan: bool,
    #[arg(long)]
    dump_trace: bool,
    /// Write the CONF register writes as `conf.hex`.
    #[arg(long)]
    dump_conf: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Sim(_)
        | Error::Deadlock { .. }
        | Error::Misrouted(_)
        | Error::Stream(_)
        | Error::Frame(_)
        | Error::Link(_) => 2,
        Error::Equivalence(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(&a),
        Cmd::Validate { config } => cmd_validate(&config),
        Cmd::Oracle { kernel, input, iters, output, laplace3d_form } => {
            cmd_oracle(&kernel, &input, iters, &output, laplace3d_form)
        }
        Cmd::Grid { dims, seed, impulse, output } => cmd_grid(&dims, seed, impulse, &output),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn kernel_from(name: &str, form: Form) -> ompfpga::Result<StencilKernel> {
    Ok(StencilKernel::with_default_coeffs(KernelKind::parse(name)?).with_laplace3d_form(form.into()))
}

/// Largest IP count up to 4 whose summed cost fits one board.
fn default_cluster(kind: KernelKind) -> ClusterDesc {
    let cap = ResourceCost::default_capacity();
    let cost = ResourceCost::catalog_default(kind);
    let ips = (1..=4)
        .rev()
        .find(|&n| cost.luts * n <= cap.luts && cost.brams * n <= cap.brams && cost.dsps * n <= cap.dsps)
        .unwrap_or(1) as usize;
    ClusterDesc::ring(6, ips, kind)
}

fn write(path: &Path, text: &str) -> ompfpga::Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn cmd_run(a: &RunArgs) -> ompfpga::Result<u8> {
    let kernel = kernel_from(&a.kernel, a.laplace3d_form)?;
    let mut cluster = match &a.config {
        Some(p) => load_config_file(p)?,
        None => default_cluster(kernel.kind),
    };
    if let Some(p) = a.pcie {
        cluster.host_link = HostLink::preset(match p {
            Pcie::Gen1 => 1,
            Pcie::Gen2 => 2,
            Pcie::Gen3 => 3,
        })?;
    }
    if let Some(c) = a.clock_hz {
        cluster.clock_hz = c;
    }
    cluster.validate()?;
    let report = validate_resources(&cluster);
    if !report.is_ok() {
        for v in &report.violations {
            eprintln!("over budget: {v}");
        }
        return Ok(1);
    }
    let input = match &a.input {
        Some(p) => Grid::load(p)?,
        None => seeded_grid(Dims::parse(&a.grid)?, a.seed)?,
    };
    let axis = match &a.sweep {
        Some(s) => SweepAxis::parse(s)?,
        None => SweepAxis::Fpgas(vec![cluster.fpgas.len()]),
    };
    if let SweepAxis::Fpgas(v) = &axis {
        if cluster.topology == Topology::Custom && v.iter().any(|&f| f != cluster.fpgas.len()) {
            return Err(Error::Config("FPGA sweeps need a ring topology".into()));
        }
    }
    let params = SimParams { trace: a.dump_trace, ..SimParams::default() };
    let outcomes = run_sweep(&cluster, &kernel, &input, a.iters, &axis, &params)?;

    fs::create_dir_all(&a.out)?;
    let records: Vec<ExperimentRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let x = match axis {
        SweepAxis::Fpgas(_) => XAxis::Fpgas,
        SweepAxis::Ips(_) => XAxis::Ips,
        SweepAxis::Iterations(_) => XAxis::Iterations,
    };
    write(&a.out.join("results.csv"), &emit_report(&records, ReportFormat::Csv)?)?;
    write(&a.out.join("speedup.svg"), &emit_report(&records, ReportFormat::Svg { x, y: YAxis::Speedup })?)?;
    write(&a.out.join("gflops.svg"), &emit_report(&records, ReportFormat::Svg { x, y: YAxis::Gflops })?)?;
    write(&a.out.join("summary.json"), &summary(&outcomes)?)?;
    let last = outcomes.last().expect("sweeps have at least one point");
    last.output.save(&a.out.join("output.grid"))?;
    if a.dump_graph {
        write(&a.out.join("graph.json"), &last.plan.graph.to_json()?)?;
    }
    if a.dump_plan {
        write(&a.out.join("plan.json"), &last.plan.plan_json()?)?;
    }
    if a.dump_conf {
        write(&a.out.join("conf.hex"), &write_conf_hex(&last.plan.conf))?;
    }
    if a.dump_trace {
        let csv = last
            .sim
            .as_ref()
            .and_then(|s| s.trace_csv())
            .unwrap_or_else(|| "time_s,component,event,bytes\n".into());
        write(&a.out.join("trace.csv"), &csv)?;
    }

    println!("{:<12} {:>6} {:>6} {:>4} {:>12} {:>10} {:>8}", "kernel", "iters", "fpgas", "ips", "elapsed_s", "gflops", "speedup");
    for r in &records {
        println!(
            "{:<12} {:>6} {:>6} {:>4} {:>12.6e} {:>10.3} {:>8.3}",
            r.kernel.name(),
            r.iterations,
            r.fpgas,
            r.ips_per_fpga,
            r.elapsed_s,
            r.gflops,
            r.speedup
        );
    }
    println!("all {} points match the CPU reference; artifacts in {}", records.len(), a.out.display());
    Ok(0)
}

fn summary(outcomes: &[PointOutcome]) -> ompfpga::Result<String> {
    let mut points = Vec::new();
    for o in outcomes {
        let sim = match &o.sim {
            Some(s) => serde_json::from_str::<serde_json::Value>(&s.summary_json()?)?,
            None => serde_json::Value::Null,
        };
        points.push(serde_json::json!({
            "record": o.record,
            "compute_s": o.compute_s,
            "waves": o.plan.placement.waves,
            "host_transfers": o.plan.routes.host_transfers(),
            "sim": sim,
        }));
    }
    Ok(serde_json::to_string_pretty(&points)?)
}

fn cmd_validate(path: &Path) -> ompfpga::Result<u8> {
    let cluster = load_config_file(path)?;
    let report = validate_resources(&cluster);
    let ring = match cluster.topology {
        Topology::Ring => "ring OK",
        Topology::Custom => "custom topology",
    };
    println!("{} FPGAs, {} IPs, {ring}", cluster.fpgas.len(), cluster.total_ips());
    println!("{:<6} {:>16} {:>12} {:>12}", "fpga", "LUTs", "BRAM", "DSP");
    for u in &report.usage {
        let pct = |a: u64, b: u64| 100.0 * a as f64 / b as f64;
        println!(
            "{:<6} {:>9} {:>5.1}% {:>5} {:>5.1}% {:>5} {:>5.1}%",
            u.fpga,
            u.used.luts,
            pct(u.used.luts, u.capacity.luts),
            u.used.brams,
            pct(u.used.brams, u.capacity.brams),
            u.used.dsps,
            pct(u.used.dsps, u.capacity.dsps)
        );
    }
    if report.is_ok() {
        return Ok(0);
    }
    for v in &report.violations {
        println!("violation: {v}");
    }
    Ok(1)
}

fn cmd_oracle(kernel: &str, input: &Path, iters: usize, output: &Path, form: Form) -> ompfpga::Result<u8> {
    let k = kernel_from(kernel, form)?;
    let g = Grid::load(input)?;
    run_iterations(&k, &g, iters)?.save(output)?;
    Ok(0)
}

fn cmd_grid(dims: &str, seed: Option<u64>, impulse: Option<f32>, output: &Path) -> ompfpga::Result<u8> {
    let dims = Dims::parse(dims)?;
    let g = match impulse {
        Some(v) => Grid::impulse(dims, v)?,
        None => seeded_grid(dims, seed.unwrap_or(0))?,
    };
    g.save(output)?;
    Ok(0)
}
