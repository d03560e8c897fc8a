//! End-to-end runs: build the iterated stencil program, plan it on a cluster,
//! simulate it and check the result against the CPU reference.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ClusterDesc;
use crate::error::{Error, Result};
use crate::fabric::{simulate, SimParams, SimResult};
use crate::grid::{Dims, Grid};
use crate::metrics::{compute_gflops, compute_speedup, ExperimentRecord};
use crate::plan::{gen_conf_writes, infer_routes, map_tasks, resolve_kinds, ConfWrite, PlanDump, Placement, RouteTable};
use crate::stencil::{run_iterations, StencilKernel};
use crate::taskgraph::{
    validate_acyclic, BufferId, DepVar, GraphBuilder, MapDirection, MapEntry, TaskArgs, TaskGraph, TaskSpec,
};
use crate::variant::{ctx, VariantRegistry};

/// The iterated stencil loop: iteration `i` is a `nowait` target task with
/// `depend(in: deps[i]) depend(out: deps[i+1])` mapping the whole grid
/// `tofrom`.
pub fn iterated_graph(kernel: &StencilKernel, dims: Dims, iterations: usize) -> Result<(TaskGraph, BufferId)> {
    kernel.check_dims(dims)?;
    let mut b = GraphBuilder::new();
    let buf = b.register_buffer(dims.bytes());
    for i in 0..iterations {
        b.task_create(TaskSpec {
            kernel_ref: kernel.kind.base_function(),
            args: TaskArgs {
                buffer: buf,
                dims,
                coeffs: kernel.coeffs.clone(),
                laplace3d_form: kernel.laplace3d_form,
            },
            deps_in: vec![DepVar::indexed("deps", i)],
            deps_out: vec![DepVar::indexed("deps", i + 1)],
            maps: vec![MapEntry { buffer: buf, direction: MapDirection::Tofrom, length: dims.bytes() }],
            nowait: true,
        })?;
    }
    Ok((b.finalize_at_sync()?, buf))
}

/// Everything the planner produces for one program on one cluster.
#[derive(Debug, Clone)]
pub struct PlannedProgram {
    pub graph: TaskGraph,
    pub buffer: BufferId,
    pub placement: Placement,
    pub routes: RouteTable,
    pub conf: Vec<ConfWrite>,
}

impl PlannedProgram {
    pub fn plan_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PlanDump { placement: &self.placement, routes: &self.routes })?)
    }
}

/// Device context under which `hw_*` variants resolve.
pub fn device_context() -> BTreeSet<String> {
    ctx(["vc709"])
}

/// Builds the iterated program and plans it on `cluster`.
pub fn plan_program(
    kernel: &StencilKernel,
    dims: Dims,
    iterations: usize,
    cluster: &ClusterDesc,
) -> Result<PlannedProgram> {
    let (graph, buffer) = iterated_graph(kernel, dims, iterations)?;
    validate_acyclic(&graph)?;
    let registry = VariantRegistry::with_catalog_defaults(cluster.ip_catalog.keys().copied());
    let kinds = resolve_kinds(&graph, &registry, &device_context())?;
    let placement = map_tasks(&graph, cluster, &kinds)?;
    let routes = infer_routes(&graph, &placement, cluster)?;
    let conf = gen_conf_writes(&graph, &placement, &routes, cluster)?;
    Ok(PlannedProgram { graph, buffer, placement, routes, conf })
}

/// Deterministic pseudo-random grid with values in [-1, 1).
pub fn seeded_grid(dims: Dims, seed: u64) -> Result<Grid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dims.cells()).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    Grid::new(dims, data)
}

#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub record: ExperimentRecord,
    pub compute_s: f64,
    pub output: Grid,
    pub plan: PlannedProgram,
    pub sim: Option<SimResult>,
}

/// Plans, simulates and checks one configuration against the CPU oracle.
/// `speedup` is left at 1.0; sweeps fill it in.
pub fn run_point(
    cluster: &ClusterDesc,
    kernel: &StencilKernel,
    input: &Grid,
    iterations: usize,
    params: &SimParams,
) -> Result<PointOutcome> {
    let dims = input.dims();
    let plan = plan_program(kernel, dims, iterations, cluster)?;
    let (output, sim) = if iterations == 0 {
        (input.clone(), None)
    } else {
        let host = BTreeMap::from([(plan.buffer, input.clone())]);
        let sim = simulate(
            &plan.graph,
            &plan.placement,
            &plan.routes,
            &plan.conf,
            &host,
            cluster,
            cluster.clock_hz,
            params,
        )?;
        let out = sim
            .buffers
            .get(&plan.buffer)
            .cloned()
            .ok_or_else(|| Error::Sim("the grid never returned to the host".into()))?;
        (out, Some(sim))
    };
    let want = run_iterations(kernel, input, iterations)?;
    if !output.bit_eq(&want) {
        let first = output
            .data()
            .iter()
            .zip(want.data())
            .position(|(a, b)| a.to_bits() != b.to_bits())
            .unwrap_or(0);
        return Err(Error::Equivalence(format!(
            "{} {dims} x{iterations} on {} FPGAs: cell {first} is {} but the oracle gives {}",
            kernel.kind,
            cluster.fpgas.len(),
            output.data()[first],
            want.data()[first]
        )));
    }
    let elapsed_s = sim.as_ref().map_or(0.0, |s| s.elapsed_s);
    let compute_s = sim.as_ref().map_or(0.0, |s| s.compute_s);
    let record = ExperimentRecord {
        kernel: kernel.kind,
        h: dims.h,
        w: dims.w,
        d: dims.d,
        iterations,
        fpgas: cluster.fpgas.len(),
        ips_per_fpga: cluster.fpgas.iter().map(|f| f.ip_slots.len()).max().unwrap_or(0),
        elapsed_s,
        gflops: compute_gflops(kernel, dims, iterations, elapsed_s)?,
        speedup: 1.0,
    };
    Ok(PointOutcome { record, compute_s, output, plan, sim })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SweepAxis {
    Fpgas(Vec<usize>),
    Ips(Vec<usize>),
    Iterations(Vec<usize>),
}

impl SweepAxis {
    /// Parses `fpgas=1..6`, `ips=1,2,4` or `iterations=30,60`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, values) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("sweep {s:?} is not of the form axis=values")))?;
        let values = parse_values(values)?;
        match name.trim() {
            "fpgas" => Ok(SweepAxis::Fpgas(values)),
            "ips" => Ok(SweepAxis::Ips(values)),
            "iterations" | "iters" => Ok(SweepAxis::Iterations(values)),
            other => Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        }
    }

    pub fn values(&self) -> &[usize] {
        match self {
            SweepAxis::Fpgas(v) | SweepAxis::Ips(v) | SweepAxis::Iterations(v) => v,
        }
    }
}

fn parse_values(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("bad sweep values {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (usize, usize) = (a.parse().map_err(|_| bad())?, b.trim_start_matches('=').parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// Cluster and iteration count for each point of a sweep.
pub fn sweep_points(base: &ClusterDesc, iterations: usize, axis: &SweepAxis) -> Result<Vec<(ClusterDesc, usize)>> {
    axis.values()
        .iter()
        .map(|&v| match axis {
            SweepAxis::Fpgas(_) => Ok((base.truncated(v)?, iterations)),
            SweepAxis::Ips(_) => Ok((base.clone().with_ips_per_fpga(v)?, iterations)),
            SweepAxis::Iterations(_) => Ok((base.clone(), v)),
        })
        .collect()
}

/// Runs every point in parallel; speedups are relative to the first point.
pub fn run_sweep(
    base: &ClusterDesc,
    kernel: &StencilKernel,
    input: &Grid,
    iterations: usize,
    axis: &SweepAxis,
    params: &SimParams,
) -> Result<Vec<PointOutcome>> {
    let points = sweep_points(base, iterations, axis)?;
    let mut outcomes: Vec<PointOutcome> = points
        .par_iter()
        .map(|(c, n)| run_point(c, kernel, input, *n, params))
        .collect::<Result<_>>()?;
    let records: Vec<ExperimentRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let first = records[0].clone();
    let with = compute_speedup(&records, |r| *r == first)?;
    for (o, r) in outcomes.iter_mut().zip(with) {
        o.record = r;
    }
    Ok(outcomes)
}
