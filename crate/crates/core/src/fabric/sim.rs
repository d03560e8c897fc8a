//! Discrete-event model of the offload datapath.
//!
//! Data moves as chunks of up to `chunk_bytes` carrying a sideband tag
//! (buffer, session, sequence, last). Every stage is a server with a byte
//! rate and a pipeline latency; items keep a head time (first beat) and a
//! tail time (last beat) so stages overlap the way a streaming datapath does.
//! Board-level behaviour comes only from CONF writes: switch tables, VFIFO
//! mode, MFH addressing and IP parameters are all read back from them.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;

use super::frame::{MacFrame, DEFAULT_MAX_PAYLOAD, FRAME_HEADER_BYTES};
use super::ip::{LinePipeline, BEAT_BYTES, PE_COUNT};
use crate::config::{ClusterDesc, MacAddr, MFH_PORT, VFIFO_PORT};
use crate::error::{Error, Result};
use crate::grid::{Dims, Grid};
use crate::plan::{
    data_chains, ConfMeaning, ConfWrite, Endpoint, Hop, MfhOp, Placement, RouteTable, TransferDir, IP_BLOCK,
    IP_STRIDE, MFH_BLOCK, SWITCH_BLOCK, VFIFO_MODE_DRAIN, VFIFO_MODE_LOOP,
};
use crate::stencil::{Laplace3dForm, StencilKernel};
use crate::taskgraph::{BufferId, TaskGraph};

const PS_PER_S: f64 = 1e12;
const H2C: usize = 0;
const C2H: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Pipeline latency of switch ports, VFIFO and MFH stages.
    pub hop_latency_cycles: u64,
    pub max_payload: usize,
    pub chunk_bytes: usize,
    pub vfifo_bytes_per_sec: f64,
    pub host_latency_s: f64,
    pub trace: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            hop_latency_cycles: 4,
            max_payload: DEFAULT_MAX_PAYLOAD,
            chunk_bytes: 1024,
            vfifo_bytes_per_sec: 6.4e9,
            host_latency_s: 1e-6,
            trace: false,
        }
    }
}

/// Host side of the program: which buffers are sent and in which wave,
/// and which are expected back.
#[derive(Debug, Clone, PartialEq)]
pub struct HostProgram {
    pub ingress: Vec<(BufferId, usize, Dims)>,
    pub egress: Vec<(BufferId, Dims)>,
}

impl HostProgram {
    pub fn from_plan(graph: &TaskGraph, placement: &Placement) -> Result<Self> {
        let mut ingress = Vec::new();
        let mut egress = Vec::new();
        for (buf, tasks) in data_chains(graph)? {
            let first = &graph.nodes[tasks[0]];
            let last = &graph.nodes[*tasks.last().expect("non-empty chain")];
            if first.map_for(buf).is_some_and(|m| m.direction.copies_in()) {
                ingress.push((buf, placement.of(first.id).wave, first.args.dims));
            }
            if last.map_for(buf).is_some_and(|m| m.direction.copies_out()) {
                egress.push((buf, last.args.dims));
            }
        }
        Ok(HostProgram { ingress, egress })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ComponentStats {
    pub busy_s: f64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub items: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObservedPath {
    pub from: Endpoint,
    pub to: Endpoint,
    pub buffer: BufferId,
    pub hops: Vec<Hop>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub time_ps: u64,
    pub component: String,
    pub event: &'static str,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub buffers: BTreeMap<BufferId, Grid>,
    pub elapsed_s: f64,
    /// From the first beat entering any IP to the last beat leaving one.
    pub compute_s: f64,
    pub components: BTreeMap<String, ComponentStats>,
    pub frames: u64,
    /// Wire bytes per link direction, keyed `link<i>:<from>-><to>`.
    pub link_bytes: BTreeMap<String, u64>,
    pub host_transfers: usize,
    pub paths: Vec<ObservedPath>,
    pub events: u64,
    pub trace: Option<Vec<TraceEvent>>,
}

fn fmt_ps(ps: u64) -> String {
    format!("{}.{:012}", ps / 1_000_000_000_000, ps % 1_000_000_000_000)
}

impl SimResult {
    pub fn trace_csv(&self) -> Option<String> {
        let trace = self.trace.as_ref()?;
        let mut out = String::from("time_s,component,event,bytes\n");
        for e in trace {
            let _ = writeln!(out, "{},{},{},{}", fmt_ps(e.time_ps), e.component, e.event, e.bytes);
        }
        Some(out)
    }

    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            elapsed_s: f64,
            compute_s: f64,
            frames: u64,
            host_transfers: usize,
            events: u64,
            link_bytes: &'a BTreeMap<String, u64>,
            components: &'a BTreeMap<String, ComponentStats>,
        }
        Ok(serde_json::to_string_pretty(&Summary {
            elapsed_s: self.elapsed_s,
            compute_s: self.compute_s,
            frames: self.frames,
            host_transfers: self.host_transfers,
            events: self.events,
            link_bytes: &self.link_bytes,
            components: &self.components,
        })?)
    }
}

/// Runs the plan and checks that every stream took the route the planner
/// computed.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    graph: &TaskGraph,
    placement: &Placement,
    routes: &RouteTable,
    conf: &[ConfWrite],
    host: &BTreeMap<BufferId, Grid>,
    cluster: &ClusterDesc,
    clock_hz: u64,
    params: &SimParams,
) -> Result<SimResult> {
    let program = HostProgram::from_plan(graph, placement)?;
    let result = simulate_replay(&program, conf, host, cluster, clock_hz, params)?;
    let mut planned: Vec<ObservedPath> = routes
        .routes
        .iter()
        .map(|r| ObservedPath { from: r.from, to: r.to, buffer: r.buffer, hops: r.hops.clone() })
        .collect();
    let mut seen = result.paths.clone();
    let key = |p: &ObservedPath| (p.buffer, p.from, p.to, format!("{:?}", p.hops));
    planned.sort_by_key(key);
    seen.sort_by_key(key);
    if planned != seen {
        let missing = planned.iter().find(|p| !seen.contains(p));
        let extra = seen.iter().find(|p| !planned.contains(p));
        return Err(Error::Misrouted(format!(
            "observed streams differ from the route table; planned but not seen: {missing:?}; seen but not planned: {extra:?}"
        )));
    }
    Ok(result)
}

/// Runs the fabric configured only by `conf`.
pub fn simulate_replay(
    program: &HostProgram,
    conf: &[ConfWrite],
    host: &BTreeMap<BufferId, Grid>,
    cluster: &ClusterDesc,
    clock_hz: u64,
    params: &SimParams,
) -> Result<SimResult> {
    let mut sim = Sim::new(program, conf, host, cluster, clock_hz, params)?;
    sim.run()?;
    sim.finish()
}

#[derive(Debug, Clone)]
struct PathTrace {
    from: Endpoint,
    hops: Vec<Hop>,
}

#[derive(Debug)]
struct Item {
    buffer: BufferId,
    session: usize,
    seq: u32,
    last: bool,
    data: Vec<u8>,
    frame: Option<(MacAddr, MacAddr, u16)>,
    head: u64,
    tail: u64,
    path: Option<Box<PathTrace>>,
}

impl Item {
    fn hop(&mut self, h: Hop) {
        if let Some(p) = self.path.as_mut() {
            p.hops.push(h);
        }
    }

    fn wire_bytes(&self) -> usize {
        self.data.len() + if self.frame.is_some() { FRAME_HEADER_BYTES } else { 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    H2c,
    C2h,
    SwitchOut { fpga: usize, port: u32 },
    /// `side` 0 carries host data toward the switch, 1 takes data off the switch.
    Vfifo { fpga: usize, side: usize },
    MfhTx { fpga: usize },
    MfhRx { fpga: usize },
    NetTx { link: usize, from: usize, to: usize },
    Ip { idx: usize },
}

#[derive(Debug)]
struct Server {
    ps_per_byte: f64,
    latency_ps: u64,
    cut_through: bool,
    queues: Vec<VecDeque<Item>>,
    rr: usize,
    busy: bool,
    free_at: u64,
    busy_ps: u64,
}

impl Server {
    fn new(bytes_per_sec: f64, latency_ps: u64, inputs: usize, cut_through: bool) -> Self {
        Server {
            ps_per_byte: PS_PER_S / bytes_per_sec,
            latency_ps,
            cut_through,
            queues: (0..inputs).map(|_| VecDeque::new()).collect(),
            rr: 0,
            busy: false,
            free_at: 0,
            busy_ps: 0,
        }
    }

    /// Next input in round-robin order after the last one served.
    fn pick(&mut self) -> Option<(usize, Item)> {
        let n = self.queues.len();
        for k in 0..n {
            let i = (self.rr + k) % n;
            if let Some(item) = self.queues[i].pop_front() {
                self.rr = (i + 1) % n;
                return Some((i, item));
            }
        }
        None
    }
}

struct Comp {
    name: String,
    kind: Kind,
    server: Server,
    stats: ComponentStats,
}

enum EvKind {
    Arrive { input: usize, item: Item },
    Free,
}

struct Ev {
    time: u64,
    comp: usize,
    seq: u64,
    kind: EvKind,
}

impl PartialEq for Ev {
    fn eq(&self, o: &Self) -> bool {
        (self.time, self.comp, self.seq) == (o.time, o.comp, o.seq)
    }
}
impl Eq for Ev {}
impl PartialOrd for Ev {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Ev {
    // reversed: BinaryHeap pops the earliest event
    fn cmp(&self, o: &Self) -> Ordering {
        (o.time, o.comp, o.seq).cmp(&(self.time, self.comp, self.seq))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct MfhConf {
    src_lo: Option<u32>,
    src_hi: Option<u32>,
    dst_lo: Option<u32>,
    dst_hi: Option<u32>,
    len: Option<u32>,
}

#[derive(Debug, Clone, Default)]
struct IpConf {
    dims: [Option<u32>; 3],
    flags: u32,
    coeffs: BTreeMap<usize, f32>,
}

/// Board configuration decoded from CONF writes.
#[derive(Debug, Default)]
struct Fabric {
    switch: BTreeMap<(usize, usize, u32), u32>,
    vfifo: BTreeMap<(usize, usize), u32>,
    mfh: BTreeMap<(usize, usize), (MacAddr, MacAddr, usize)>,
    ip: BTreeMap<(usize, usize, u32), StencilKernelAt>,
}

#[derive(Debug, Clone)]
struct StencilKernelAt {
    kernel: StencilKernel,
    dims: Dims,
}

fn decode_conf(conf: &[ConfWrite], cluster: &ClusterDesc) -> Result<Fabric> {
    let mut f = Fabric::default();
    let mut mfh: BTreeMap<(usize, usize), MfhConf> = BTreeMap::new();
    let mut ip: BTreeMap<(usize, usize, u32), IpConf> = BTreeMap::new();
    for w in conf {
        if w.fpga >= cluster.fpgas.len() {
            return Err(Error::Register(format!("write to unknown fpga {}", w.fpga)));
        }
        let meaning = ConfMeaning::from_offset(w.offset)?;
        if meaning != w.meaning {
            return Err(Error::Register(format!(
                "offset {:#05x} holds {meaning:?}, write says {:?}",
                w.offset, w.meaning
            )));
        }
        let key = (w.session, w.fpga);
        match meaning {
            ConfMeaning::SwitchRoute => {
                f.switch.insert((w.session, w.fpga, (w.offset - SWITCH_BLOCK) / 4), w.value);
            }
            ConfMeaning::VfifoMode => {
                if w.value != VFIFO_MODE_LOOP && w.value != VFIFO_MODE_DRAIN {
                    return Err(Error::Register(format!("bad VFIFO mode {}", w.value)));
                }
                f.vfifo.insert(key, w.value);
            }
            ConfMeaning::MfhSrcMac | ConfMeaning::MfhDstMac | ConfMeaning::MfhLen => {
                let m = mfh.entry(key).or_default();
                let slot = match w.offset - MFH_BLOCK {
                    0x0 => &mut m.src_lo,
                    0x4 => &mut m.src_hi,
                    0x8 => &mut m.dst_lo,
                    0xC => &mut m.dst_hi,
                    _ => &mut m.len,
                };
                *slot = Some(w.value);
            }
            ConfMeaning::IpDims | ConfMeaning::IpCoeff => {
                let rel = w.offset - IP_BLOCK;
                let (port, field) = (rel / IP_STRIDE, rel % IP_STRIDE);
                let c = ip.entry((w.session, w.fpga, port)).or_default();
                match field {
                    0x0 => c.dims[0] = Some(w.value),
                    0x4 => c.dims[1] = Some(w.value),
                    0x8 => c.dims[2] = Some(w.value),
                    0xC => c.flags = w.value,
                    _ => {
                        c.coeffs.insert(((field - 0x10) / 4) as usize, f32::from_bits(w.value));
                    }
                }
            }
        }
    }
    for (key, m) in mfh {
        match (m.src_lo, m.src_hi, m.dst_lo, m.dst_hi, m.len) {
            (Some(sl), Some(sh), Some(dl), Some(dh), Some(len)) => {
                let src = MacAddr::from_u64(u64::from(sh) << 32 | u64::from(sl));
                let dst = MacAddr::from_u64(u64::from(dh) << 32 | u64::from(dl));
                if len == 0 {
                    return Err(Error::Register(format!("MFH length 0 on fpga {} wave {}", key.1, key.0)));
                }
                f.mfh.insert(key, (src, dst, len as usize));
            }
            _ => {
                return Err(Error::Register(format!(
                    "incomplete MFH programming on fpga {} wave {}",
                    key.1, key.0
                )))
            }
        }
    }
    for ((session, fpga, port), c) in ip {
        let slot = cluster.fpgas[fpga]
            .ip_slots
            .iter()
            .find(|s| s.switch_port == port)
            .ok_or_else(|| Error::Register(format!("IP block for port {port} on fpga {fpga}, which has no IP")))?;
        let kind = slot.kernel_kind;
        let dims = match (c.dims, kind.rank()) {
            ([Some(h), Some(w), Some(1)], 2) => Dims::d2(h as usize, w as usize),
            ([Some(h), Some(w), Some(d)], 3) => Dims::d3(h as usize, w as usize, d as usize),
            _ => {
                return Err(Error::Register(format!(
                    "IP on fpga {fpga} port {port} wave {session}: dimensions {:?} do not fit {kind}",
                    c.dims
                )))
            }
        };
        let coeffs: Vec<f32> = c.coeffs.values().copied().collect();
        if c.coeffs.keys().copied().ne(0..coeffs.len()) {
            return Err(Error::Register(format!("IP on fpga {fpga} port {port}: coefficient gap")));
        }
        let form = if c.flags & 1 == 1 { Laplace3dForm::SixNeighbor } else { Laplace3dForm::Verbatim };
        let kernel = if kind.coeff_count() == 0 && coeffs.is_empty() {
            StencilKernel::with_default_coeffs(kind)
        } else {
            StencilKernel::new(kind, coeffs)?
        }
        .with_laplace3d_form(form);
        kernel.check_dims(dims)?;
        f.ip.insert((session, fpga, port), StencilKernelAt { kernel, dims });
    }
    Ok(f)
}

struct ActiveStream {
    session: usize,
    buffer: BufferId,
    pipe: LinePipeline,
    total_beats: usize,
    fill: usize,
    /// Completion time of each ingested beat, flush beats included.
    beat_done: Vec<u64>,
    cells_in: usize,
    out_cells: VecDeque<f32>,
    out_beats: usize,
    out_seq: u32,
}

struct IpState {
    fpga: usize,
    slot: usize,
    port: u32,
    sessions: BTreeMap<usize, StencilKernelAt>,
    pending: BTreeMap<usize, VecDeque<Item>>,
    active: Option<ActiveStream>,
    done: BTreeSet<usize>,
    free_at: u64,
}

impl IpState {
    fn next_session(&self) -> Option<usize> {
        self.sessions.keys().copied().find(|s| !self.done.contains(s))
    }
}

struct TxStream {
    session: usize,
    buffer: BufferId,
    src: MacAddr,
    dst: MacAddr,
    remaining: usize,
    pending: Vec<u8>,
    path: Option<Box<PathTrace>>,
}

struct RxStream {
    pending: Vec<u8>,
    head: u64,
    seq: u32,
    path: Option<Box<PathTrace>>,
}

struct Sim<'a> {
    cluster: &'a ClusterDesc,
    params: &'a SimParams,
    fabric: Fabric,
    cycle_ps: u64,
    comps: Vec<Comp>,
    ips: Vec<IpState>,
    switch_out: Vec<Vec<usize>>,
    vfifo: Vec<[usize; 2]>,
    mfh_tx: Vec<usize>,
    mfh_rx: Vec<usize>,
    net_tx: BTreeMap<(usize, usize), usize>,
    ip_at: BTreeMap<(usize, u32), usize>,
    mac_owner: BTreeMap<MacAddr, usize>,
    tx: Vec<Option<TxStream>>,
    rx: Vec<BTreeMap<(MacAddr, BufferId, usize), RxStream>>,
    queue: BinaryHeap<Ev>,
    seq: u64,
    now: u64,
    end: u64,
    events: u64,
    compute_span: Option<(u64, u64)>,
    egress_dims: BTreeMap<BufferId, Dims>,
    received: BTreeMap<BufferId, (Vec<u8>, u32)>,
    finished: BTreeMap<BufferId, Grid>,
    paths: Vec<ObservedPath>,
    frames: u64,
    link_bytes: BTreeMap<String, u64>,
    host_transfers: usize,
    trace: Option<Vec<TraceEvent>>,
    path_cache: BTreeMap<(usize, usize), Vec<Hop>>,
}

impl<'a> Sim<'a> {
    fn new(
        program: &HostProgram,
        conf: &[ConfWrite],
        host: &BTreeMap<BufferId, Grid>,
        cluster: &'a ClusterDesc,
        clock_hz: u64,
        params: &'a SimParams,
    ) -> Result<Self> {
        if clock_hz == 0 {
            return Err(Error::Sim("clock_hz must be positive".into()));
        }
        if params.chunk_bytes == 0 || !params.chunk_bytes.is_multiple_of(BEAT_BYTES) {
            return Err(Error::Sim(format!("chunk size {} is not a whole number of beats", params.chunk_bytes)));
        }
        if params.max_payload < BEAT_BYTES || params.max_payload > usize::from(u16::MAX) {
            return Err(Error::Sim(format!("max payload {} out of range", params.max_payload)));
        }
        let fabric = decode_conf(conf, cluster)?;
        let cycle_ps = (PS_PER_S / clock_hz as f64).round() as u64;
        let stream_rate = BEAT_BYTES as f64 * clock_hz as f64;
        let hop_ps = params.hop_latency_cycles * cycle_ps;
        let host_ps = (params.host_latency_s * PS_PER_S).round() as u64;
        let pcie = cluster.host_link.bytes_per_sec;
        if !(pcie > 0.0) || !(params.vfifo_bytes_per_sec > 0.0) {
            return Err(Error::Link("host and VFIFO bandwidth must be positive".into()));
        }

        let mut comps = Vec::new();
        let mut add = |name: String, kind: Kind, server: Server| {
            comps.push(Comp { name, kind, server, stats: ComponentStats::default() });
            comps.len() - 1
        };
        let n_in = program.ingress.len().max(1);
        add("host.h2c".into(), Kind::H2c, Server::new(pcie, host_ps, n_in, true));
        add("host.c2h".into(), Kind::C2h, Server::new(pcie, host_ps, 1, true));
        let mut switch_out = Vec::new();
        let (mut vfifo, mut mfh_tx, mut mfh_rx) = (Vec::new(), Vec::new(), Vec::new());
        let mut ips = Vec::new();
        let mut ip_at = BTreeMap::new();
        let mut mac_owner = BTreeMap::new();
        for f in &cluster.fpgas {
            let id = f.id;
            for m in &f.mac_addrs {
                mac_owner.insert(*m, id);
            }
            vfifo.push([0, 1].map(|side| {
                add(
                    format!("fpga{id}.vfifo.{}", ["in", "out"][side]),
                    Kind::Vfifo { fpga: id, side },
                    Server::new(params.vfifo_bytes_per_sec, hop_ps, 1, true),
                )
            }));
            mfh_tx.push(add(format!("fpga{id}.mfh_tx"), Kind::MfhTx { fpga: id }, Server::new(stream_rate, hop_ps, 1, true)));
            mfh_rx.push(add(format!("fpga{id}.mfh_rx"), Kind::MfhRx { fpga: id }, Server::new(stream_rate, hop_ps, 1, true)));
            let ports: Vec<usize> = (0..=MFH_PORT)
                .map(|p| {
                    add(
                        format!("fpga{id}.switch.out{p}"),
                        Kind::SwitchOut { fpga: id, port: p },
                        Server::new(stream_rate, hop_ps, (MFH_PORT + 1) as usize, true),
                    )
                })
                .collect();
            switch_out.push(ports);
            for s in &f.ip_slots {
                let sessions: BTreeMap<usize, StencilKernelAt> = fabric
                    .ip
                    .iter()
                    .filter(|((_, fp, port), _)| *fp == id && *port == s.switch_port)
                    .map(|((sess, _, _), k)| (*sess, k.clone()))
                    .collect();
                let idx = ips.len();
                let c = add(format!("fpga{id}.ip{}", s.slot_id), Kind::Ip { idx }, Server::new(stream_rate, 0, 1, true));
                ip_at.insert((id, s.switch_port), c);
                ips.push(IpState {
                    fpga: id,
                    slot: s.slot_id,
                    port: s.switch_port,
                    sessions,
                    pending: BTreeMap::new(),
                    active: None,
                    done: BTreeSet::new(),
                    free_at: 0,
                });
            }
        }
        let mut net_tx = BTreeMap::new();
        let mut link_bytes = BTreeMap::new();
        for (li, l) in cluster.links.iter().enumerate() {
            if !(l.bandwidth_bps > 0.0) {
                return Err(Error::Link(format!("link {li} has no bandwidth")));
            }
            let lat = (l.latency_s * PS_PER_S).round() as u64;
            for (a, b) in [(l.fpga_a, l.fpga_b), (l.fpga_b, l.fpga_a)] {
                let name = format!("link{li}:{a}->{b}");
                let c = add(name.clone(), Kind::NetTx { link: li, from: a, to: b }, Server::new(l.bytes_per_sec(), lat, 1, false));
                net_tx.insert((li, a), c);
                link_bytes.insert(name, 0);
            }
        }

        let mut sim = Sim {
            cluster,
            params,
            fabric,
            cycle_ps,
            comps,
            ips,
            switch_out,
            vfifo,
            mfh_tx,
            mfh_rx,
            net_tx,
            ip_at,
            mac_owner,
            tx: (0..cluster.fpgas.len()).map(|_| None).collect(),
            rx: (0..cluster.fpgas.len()).map(|_| BTreeMap::new()).collect(),
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            end: 0,
            events: 0,
            compute_span: None,
            egress_dims: program.egress.iter().copied().collect(),
            received: BTreeMap::new(),
            finished: BTreeMap::new(),
            paths: Vec::new(),
            frames: 0,
            link_bytes,
            host_transfers: 0,
            trace: params.trace.then(Vec::new),
            path_cache: BTreeMap::new(),
        };

        for (input, &(buf, session, dims)) in program.ingress.iter().enumerate() {
            let grid = host
                .get(&buf)
                .ok_or_else(|| Error::Sim(format!("no host data for buffer {buf:?}")))?;
            if grid.dims() != dims {
                return Err(Error::Sim(format!("buffer {buf:?} is {} but the program maps {dims}", grid.dims())));
            }
            let bytes = grid.to_le_bytes();
            sim.host_transfers += 1;
            sim.record(0, H2C, "h2c_transfer", bytes.len() as u64);
            let n = bytes.len().div_ceil(params.chunk_bytes);
            for (i, c) in bytes.chunks(params.chunk_bytes).enumerate() {
                let path = (i == 0).then(|| {
                    Box::new(PathTrace { from: Endpoint::Host, hops: vec![Hop::HostDma { dir: TransferDir::HostToCard }] })
                });
                let item = Item {
                    buffer: buf,
                    session,
                    seq: i as u32,
                    last: i + 1 == n,
                    data: c.to_vec(),
                    frame: None,
                    head: 0,
                    tail: 0,
                    path,
                };
                sim.push(H2C, input, item)?;
            }
        }
        Ok(sim)
    }

    fn record(&mut self, time_ps: u64, comp: usize, event: &'static str, bytes: u64) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent { time_ps, component: self.comps[comp].name.clone(), event, bytes });
        }
    }

    fn schedule(&mut self, time: u64, comp: usize, kind: EvKind) {
        self.seq += 1;
        self.queue.push(Ev { time: time.max(self.now), comp, seq: self.seq, kind });
    }

    fn push(&mut self, comp: usize, input: usize, item: Item) -> Result<()> {
        let t = item.head;
        if input >= self.comps[comp].server.queues.len() && !matches!(self.comps[comp].kind, Kind::Ip { .. }) {
            return Err(Error::Sim(format!("{} has no input {input}", self.comps[comp].name)));
        }
        self.schedule(t, comp, EvKind::Arrive { input, item });
        Ok(())
    }

    /// Hands an item to switch in-port `in_port` on `fpga`.
    fn send_to_switch(&mut self, fpga: usize, in_port: u32, item: Item) -> Result<()> {
        let out = *self.fabric.switch.get(&(item.session, fpga, in_port)).ok_or_else(|| {
            Error::Misrouted(format!(
                "fpga {fpga} switch has no route for in-port {in_port} in wave {} (buffer {:?})",
                item.session, item.buffer
            ))
        })?;
        if out > MFH_PORT {
            return Err(Error::Misrouted(format!("fpga {fpga} switch routes to missing port {out}")));
        }
        let comp = self.switch_out[fpga][out as usize];
        self.push(comp, in_port as usize, item)
    }

    fn run(&mut self) -> Result<()> {
        while let Some(ev) = self.queue.pop() {
            self.now = ev.time;
            self.events += 1;
            let comp = ev.comp;
            match ev.kind {
                EvKind::Arrive { input, item } => {
                    if let Kind::Ip { idx } = self.comps[comp].kind {
                        self.ip_arrive(comp, idx, item)?;
                    } else {
                        self.comps[comp].stats.bytes_in += item.data.len() as u64;
                        self.comps[comp].server.queues[input].push_back(item);
                        if !self.comps[comp].server.busy {
                            self.start(comp)?;
                        }
                    }
                }
                EvKind::Free => {
                    self.comps[comp].server.busy = false;
                    self.start(comp)?;
                }
            }
        }
        Ok(())
    }

    fn start(&mut self, comp: usize) -> Result<()> {
        let Some((input, mut item)) = self.comps[comp].server.pick() else {
            return Ok(());
        };
        let wire = if matches!(self.comps[comp].kind, Kind::NetTx { .. }) { item.wire_bytes() } else { item.data.len() };
        let s = &mut self.comps[comp].server;
        let service = (wire as f64 * s.ps_per_byte).round() as u64;
        let start = item.head.max(s.free_at);
        let end = (start + service).max(item.tail);
        s.busy = true;
        s.free_at = end;
        s.busy_ps += service;
        let (head, tail) = if s.cut_through {
            (start + s.latency_ps, end + s.latency_ps)
        } else {
            (end + s.latency_ps, end + s.latency_ps)
        };
        item.head = head;
        item.tail = tail;
        self.end = self.end.max(tail);
        let st = &mut self.comps[comp].stats;
        st.items += 1;
        st.bytes_out += item.data.len() as u64;
        self.record(start, comp, "start", wire as u64);
        self.schedule(end, comp, EvKind::Free);
        self.served(comp, input, item)
    }

    fn served(&mut self, comp: usize, input: usize, mut item: Item) -> Result<()> {
        match self.comps[comp].kind {
            Kind::H2c => {
                let v0 = self.vfifo[0][0];
                self.push(v0, 0, item)
            }
            Kind::C2h => self.host_receive(item),
            Kind::SwitchOut { fpga, port } => {
                item.hop(Hop::SwitchPort { fpga, in_port: input as u32, out_port: port });
                match port {
                    VFIFO_PORT => {
                        let c = self.vfifo[fpga][1];
                        self.push(c, 0, item)
                    }
                    MFH_PORT => {
                        let c = self.mfh_tx[fpga];
                        self.push(c, 0, item)
                    }
                    p => {
                        let c = *self.ip_at.get(&(fpga, p)).ok_or_else(|| {
                            Error::Misrouted(format!("fpga {fpga} switch sent buffer {:?} to port {p}, which has no IP", item.buffer))
                        })?;
                        self.push(c, 0, item)
                    }
                }
            }
            Kind::Vfifo { fpga, side } => {
                item.hop(Hop::Vfifo { fpga });
                if side == 0 {
                    return self.send_to_switch(fpga, VFIFO_PORT, item);
                }
                match self.fabric.vfifo.get(&(item.session, fpga)).copied() {
                    Some(VFIFO_MODE_LOOP) => {
                        item.session += 1;
                        self.send_to_switch(fpga, VFIFO_PORT, item)
                    }
                    Some(_) if fpga == 0 => {
                        self.push(C2H, 0, item)
                    }
                    Some(_) => Err(Error::Misrouted(format!("fpga {fpga} VFIFO drains to the host but has no PCIe link"))),
                    None => Err(Error::Misrouted(format!(
                        "fpga {fpga} VFIFO has no mode in wave {} for buffer {:?}",
                        item.session, item.buffer
                    ))),
                }
            }
            Kind::MfhTx { fpga } => self.mfh_encap(fpga, item),
            Kind::NetTx { link, from, to } => {
                item.hop(Hop::NetLink { from, to, link });
                let name = &self.comps[comp].name;
                *self.link_bytes.get_mut(name).expect("link registered") += item.wire_bytes() as u64;
                self.frames += 1;
                let (src, dst, _) = item.frame.expect("links carry frames");
                let owner = *self
                    .mac_owner
                    .get(&dst)
                    .ok_or_else(|| Error::Misrouted(format!("misrouted frame: no board owns {dst}")))?;
                if owner == to {
                    let c = self.mfh_rx[to];
                    return self.push(c, 0, item);
                }
                // store-and-forward along the sender's shortest path
                let origin = *self
                    .mac_owner
                    .get(&src)
                    .ok_or_else(|| Error::Misrouted(format!("misrouted frame: unknown source {src}")))?;
                let path = self.board_path(origin, owner)?;
                let next = path
                    .iter()
                    .find_map(|h| match *h {
                        Hop::NetLink { from, to: t, link } if from == to => Some((link, t)),
                        _ => None,
                    })
                    .ok_or_else(|| Error::Misrouted(format!("misrouted frame: fpga {to} is not on the path to {dst}")))?;
                let c = self.net_tx[&(next.0, to)];
                self.push(c, 0, item)
            }
            Kind::MfhRx { fpga } => self.mfh_decap(fpga, item),
            Kind::Ip { .. } => unreachable!("IPs are not queue servers"),
        }
    }

    fn board_path(&mut self, a: usize, b: usize) -> Result<Vec<Hop>> {
        if let Some(p) = self.path_cache.get(&(a, b)) {
            return Ok(p.clone());
        }
        let p = crate::plan::net_path(self.cluster, a, b)?;
        self.path_cache.insert((a, b), p.clone());
        Ok(p)
    }

    fn mfh_encap(&mut self, fpga: usize, mut item: Item) -> Result<()> {
        item.hop(Hop::Mfh { fpga, op: MfhOp::Encap });
        if self.tx[fpga].is_none() {
            let (src, dst, len) = *self.fabric.mfh.get(&(item.session, fpga)).ok_or_else(|| {
                Error::Misrouted(format!("fpga {fpga} MFH is not programmed for wave {}", item.session))
            })?;
            self.tx[fpga] = Some(TxStream {
                session: item.session,
                buffer: item.buffer,
                src,
                dst,
                remaining: len,
                pending: Vec::new(),
                path: None,
            });
        }
        let max = self.params.max_payload;
        let mut tx = self.tx[fpga].take().expect("stream opened above");
        if (tx.session, tx.buffer) != (item.session, item.buffer) {
            return Err(Error::Frame(format!(
                "fpga {fpga} MFH got buffer {:?} wave {} while sending buffer {:?} wave {}",
                item.buffer, item.session, tx.buffer, tx.session
            )));
        }
        if item.data.len() > tx.remaining {
            return Err(Error::Frame(format!(
                "fpga {fpga} MFH stream exceeds its programmed length by {} bytes",
                item.data.len() - tx.remaining
            )));
        }
        if tx.path.is_none() {
            tx.path = item.path.take();
        }
        tx.remaining -= item.data.len();
        tx.pending.extend_from_slice(&item.data);
        let done = tx.remaining == 0;
        if item.last != done {
            return Err(Error::Frame(format!(
                "fpga {fpga} MFH: end of transfer disagrees with the programmed length ({} bytes left)",
                tx.remaining
            )));
        }
        let src_port = self.cluster.fpgas[fpga]
            .mac_addrs
            .iter()
            .position(|m| *m == tx.src)
            .ok_or_else(|| Error::Misrouted(format!("fpga {fpga} MFH source {} is not a local port", tx.src)))?;
        let link = self
            .cluster
            .links
            .iter()
            .position(|l| (l.fpga_a == fpga && l.port_a == src_port) || (l.fpga_b == fpga && l.port_b == src_port))
            .ok_or_else(|| Error::Misrouted(format!("fpga {fpga} NET port {src_port} is not cabled")))?;
        let out = self.net_tx[&(link, fpga)];
        while tx.pending.len() >= max || (done && !tx.pending.is_empty()) {
            let n = tx.pending.len().min(max);
            let payload: Vec<u8> = tx.pending.drain(..n).collect();
            let frame = MacFrame { dst_mac: tx.dst, src_mac: tx.src, type_length: n as u16, payload };
            let last = done && tx.pending.is_empty();
            let f = Item {
                buffer: tx.buffer,
                session: tx.session,
                seq: 0,
                last,
                frame: Some((frame.src_mac, frame.dst_mac, frame.type_length)),
                data: frame.payload,
                head: item.tail,
                tail: item.tail,
                path: tx.path.take(),
            };
            self.push(out, 0, f)?;
        }
        if !done {
            self.tx[fpga] = Some(tx);
        }
        Ok(())
    }

    fn mfh_decap(&mut self, fpga: usize, mut item: Item) -> Result<()> {
        item.hop(Hop::Mfh { fpga, op: MfhOp::Decap });
        let (src, _dst, tl) = item.frame.expect("MFH receives frames");
        if usize::from(tl) != item.data.len() || item.data.is_empty() {
            return Err(Error::Frame(format!(
                "fpga {fpga} MFH: type/length {tl} but {} payload bytes",
                item.data.len()
            )));
        }
        let key = (src, item.buffer, item.session);
        let rx = self.rx[fpga].entry(key).or_insert_with(|| RxStream {
            pending: Vec::new(),
            head: item.head,
            seq: 0,
            path: None,
        });
        if rx.pending.is_empty() {
            rx.head = item.head;
        }
        if rx.path.is_none() {
            rx.path = item.path.take();
        }
        rx.pending.extend_from_slice(&item.data);
        let chunk = self.params.chunk_bytes;
        let mut out = Vec::new();
        while rx.pending.len() >= chunk || (item.last && !rx.pending.is_empty()) {
            let n = rx.pending.len().min(chunk);
            let data: Vec<u8> = rx.pending.drain(..n).collect();
            let last = item.last && rx.pending.is_empty();
            out.push(Item {
                buffer: item.buffer,
                session: item.session,
                seq: rx.seq,
                last,
                data,
                frame: None,
                head: rx.head,
                tail: item.tail,
                path: rx.path.take(),
            });
            rx.seq += 1;
            rx.head = item.head;
        }
        if item.last {
            self.rx[fpga].remove(&key);
        }
        for c in out {
            self.send_to_switch(fpga, MFH_PORT, c)?;
        }
        Ok(())
    }

    fn host_receive(&mut self, mut item: Item) -> Result<()> {
        item.hop(Hop::HostDma { dir: TransferDir::CardToHost });
        let buf = item.buffer;
        let dims = *self
            .egress_dims
            .get(&buf)
            .ok_or_else(|| Error::Misrouted(format!("host received buffer {buf:?}, which it does not expect")))?;
        if self.finished.contains_key(&buf) {
            return Err(Error::Misrouted(format!("host received buffer {buf:?} twice")));
        }
        let entry = self.received.entry(buf).or_default();
        if item.seq != entry.1 {
            return Err(Error::Stream(format!("host got chunk {} of buffer {buf:?}, expected {}", item.seq, entry.1)));
        }
        entry.1 += 1;
        entry.0.extend_from_slice(&item.data);
        if let Some(p) = item.path.take() {
            self.paths.push(ObservedPath { from: p.from, to: Endpoint::Host, buffer: buf, hops: p.hops });
        }
        if item.last {
            let (bytes, _) = self.received.remove(&buf).expect("entry above");
            let grid = Grid::from_le_bytes(dims, &bytes)?;
            self.finished.insert(buf, grid);
            self.host_transfers += 1;
            self.record(item.tail, C2H, "c2h_transfer", bytes.len() as u64);
        }
        Ok(())
    }

    fn ip_arrive(&mut self, comp: usize, idx: usize, item: Item) -> Result<()> {
        let st = &mut self.ips[idx];
        if !st.sessions.contains_key(&item.session) || st.done.contains(&item.session) {
            return Err(Error::Misrouted(format!(
                "{} got buffer {:?} for wave {}, which it is not programmed for",
                self.comps[comp].name, item.buffer, item.session
            )));
        }
        self.comps[comp].stats.bytes_in += item.data.len() as u64;
        st.pending.entry(item.session).or_default().push_back(item);
        self.ip_progress(comp, idx)
    }

    fn ip_progress(&mut self, comp: usize, idx: usize) -> Result<()> {
        loop {
            let Some(session) = self.ips[idx].next_session() else {
                return Ok(());
            };
            let Some(item) = self.ips[idx].pending.get_mut(&session).and_then(|q| q.pop_front()) else {
                return Ok(());
            };
            self.ip_ingest(comp, idx, session, item)?;
        }
    }

    fn ip_ingest(&mut self, comp: usize, idx: usize, session: usize, mut item: Item) -> Result<()> {
        let cyc = self.cycle_ps;
        let chunk_beats = self.params.chunk_bytes / BEAT_BYTES;
        let st = &mut self.ips[idx];
        let (fpga, slot) = (st.fpga, st.slot);
        if st.active.is_none() {
            let k = st.sessions[&session].clone();
            let pipe = LinePipeline::new(k.kernel, k.dims)?;
            let total_beats = k.dims.cells().div_ceil(PE_COUNT);
            st.active = Some(ActiveStream {
                session,
                buffer: item.buffer,
                fill: pipe.line_len().div_ceil(PE_COUNT),
                pipe,
                total_beats,
                beat_done: Vec::with_capacity(total_beats + 8),
                cells_in: 0,
                out_cells: VecDeque::new(),
                out_beats: 0,
                out_seq: 0,
            });
        }
        let free_at = st.free_at;
        let a = st.active.as_mut().expect("active stream");
        if item.buffer != a.buffer {
            return Err(Error::Stream(format!(
                "fpga{fpga}.ip{slot}: buffer {:?} interleaved into the stream of {:?}",
                item.buffer, a.buffer
            )));
        }
        if !item.data.len().is_multiple_of(4) {
            return Err(Error::Stream(format!("fpga{fpga}.ip{slot}: chunk of {} bytes splits a cell", item.data.len())));
        }
        if let Some(p) = item.path.take() {
            self.paths.push(ObservedPath { from: p.from, to: Endpoint::Slot { fpga, slot }, buffer: item.buffer, hops: p.hops });
        }
        let cells: Vec<f32> = item
            .data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let mut out = Vec::new();
        a.pipe.push(&cells, &mut out)?;
        a.out_cells.extend(out);
        let n = cells.len();
        let before = a.beat_done.len();
        a.cells_in += n;
        let beats_now = if item.last { a.total_beats } else { a.cells_in / PE_COUNT };
        if item.last && a.cells_in != a.pipe.dims().cells() {
            return Err(Error::Stream(format!(
                "fpga{fpga}.ip{slot}: stream ended after {} of {} cells",
                a.cells_in,
                a.pipe.dims().cells()
            )));
        }
        let nb = (beats_now - before).max(1) as u64;
        for (i, _) in (before..beats_now).enumerate() {
            let arrival = item.head + (item.tail - item.head) * (i as u64 + 1) / nb;
            let prev = a.beat_done.last().copied().unwrap_or(free_at);
            a.beat_done.push(arrival.max(prev + cyc));
        }
        if item.last {
            for _ in 0..a.fill {
                let prev = *a.beat_done.last().expect("at least one beat");
                a.beat_done.push(prev + cyc);
            }
        }
        let first_start = a.beat_done.first().map(|t| t.saturating_sub(cyc));

        // emit every output chunk whose last beat has its window ingested
        let mut emitted = Vec::new();
        loop {
            let start = a.out_beats;
            if start >= a.total_beats {
                break;
            }
            let stop = (start + chunk_beats).min(a.total_beats);
            if stop - 1 + a.fill >= a.beat_done.len() {
                break;
            }
            let cells_hi = (stop * PE_COUNT).min(a.pipe.dims().cells());
            let take = cells_hi - start * PE_COUNT;
            if a.out_cells.len() < take {
                return Err(Error::Sim(format!("fpga{fpga}.ip{slot}: window accounting ran ahead of the data")));
            }
            let data: Vec<u8> = a.out_cells.drain(..take).flat_map(f32::to_le_bytes).collect();
            let head = a.beat_done[start + a.fill];
            let tail = a.beat_done[stop - 1 + a.fill];
            let path = (a.out_seq == 0)
                .then(|| Box::new(PathTrace { from: Endpoint::Slot { fpga, slot }, hops: Vec::new() }));
            emitted.push(Item {
                buffer: a.buffer,
                session: a.session,
                seq: a.out_seq,
                last: stop == a.total_beats,
                data,
                frame: None,
                head,
                tail,
                path,
            });
            a.out_seq += 1;
            a.out_beats = stop;
        }
        let finished = a.out_beats == a.total_beats;
        let last_done = *a.beat_done.last().expect("beats ingested");
        if let Some(s) = first_start {
            let span = self.compute_span.get_or_insert((s, last_done));
            span.0 = span.0.min(s);
        }
        if finished {
            let a = st.active.take().expect("active");
            let begin = a.beat_done[0] - cyc;
            self.comps[comp].server.busy_ps += last_done - begin.max(free_at);
            st.free_at = last_done;
            st.done.insert(a.session);
            if let Some(span) = self.compute_span.as_mut() {
                span.1 = span.1.max(last_done);
            }
            self.end = self.end.max(last_done);
        }
        let port = st.port;
        let name_comp = comp;
        for e in emitted {
            self.comps[name_comp].stats.bytes_out += e.data.len() as u64;
            self.comps[name_comp].stats.items += 1;
            self.record(e.head, name_comp, "emit", e.data.len() as u64);
            self.send_to_switch(fpga, port, e)?;
        }
        Ok(())
    }

    fn finish(self) -> Result<SimResult> {
        let missing: Vec<BufferId> = self.egress_dims.keys().filter(|b| !self.finished.contains_key(b)).copied().collect();
        let idle_ip = self.ips.iter().position(|s| s.next_session().is_some());
        if !missing.is_empty() || idle_ip.is_some() {
            let (component, detail) = self.blocked(&missing);
            return Err(Error::Deadlock { component, detail });
        }
        let components = self
            .comps
            .iter()
            .map(|c| {
                let mut s = c.stats.clone();
                s.busy_s = c.server.busy_ps as f64 / PS_PER_S;
                (c.name.clone(), s)
            })
            .collect();
        let compute_s = self.compute_span.map_or(0.0, |(a, b)| (b - a) as f64 / PS_PER_S);
        let mut trace = self.trace;
        if let Some(t) = trace.as_mut() {
            t.sort_by(|a, b| (a.time_ps, &a.component).cmp(&(b.time_ps, &b.component)));
        }
        Ok(SimResult {
            buffers: self.finished,
            elapsed_s: self.end as f64 / PS_PER_S,
            compute_s,
            components,
            frames: self.frames,
            link_bytes: self.link_bytes,
            host_transfers: self.host_transfers,
            paths: self.paths,
            events: self.events,
            trace,
        })
    }

    /// Names the component holding undelivered data.
    fn blocked(&self, missing: &[BufferId]) -> (String, String) {
        for (idx, st) in self.ips.iter().enumerate() {
            let name = self.comps.iter().find(|c| c.kind == Kind::Ip { idx }).map(|c| c.name.clone()).unwrap_or_default();
            if let Some(a) = &st.active {
                return (
                    name,
                    format!("stream of buffer {:?} wave {} stopped after {} cells", a.buffer, a.session, a.cells_in),
                );
            }
            if let Some((s, q)) = st.pending.iter().find(|(_, q)| !q.is_empty()) {
                return (
                    name,
                    format!("{} chunks for wave {s} wait behind wave {:?}, which never arrived", q.len(), st.next_session()),
                );
            }
        }
        for (f, tx) in self.tx.iter().enumerate() {
            if let Some(tx) = tx {
                return (format!("fpga{f}.mfh_tx"), format!("{} bytes of buffer {:?} never arrived", tx.remaining, tx.buffer));
            }
        }
        for (f, rx) in self.rx.iter().enumerate() {
            if let Some(((src, buf, _), _)) = rx.iter().next() {
                return (format!("fpga{f}.mfh_rx"), format!("transfer of buffer {buf:?} from {src} never completed"));
            }
        }
        if let Some((idx, st)) = self.ips.iter().enumerate().find(|(_, s)| s.next_session().is_some()) {
            let name = self.comps.iter().find(|c| c.kind == Kind::Ip { idx }).map(|c| c.name.clone()).unwrap_or_default();
            return (name, format!("no data arrived for wave {:?} (fpga {} slot {})", st.next_session(), st.fpga, st.slot));
        }
        ("host.c2h".into(), format!("buffers {missing:?} never returned"))
    }
}
