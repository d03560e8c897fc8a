//! Cluster description: boards, IP slots, MAC addresses, ring links and
//! free-region resource budgets, loaded from a JSON document.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::stencil::KernelKind;

/// NET modules per board.
pub const NET_PORTS: usize = 4;
/// Switch ports reserved for the VFIFO and the MAC frame handler.
pub const VFIFO_PORT: u32 = 14;
pub const MFH_PORT: u32 = 15;
/// Switch ports available to IP slots (`0..IP_PORTS`).
pub const IP_PORTS: u32 = 14;

pub const DEFAULT_CLOCK_HZ: u64 = 200_000_000;
pub const DEFAULT_LINK_BPS: f64 = 10e9;
pub const DEFAULT_LINK_LATENCY_S: f64 = 500e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    /// Locally administered address for `(fpga, port)`.
    pub fn for_port(fpga: usize, port: usize) -> Self {
        MacAddr([0x02, 0x00, 0x00, 0x00, fpga as u8, port as u8])
    }

    pub fn as_u64(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64)
    }

    pub fn from_u64(v: u64) -> Self {
        let b = v.to_be_bytes();
        MacAddr([b[2], b[3], b[4], b[5], b[6], b[7]])
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(f, "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", b[0], b[1], b[2], b[3], b[4], b[5])
    }
}

impl FromStr for MacAddr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 6 {
            return Err(Error::Config(format!("bad MAC address {s:?}")));
        }
        let mut out = [0u8; 6];
        for (o, p) in out.iter_mut().zip(parts) {
            *o = u8::from_str_radix(p, 16).map_err(|_| Error::Config(format!("bad MAC address {s:?}")))?;
        }
        Ok(MacAddr(out))
    }
}

impl Serialize for MacAddr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceCost {
    pub luts: u64,
    pub brams: u64,
    pub dsps: u64,
}

impl ResourceCost {
    pub fn new(luts: u64, brams: u64, dsps: u64) -> Self {
        ResourceCost { luts, brams, dsps }
    }

    /// Free-region capacity back-derived from the published per-IP percentages.
    pub fn default_capacity() -> Self {
        ResourceCost::new(161_840, 1_083, 3_564)
    }

    /// Published synthesis cost of one IP of `kind`.
    pub fn catalog_default(kind: KernelKind) -> Self {
        match kind {
            KernelKind::Laplace2d => ResourceCost::new(12138, 8, 16),
            KernelKind::Diffusion2d => ResourceCost::new(25024, 8, 80),
            KernelKind::Jacobi9pt2d => ResourceCost::new(45733, 8, 144),
            KernelKind::Laplace3d => ResourceCost::new(21790, 65, 17),
            KernelKind::Diffusion3d => ResourceCost::new(27615, 23, 97),
        }
    }

    fn add(self, o: ResourceCost) -> Self {
        ResourceCost::new(self.luts + o.luts, self.brams + o.brams, self.dsps + o.dsps)
    }

    fn fields(&self) -> [(&'static str, u64); 3] {
        [("luts", self.luts), ("brams", self.brams), ("dsps", self.dsps)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub cost: ResourceCost,
    pub base: String,
    pub variant: String,
}

impl CatalogEntry {
    pub fn default_for(kind: KernelKind) -> Self {
        CatalogEntry {
            cost: ResourceCost::catalog_default(kind),
            base: kind.base_function(),
            variant: kind.hw_function(),
        }
    }
}

pub fn default_catalog() -> BTreeMap<KernelKind, CatalogEntry> {
    KernelKind::ALL.into_iter().map(|k| (k, CatalogEntry::default_for(k))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpSlot {
    pub slot_id: usize,
    pub kernel_kind: KernelKind,
    pub switch_port: u32,
    pub resource_cost: ResourceCost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpgaDesc {
    pub id: usize,
    pub bitstream_path: String,
    pub mac_addrs: Vec<MacAddr>,
    pub ip_slots: Vec<IpSlot>,
    pub capacity: ResourceCost,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDesc {
    pub fpga_a: usize,
    pub port_a: usize,
    pub fpga_b: usize,
    pub port_b: usize,
    pub bandwidth_bps: f64,
    pub latency_s: f64,
}

impl LinkDesc {
    pub fn connects(&self, x: usize, y: usize) -> bool {
        (self.fpga_a == x && self.fpga_b == y) || (self.fpga_a == y && self.fpga_b == x)
    }

    /// Local NET port on `fpga` for this link.
    pub fn port_on(&self, fpga: usize) -> usize {
        if self.fpga_a == fpga {
            self.port_a
        } else {
            self.port_b
        }
    }

    pub fn bytes_per_sec(&self) -> f64 {
        self.bandwidth_bps / 8.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HostLink {
    pub pcie_generation: u32,
    pub lanes: u32,
    pub bytes_per_sec: f64,
}

impl HostLink {
    /// Effective DMA throughput presets for an x8 link.
    pub fn preset(generation: u32) -> Result<Self> {
        let bytes_per_sec = match generation {
            1 => 1.6e9,
            2 => 3.2e9,
            3 => 7.88e9,
            g => return Err(Error::Config(format!("unsupported PCIe generation {g}"))),
        };
        Ok(HostLink {
            pcie_generation: generation,
            lanes: 8,
            bytes_per_sec,
        })
    }
}

impl Default for HostLink {
    fn default() -> Self {
        HostLink::preset(3).expect("gen3 preset")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Ring,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDesc {
    pub fpgas: Vec<FpgaDesc>,
    pub links: Vec<LinkDesc>,
    pub host_link: HostLink,
    pub topology: Topology,
    pub clock_hz: u64,
    pub ip_catalog: BTreeMap<KernelKind, CatalogEntry>,
}

// ---- document schema ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    fpgas: Vec<RawFpga>,
    #[serde(default)]
    links: Vec<RawLink>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    host_link: Option<RawHostLink>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    topology: Option<Topology>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ip_catalog: Option<BTreeMap<String, RawCatalogEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clock_hz: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFpga {
    id: usize,
    bitstream: String,
    #[serde(default)]
    macs: Vec<MacAddr>,
    ips: Vec<RawIp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity: Option<ResourceCost>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIp {
    kernel: String,
    port: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cost: Option<ResourceCost>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    fpga_a: usize,
    port_a: usize,
    fpga_b: usize,
    port_b: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bandwidth_bps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    latency_s: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHostLink {
    gen: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lanes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bytes_per_sec: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCatalogEntry {
    cost: ResourceCost,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variant: Option<String>,
}

pub fn load_config(text: &str) -> Result<ClusterDesc> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::ConfigParse {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let cluster = from_raw(raw)?;
    cluster.validate()?;
    Ok(cluster)
}

pub fn load_config_file(path: &std::path::Path) -> Result<ClusterDesc> {
    let text = std::fs::read_to_string(path)?;
    load_config(&text)
}

fn from_raw(raw: RawConfig) -> Result<ClusterDesc> {
    let mut ip_catalog = default_catalog();
    if let Some(cat) = raw.ip_catalog {
        for (name, e) in cat {
            let kind = KernelKind::parse(&name)?;
            ip_catalog.insert(
                kind,
                CatalogEntry {
                    cost: e.cost,
                    base: e.base.unwrap_or_else(|| kind.base_function()),
                    variant: e.variant.unwrap_or_else(|| kind.hw_function()),
                },
            );
        }
    }

    let mut fpgas = Vec::with_capacity(raw.fpgas.len());
    for f in raw.fpgas {
        let mut ip_slots = Vec::with_capacity(f.ips.len());
        for (slot_id, ip) in f.ips.into_iter().enumerate() {
            let kind = KernelKind::parse(&ip.kernel)?;
            let catalog_cost = ip_catalog[&kind].cost;
            let cost = ip.cost.unwrap_or(catalog_cost);
            if cost != catalog_cost {
                return Err(Error::Config(format!(
                    "fpga {} ip {slot_id}: cost {cost:?} differs from the catalog entry for {kind}",
                    f.id
                )));
            }
            ip_slots.push(IpSlot {
                slot_id,
                kernel_kind: kind,
                switch_port: ip.port,
                resource_cost: cost,
            });
        }
        fpgas.push(FpgaDesc {
            id: f.id,
            bitstream_path: f.bitstream,
            mac_addrs: f.macs,
            ip_slots,
            capacity: f.capacity.unwrap_or_else(ResourceCost::default_capacity),
        });
    }

    let links = raw
        .links
        .into_iter()
        .map(|l| LinkDesc {
            fpga_a: l.fpga_a,
            port_a: l.port_a,
            fpga_b: l.fpga_b,
            port_b: l.port_b,
            bandwidth_bps: l.bandwidth_bps.unwrap_or(DEFAULT_LINK_BPS),
            latency_s: l.latency_s.unwrap_or(DEFAULT_LINK_LATENCY_S),
        })
        .collect();

    let host_link = match raw.host_link {
        None => HostLink::default(),
        Some(h) => {
            let preset = HostLink::preset(h.gen)?;
            HostLink {
                pcie_generation: h.gen,
                lanes: h.lanes.unwrap_or(preset.lanes),
                bytes_per_sec: h.bytes_per_sec.unwrap_or(preset.bytes_per_sec),
            }
        }
    };

    Ok(ClusterDesc {
        fpgas,
        links,
        host_link,
        topology: raw.topology.unwrap_or(Topology::Ring),
        clock_hz: raw.clock_hz.unwrap_or(DEFAULT_CLOCK_HZ),
        ip_catalog,
    })
}

impl ClusterDesc {
    /// Symmetric ring of `fpgas` boards with `ips_per_fpga` IPs of `kind` each.
    pub fn ring(fpgas: usize, ips_per_fpga: usize, kind: KernelKind) -> Self {
        Self::ring_mixed(fpgas, &vec![kind; ips_per_fpga])
    }

    /// Ring where every board carries the IP kinds in `slots`, in order.
    pub fn ring_mixed(fpgas: usize, slots: &[KernelKind]) -> Self {
        let boards = (0..fpgas)
            .map(|id| FpgaDesc {
                id,
                bitstream_path: format!("bitstreams/fpga{id}.bit"),
                mac_addrs: (0..NET_PORTS).map(|p| MacAddr::for_port(id, p)).collect(),
                ip_slots: slots
                    .iter()
                    .enumerate()
                    .map(|(s, &k)| IpSlot {
                        slot_id: s,
                        kernel_kind: k,
                        switch_port: s as u32,
                        resource_cost: ResourceCost::catalog_default(k),
                    })
                    .collect(),
                capacity: ResourceCost::default_capacity(),
            })
            .collect();
        let mut links = Vec::new();
        if fpgas >= 2 {
            let n = if fpgas == 2 { 1 } else { fpgas };
            for k in 0..n {
                links.push(LinkDesc {
                    fpga_a: k,
                    port_a: 0,
                    fpga_b: (k + 1) % fpgas,
                    port_b: 1,
                    bandwidth_bps: DEFAULT_LINK_BPS,
                    latency_s: DEFAULT_LINK_LATENCY_S,
                });
            }
        }
        ClusterDesc {
            fpgas: boards,
            links,
            host_link: HostLink::default(),
            topology: Topology::Ring,
            clock_hz: DEFAULT_CLOCK_HZ,
            ip_catalog: default_catalog(),
        }
    }

    pub fn total_ips(&self) -> usize {
        self.fpgas.iter().map(|f| f.ip_slots.len()).sum()
    }

    pub fn with_link_bandwidth(mut self, bps: f64) -> Self {
        for l in &mut self.links {
            l.bandwidth_bps = bps;
        }
        self
    }

    /// Keeps the first `ips` slots on every board.
    pub fn with_ips_per_fpga(mut self, ips: usize) -> Result<Self> {
        for f in &mut self.fpgas {
            if f.ip_slots.len() < ips {
                return Err(Error::Config(format!(
                    "fpga {} has {} IPs, cannot use {ips}",
                    f.id,
                    f.ip_slots.len()
                )));
            }
            f.ip_slots.truncate(ips);
        }
        self.validate()?;
        Ok(self)
    }

    /// The first `n` boards as a ring of their own. Links to dropped boards
    /// are removed and the ring is closed over a free NET port if needed.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.fpgas.len() {
            return Err(Error::Config(format!(
                "cannot take {n} of {} FPGAs",
                self.fpgas.len()
            )));
        }
        let mut c = self.clone();
        c.fpgas.truncate(n);
        c.links.retain(|l| l.fpga_a < n && l.fpga_b < n);
        if c.topology == Topology::Ring && n >= 3 && !c.links.iter().any(|l| l.connects(n - 1, 0)) {
            let template = self.links.first().copied().ok_or_else(|| {
                Error::Config("ring has no links to copy parameters from".into())
            })?;
            let free_port = |c: &ClusterDesc, f: usize| {
                (0..c.fpgas[f].mac_addrs.len().min(NET_PORTS)).find(|&p| {
                    !c.links
                        .iter()
                        .any(|l| (l.fpga_a == f && l.port_a == p) || (l.fpga_b == f && l.port_b == p))
                })
            };
            let (pa, pb) = match (free_port(&c, n - 1), free_port(&c, 0)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Config("no free NET port to close the ring".into())),
            };
            c.links.push(LinkDesc {
                fpga_a: n - 1,
                port_a: pa,
                fpga_b: 0,
                port_b: pb,
                ..template
            });
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fpgas.is_empty() {
            return Err(Error::Config("cluster needs at least one FPGA".into()));
        }
        if self.clock_hz == 0 {
            return Err(Error::Config("clock_hz must be positive".into()));
        }
        if !(self.host_link.bytes_per_sec > 0.0) {
            return Err(Error::Config("host link bandwidth must be positive".into()));
        }
        let mut macs = BTreeSet::new();
        for (idx, f) in self.fpgas.iter().enumerate() {
            if f.id != idx {
                return Err(Error::Config(format!(
                    "fpga ids must be 0..{} in ring order; position {idx} has id {}",
                    self.fpgas.len(),
                    f.id
                )));
            }
            if f.bitstream_path.trim().is_empty() {
                return Err(Error::Config(format!("fpga {idx}: empty bitstream path")));
            }
            if f.ip_slots.is_empty() {
                return Err(Error::Config(format!("fpga {idx}: no IP slots")));
            }
            if f.ip_slots.len() > IP_PORTS as usize {
                return Err(Error::Config(format!(
                    "fpga {idx}: {} IPs exceed the {IP_PORTS}-port switch budget",
                    f.ip_slots.len()
                )));
            }
            if f.mac_addrs.len() > NET_PORTS {
                return Err(Error::Config(format!("fpga {idx}: more than {NET_PORTS} MAC addresses")));
            }
            if f.capacity.luts == 0 || f.capacity.brams == 0 || f.capacity.dsps == 0 {
                return Err(Error::Config(format!("fpga {idx}: capacity must be positive")));
            }
            let mut ports = BTreeSet::new();
            for s in &f.ip_slots {
                if s.switch_port >= IP_PORTS {
                    return Err(Error::Config(format!(
                        "fpga {idx}: switch port {} is reserved or out of range (IP ports are 0..{IP_PORTS})",
                        s.switch_port
                    )));
                }
                if !ports.insert(s.switch_port) {
                    return Err(Error::Config(format!(
                        "fpga {idx}: duplicate switch port {}",
                        s.switch_port
                    )));
                }
            }
            for m in &f.mac_addrs {
                if !macs.insert(*m) {
                    return Err(Error::Config(format!("duplicate MAC address {m}")));
                }
            }
        }

        let n = self.fpgas.len();
        let mut used_ports = BTreeSet::new();
        for l in &self.links {
            for (f, p) in [(l.fpga_a, l.port_a), (l.fpga_b, l.port_b)] {
                if f >= n {
                    return Err(Error::Config(format!("link references unknown fpga {f}")));
                }
                if p >= NET_PORTS || p >= self.fpgas[f].mac_addrs.len() {
                    return Err(Error::Config(format!(
                        "link references NET port {p} of fpga {f}, which has no MAC"
                    )));
                }
                if !used_ports.insert((f, p)) {
                    return Err(Error::Config(format!("NET port {p} of fpga {f} used by two links")));
                }
            }
            if l.fpga_a == l.fpga_b {
                return Err(Error::Config(format!("link loops back to fpga {}", l.fpga_a)));
            }
            if !(l.bandwidth_bps > 0.0) || !(l.latency_s >= 0.0) {
                return Err(Error::Config("link bandwidth must be positive and latency non-negative".into()));
            }
        }
        if self.topology == Topology::Ring && n >= 2 {
            for k in 0..n {
                let next = (k + 1) % n;
                if !self.links.iter().any(|l| l.connects(k, next)) {
                    return Err(Error::Config(format!("broken ring: no link between fpga {k} and fpga {next}")));
                }
            }
        }
        for s in self.fpgas.iter().flat_map(|f| &f.ip_slots) {
            if !self.ip_catalog.contains_key(&s.kernel_kind) {
                return Err(Error::Config(format!("unknown kernel kind {}", s.kernel_kind)));
            }
        }
        Ok(())
    }

    fn to_raw(&self) -> RawConfig {
        RawConfig {
            fpgas: self
                .fpgas
                .iter()
                .map(|f| RawFpga {
                    id: f.id,
                    bitstream: f.bitstream_path.clone(),
                    macs: f.mac_addrs.clone(),
                    ips: f
                        .ip_slots
                        .iter()
                        .map(|s| RawIp {
                            kernel: s.kernel_kind.name().to_string(),
                            port: s.switch_port,
                            cost: Some(s.resource_cost),
                        })
                        .collect(),
                    capacity: Some(f.capacity),
                })
                .collect(),
            links: self
                .links
                .iter()
                .map(|l| RawLink {
                    fpga_a: l.fpga_a,
                    port_a: l.port_a,
                    fpga_b: l.fpga_b,
                    port_b: l.port_b,
                    bandwidth_bps: Some(l.bandwidth_bps),
                    latency_s: Some(l.latency_s),
                })
                .collect(),
            host_link: Some(RawHostLink {
                gen: self.host_link.pcie_generation,
                lanes: Some(self.host_link.lanes),
                bytes_per_sec: Some(self.host_link.bytes_per_sec),
            }),
            topology: Some(self.topology),
            ip_catalog: Some(
                self.ip_catalog
                    .iter()
                    .map(|(k, e)| {
                        (
                            k.name().to_string(),
                            RawCatalogEntry {
                                cost: e.cost,
                                base: Some(e.base.clone()),
                                variant: Some(e.variant.clone()),
                            },
                        )
                    })
                    .collect(),
            ),
            clock_hz: Some(self.clock_hz),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_raw())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub fpga: usize,
    pub resource: &'static str,
    pub used: u64,
    pub capacity: u64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "fpga {}: {} {} > {} ({:.1}%)",
            self.fpga,
            self.resource,
            self.used,
            self.capacity,
            100.0 * self.used as f64 / self.capacity as f64
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FpgaUsage {
    pub fpga: usize,
    pub used: ResourceCost,
    pub capacity: ResourceCost,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResourceReport {
    pub usage: Vec<FpgaUsage>,
    pub violations: Vec<Violation>,
}

impl ResourceReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Sums IP costs per board against the free-region capacity.
pub fn validate_resources(cluster: &ClusterDesc) -> ResourceReport {
    let mut usage = Vec::new();
    let mut violations = Vec::new();
    for f in &cluster.fpgas {
        let used = f
            .ip_slots
            .iter()
            .fold(ResourceCost::default(), |acc, s| acc.add(s.resource_cost));
        for ((name, u), (_, c)) in used.fields().into_iter().zip(f.capacity.fields()) {
            if u > c {
                violations.push(Violation {
                    fpga: f.id,
                    resource: name,
                    used: u,
                    capacity: c,
                });
            }
        }
        usage.push(FpgaUsage {
            fpga: f.id,
            used,
            capacity: f.capacity,
        });
    }
    ResourceReport { usage, violations }
}

/// Percentage of `capacity` used by one IP of each catalog kind, as
/// `(luts%, brams%, dsps%)`.
pub fn catalog_percentages(
    catalog: &BTreeMap<KernelKind, CatalogEntry>,
    capacity: ResourceCost,
) -> BTreeMap<KernelKind, (f64, f64, f64)> {
    let pct = |a: u64, b: u64| 100.0 * a as f64 / b as f64;
    catalog
        .iter()
        .map(|(k, e)| {
            (
                *k,
                (
                    pct(e.cost.luts, capacity.luts),
                    pct(e.cost.brams, capacity.brams),
                    pct(e.cost.dsps, capacity.dsps),
                ),
            )
        })
        .collect()
}
