//! CONF register writes derived from a placement and its routes.
//!
//! Layout of the per-board CONF window, offsets relative to [`CONF_BASE`]:
//!
//! | offset | content |
//! |---|---|
//! | `0x000 + 4*in` | switch out-port for in-port `in` |
//! | `0x080` | VFIFO mode |
//! | `0x100..0x114` | MFH src MAC lo/hi, dst MAC lo/hi, stream length |
//! | `0x200 + 0x40*port` | IP block: h, w, d, flags, coefficients |

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::placement::Placement;
use super::route::{Hop, MfhOp, RouteKind, RouteTable};
use crate::config::{ClusterDesc, MacAddr};
use crate::error::{Error, Result};
use crate::stencil::Laplace3dForm;
use crate::taskgraph::TaskGraph;

pub const CONF_BASE: u32 = 0x9000;
pub const CONF_SIZE: u32 = 0x1000;
pub const SWITCH_BLOCK: u32 = 0x000;
pub const VFIFO_MODE: u32 = 0x080;
pub const MFH_BLOCK: u32 = 0x100;
pub const IP_BLOCK: u32 = 0x200;
pub const IP_STRIDE: u32 = 0x40;

pub const VFIFO_MODE_LOOP: u32 = 0;
pub const VFIFO_MODE_DRAIN: u32 = 1;

const MFH_SRC_LO: u32 = MFH_BLOCK;
const MFH_SRC_HI: u32 = MFH_BLOCK + 0x4;
const MFH_DST_LO: u32 = MFH_BLOCK + 0x8;
const MFH_DST_HI: u32 = MFH_BLOCK + 0xC;
const MFH_LEN: u32 = MFH_BLOCK + 0x10;
const IP_COEFF: u32 = 0x10;
const IP_MAX_COEFFS: usize = ((IP_STRIDE - IP_COEFF) / 4) as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfMeaning {
    SwitchRoute,
    VfifoMode,
    MfhSrcMac,
    MfhDstMac,
    MfhLen,
    IpCoeff,
    IpDims,
}

impl ConfMeaning {
    pub fn from_offset(offset: u32) -> Result<Self> {
        Ok(match offset {
            o if o < VFIFO_MODE && o % 4 == 0 => ConfMeaning::SwitchRoute,
            VFIFO_MODE => ConfMeaning::VfifoMode,
            MFH_SRC_LO | MFH_SRC_HI => ConfMeaning::MfhSrcMac,
            MFH_DST_LO | MFH_DST_HI => ConfMeaning::MfhDstMac,
            MFH_LEN => ConfMeaning::MfhLen,
            o if (IP_BLOCK..CONF_SIZE).contains(&o) && o % 4 == 0 => {
                if (o - IP_BLOCK) % IP_STRIDE < IP_COEFF {
                    ConfMeaning::IpDims
                } else {
                    ConfMeaning::IpCoeff
                }
            }
            o => return Err(Error::Register(format!("offset {o:#x} is not a CONF register"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfWrite {
    /// Wave during which the value must be in place.
    pub session: usize,
    pub fpga: usize,
    pub offset: u32,
    pub value: u32,
    pub meaning: ConfMeaning,
}

impl ConfWrite {
    pub fn address(&self) -> u32 {
        CONF_BASE + self.offset
    }
}

#[derive(Default)]
struct Writes {
    map: BTreeMap<(usize, usize, u32), (u32, ConfMeaning)>,
}

impl Writes {
    fn put(&mut self, session: usize, fpga: usize, offset: u32, value: u32, meaning: ConfMeaning) -> Result<()> {
        match self.map.insert((session, fpga, offset), (value, meaning)) {
            Some((old, _)) if old != value => Err(Error::Register(format!(
                "conflicting writes to fpga {fpga} offset {offset:#05x} in wave {session}: {old:#x} vs {value:#x}"
            ))),
            _ => Ok(()),
        }
    }

    fn finish(self) -> Vec<ConfWrite> {
        self.map
            .into_iter()
            .map(|((session, fpga, offset), (value, meaning))| ConfWrite { session, fpga, offset, value, meaning })
            .collect()
    }
}

/// All CONF writes, sorted by (session, fpga, offset). Identical writes from
/// different routes collapse; differing writes to one register are an error.
pub fn gen_conf_writes(
    graph: &TaskGraph,
    placement: &Placement,
    routes: &RouteTable,
    cluster: &ClusterDesc,
) -> Result<Vec<ConfWrite>> {
    let mut w = Writes::default();

    for a in &placement.assignments {
        let node = &graph.nodes[a.task];
        let port = cluster.fpgas[a.fpga].ip_slots[a.slot].switch_port;
        let base = IP_BLOCK + port * IP_STRIDE;
        if base + IP_STRIDE > CONF_SIZE {
            return Err(Error::Register(format!("switch port {port} has no IP block")));
        }
        let coeffs = &node.args.coeffs;
        if coeffs.len() > IP_MAX_COEFFS {
            return Err(Error::Register(format!("{} coefficients exceed the IP block", coeffs.len())));
        }
        let d = node.args.dims;
        let flags = u32::from(node.args.laplace3d_form == Laplace3dForm::SixNeighbor);
        for (off, v) in [(0, d.h), (4, d.w), (8, d.d)] {
            let v = u32::try_from(v).map_err(|_| Error::Register(format!("dimension {v} exceeds 32 bits")))?;
            w.put(a.wave, a.fpga, base + off, v, ConfMeaning::IpDims)?;
        }
        w.put(a.wave, a.fpga, base + 0xC, flags, ConfMeaning::IpDims)?;
        for (i, c) in coeffs.iter().enumerate() {
            w.put(a.wave, a.fpga, base + IP_COEFF + 4 * i as u32, c.to_bits(), ConfMeaning::IpCoeff)?;
        }
    }

    let mut vfifo: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    for r in &routes.routes {
        let sessions = r.hop_sessions();
        let links: Vec<usize> = r
            .hops
            .iter()
            .filter_map(|h| match h {
                Hop::NetLink { link, .. } => Some(*link),
                _ => None,
            })
            .collect();
        for (hop, &s) in r.hops.iter().zip(&sessions) {
            match *hop {
                Hop::SwitchPort { fpga, in_port, out_port } => {
                    w.put(s, fpga, SWITCH_BLOCK + 4 * in_port, out_port, ConfMeaning::SwitchRoute)?;
                }
                // The mode register only steers switch-side data; host data
                // always enters the switch.
                Hop::Vfifo { .. } if matches!(r.kind, RouteKind::Ingress { .. }) => {}
                Hop::Vfifo { fpga } => {
                    let mode = if r.inter_wave { VFIFO_MODE_LOOP } else { VFIFO_MODE_DRAIN };
                    let e = vfifo.entry((s, fpga)).or_insert(mode);
                    if mode == VFIFO_MODE_LOOP {
                        *e = VFIFO_MODE_LOOP;
                    }
                }
                Hop::Mfh { fpga, op: MfhOp::Encap } => {
                    let (first, last) = match (links.first(), links.last()) {
                        (Some(&f), Some(&l)) => (&cluster.links[f], &cluster.links[l]),
                        _ => return Err(Error::Register("MFH encap without a link hop".into())),
                    };
                    let dst_fpga = match r.hops.iter().rev().find_map(|h| match h {
                        Hop::Mfh { fpga, op: MfhOp::Decap } => Some(*fpga),
                        _ => None,
                    }) {
                        Some(f) => f,
                        None => return Err(Error::Register("MFH encap without a decap".into())),
                    };
                    let src = MacAddr::for_port(fpga, first.port_on(fpga)).as_u64();
                    let dst = MacAddr::for_port(dst_fpga, last.port_on(dst_fpga)).as_u64();
                    let len = u32::try_from(r.bytes)
                        .map_err(|_| Error::Register(format!("stream of {} bytes exceeds the length register", r.bytes)))?;
                    w.put(s, fpga, MFH_SRC_LO, src as u32, ConfMeaning::MfhSrcMac)?;
                    w.put(s, fpga, MFH_SRC_HI, (src >> 32) as u32, ConfMeaning::MfhSrcMac)?;
                    w.put(s, fpga, MFH_DST_LO, dst as u32, ConfMeaning::MfhDstMac)?;
                    w.put(s, fpga, MFH_DST_HI, (dst >> 32) as u32, ConfMeaning::MfhDstMac)?;
                    w.put(s, fpga, MFH_LEN, len, ConfMeaning::MfhLen)?;
                }
                _ => {}
            }
        }
    }
    for ((s, fpga), mode) in vfifo {
        w.put(s, fpga, VFIFO_MODE, mode, ConfMeaning::VfifoMode)?;
    }
    Ok(w.finish())
}

/// Text form: one `offset value` pair per line, grouped under
/// `# fpga F wave S` headers.
pub fn write_conf_hex(writes: &[ConfWrite]) -> String {
    let mut out = String::new();
    let mut cur = None;
    for c in writes {
        if cur != Some((c.fpga, c.session)) {
            cur = Some((c.fpga, c.session));
            let _ = writeln!(out, "# fpga {} wave {}", c.fpga, c.session);
        }
        let _ = writeln!(out, "{:#06x} {:#010x}", c.offset, c.value);
    }
    out
}

pub fn parse_conf_hex(text: &str) -> Result<Vec<ConfWrite>> {
    let mut out = Vec::new();
    let mut cur: Option<(usize, usize)> = None;
    let hex = |s: &str, line: usize| {
        u32::from_str_radix(s.trim_start_matches("0x"), 16)
            .map_err(|e| Error::Register(format!("line {line}: bad hex {s:?}: {e}")))
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            let parts: Vec<&str> = h.split_whitespace().collect();
            // Other comment lines are ignored.
            if let ["fpga", f, "wave", s] = parts.as_slice() {
                let f = f.parse().map_err(|_| Error::Register(format!("line {}: bad fpga", i + 1)))?;
                let s = s.parse().map_err(|_| Error::Register(format!("line {}: bad wave", i + 1)))?;
                cur = Some((f, s));
            }
            continue;
        }
        let (fpga, session) = cur.ok_or_else(|| Error::Register(format!("line {}: write before header", i + 1)))?;
        let mut it = line.split_whitespace();
        let (Some(o), Some(v), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::Register(format!("line {}: expected `offset value`", i + 1)));
        };
        let offset = hex(o, i + 1)?;
        out.push(ConfWrite { session, fpga, offset, value: hex(v, i + 1)?, meaning: ConfMeaning::from_offset(offset)? });
    }
    Ok(out)
}
