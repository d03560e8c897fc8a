use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::placement::Placement;
use crate::config::{ClusterDesc, MFH_PORT, VFIFO_PORT};
use crate::error::{Error, Result};
use crate::taskgraph::{BufferId, EdgeCause, TaskGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferDir {
    HostToCard,
    CardToHost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MfhOp {
    Encap,
    Decap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "hop", rename_all = "snake_case")]
pub enum Hop {
    HostDma { dir: TransferDir },
    Vfifo { fpga: usize },
    SwitchPort { fpga: usize, in_port: u32, out_port: u32 },
    Mfh { fpga: usize, op: MfhOp },
    NetLink { from: usize, to: usize, link: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "snake_case")]
pub enum Endpoint {
    Host,
    Slot { fpga: usize, slot: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RouteKind {
    Ingress { buffer: BufferId, consumer: usize },
    Edge { producer: usize, consumer: usize },
    Egress { buffer: BufferId, producer: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub kind: RouteKind,
    pub from: Endpoint,
    pub to: Endpoint,
    pub buffer: BufferId,
    pub bytes: usize,
    /// Session (wave) in which the data leaves `from`.
    pub session: usize,
    /// True when the data waits in the VFIFO for the next wave.
    pub inter_wave: bool,
    pub hops: Vec<Hop>,
}

impl Route {
    pub fn crosses_boards(&self) -> bool {
        self.hops.iter().any(|h| matches!(h, Hop::NetLink { .. }))
    }

    pub fn touches_host(&self) -> bool {
        self.hops.iter().any(|h| matches!(h, Hop::HostDma { .. }))
    }

    /// Session in which each hop is active. Parking in the VFIFO moves the
    /// remaining hops to the next session.
    pub fn hop_sessions(&self) -> Vec<usize> {
        let mut s = self.session;
        self.hops
            .iter()
            .map(|h| {
                let cur = s;
                if self.inter_wave && matches!(h, Hop::Vfifo { .. }) {
                    s += 1;
                }
                cur
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteTable {
    pub routes: Vec<Route>,
}

impl RouteTable {
    pub fn edge(&self, producer: usize, consumer: usize) -> Option<&Route> {
        self.routes
            .iter()
            .find(|r| r.kind == RouteKind::Edge { producer, consumer })
    }

    pub fn ingress(&self, buffer: BufferId) -> Option<&Route> {
        self.routes
            .iter()
            .find(|r| matches!(r.kind, RouteKind::Ingress { buffer: b, .. } if b == buffer))
    }

    pub fn egress(&self, buffer: BufferId) -> Option<&Route> {
        self.routes
            .iter()
            .find(|r| matches!(r.kind, RouteKind::Egress { buffer: b, .. } if b == buffer))
    }

    /// Transfers that cross the PCIe host link.
    pub fn host_transfers(&self) -> usize {
        self.routes.iter().filter(|r| r.touches_host()).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// For each mapped buffer, the tasks that stream it, in creation order.
///
/// Consecutive tasks on one buffer must be ordered by a direct RAW edge: that
/// edge is what carries the grid from one IP to the next.
pub fn data_chains(graph: &TaskGraph) -> Result<BTreeMap<BufferId, Vec<usize>>> {
    let mut chains: BTreeMap<BufferId, Vec<usize>> = BTreeMap::new();
    for n in &graph.nodes {
        if n.map_for(n.args.buffer).is_none() {
            return Err(Error::Route(format!(
                "task {} does not map its grid buffer {:?}",
                n.id, n.args.buffer
            )));
        }
        chains.entry(n.args.buffer).or_default().push(n.id);
    }
    for (buf, tasks) in &chains {
        for w in tasks.windows(2) {
            let raw = graph
                .edges
                .iter()
                .any(|e| e.producer == w[0] && e.consumer == w[1] && e.cause == EdgeCause::Raw);
            if !raw {
                return Err(Error::Route(format!(
                    "buffer {buf:?} is used by tasks {} and {} without a RAW dependence between them",
                    w[0], w[1]
                )));
            }
            if graph.predecessors(w[1]).filter(|e| e.cause == EdgeCause::Raw).count() > 1 {
                return Err(Error::Route(format!(
                    "task {} joins several producers; only chains can be streamed",
                    w[1]
                )));
            }
        }
    }
    Ok(chains)
}

/// Shortest sequence of board-to-board link hops from `src` to `dst`.
/// Neighbours are explored in link order, which keeps the choice stable.
pub fn net_path(cluster: &ClusterDesc, src: usize, dst: usize) -> Result<Vec<Hop>> {
    if src == dst {
        return Ok(Vec::new());
    }
    let n = cluster.fpgas.len();
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[src] = true;
    let mut queue = VecDeque::from([src]);
    while let Some(v) = queue.pop_front() {
        for (li, l) in cluster.links.iter().enumerate() {
            let next = if l.fpga_a == v {
                l.fpga_b
            } else if l.fpga_b == v {
                l.fpga_a
            } else {
                continue;
            };
            if !seen[next] {
                seen[next] = true;
                prev[next] = Some((v, li));
                queue.push_back(next);
            }
        }
    }
    if !seen[dst] {
        return Err(Error::Route(format!("no link path from fpga {src} to fpga {dst}")));
    }
    let mut hops = Vec::new();
    let mut at = dst;
    while let Some((p, li)) = prev[at] {
        hops.push(Hop::NetLink { from: p, to: at, link: li });
        at = p;
    }
    hops.reverse();
    Ok(hops)
}

fn slot_port(cluster: &ClusterDesc, fpga: usize, slot: usize) -> u32 {
    cluster.fpgas[fpga].ip_slots[slot].switch_port
}

/// Hops from switch in-port `from_port` on `src` to out-port `to_port` on `dst`.
/// With `via_vfifo`, the data is parked in the VFIFO of `dst` first.
fn fabric_segment(
    cluster: &ClusterDesc,
    src: usize,
    from_port: u32,
    dst: usize,
    to_port: u32,
    via_vfifo: bool,
) -> Result<Vec<Hop>> {
    let mut hops = Vec::new();
    let mut in_port = from_port;
    if src != dst {
        hops.push(Hop::SwitchPort { fpga: src, in_port, out_port: MFH_PORT });
        hops.push(Hop::Mfh { fpga: src, op: MfhOp::Encap });
        hops.extend(net_path(cluster, src, dst)?);
        hops.push(Hop::Mfh { fpga: dst, op: MfhOp::Decap });
        in_port = MFH_PORT;
    }
    if via_vfifo && to_port != VFIFO_PORT {
        hops.push(Hop::SwitchPort { fpga: dst, in_port, out_port: VFIFO_PORT });
        hops.push(Hop::Vfifo { fpga: dst });
        in_port = VFIFO_PORT;
    }
    hops.push(Hop::SwitchPort { fpga: dst, in_port, out_port: to_port });
    Ok(hops)
}

/// Turns the placement into streaming routes. Intermediate `tofrom` maps are
/// elided: only the first task of a buffer chain reads from the host and only
/// the last one writes back.
pub fn infer_routes(graph: &TaskGraph, placement: &Placement, cluster: &ClusterDesc) -> Result<RouteTable> {
    let chains = data_chains(graph)?;
    let mut routes = Vec::new();
    for (&buffer, tasks) in &chains {
        let first = &graph.nodes[tasks[0]];
        let last = &graph.nodes[*tasks.last().expect("non-empty chain")];
        let first_map = first.map_for(buffer).expect("checked in data_chains");
        let last_map = last.map_for(buffer).expect("checked in data_chains");
        if !first_map.direction.copies_in() {
            return Err(Error::Route(format!(
                "task {} is first on buffer {buffer:?} but does not map it to the device",
                first.id
            )));
        }
        let bytes = first_map.length;

        let a = placement.of(first.id);
        let mut hops = vec![
            Hop::HostDma { dir: TransferDir::HostToCard },
            Hop::Vfifo { fpga: 0 },
        ];
        hops.extend(fabric_segment(cluster, 0, VFIFO_PORT, a.fpga, slot_port(cluster, a.fpga, a.slot), false)?);
        routes.push(Route {
            kind: RouteKind::Ingress { buffer, consumer: first.id },
            from: Endpoint::Host,
            to: Endpoint::Slot { fpga: a.fpga, slot: a.slot },
            buffer,
            bytes,
            session: a.wave,
            inter_wave: false,
            hops,
        });

        for w in tasks.windows(2) {
            let (p, c) = (placement.of(w[0]), placement.of(w[1]));
            let inter_wave = c.wave != p.wave;
            if inter_wave && c.wave != p.wave + 1 {
                return Err(Error::Route(format!(
                    "edge {} -> {} skips from wave {} to wave {}; the VFIFO holds data for one wave only",
                    w[0], w[1], p.wave, c.wave
                )));
            }
            if !inter_wave && (p.fpga, p.slot) == (c.fpga, c.slot) {
                return Err(Error::Route(format!("tasks {} and {} share a slot within one wave", w[0], w[1])));
            }
            let hops = fabric_segment(
                cluster,
                p.fpga,
                slot_port(cluster, p.fpga, p.slot),
                c.fpga,
                slot_port(cluster, c.fpga, c.slot),
                inter_wave,
            )?;
            routes.push(Route {
                kind: RouteKind::Edge { producer: w[0], consumer: w[1] },
                from: Endpoint::Slot { fpga: p.fpga, slot: p.slot },
                to: Endpoint::Slot { fpga: c.fpga, slot: c.slot },
                buffer,
                bytes,
                session: p.wave,
                inter_wave,
                hops,
            });
        }

        if last_map.direction.copies_out() {
            let z = placement.of(last.id);
            let mut hops = fabric_segment(cluster, z.fpga, slot_port(cluster, z.fpga, z.slot), 0, VFIFO_PORT, false)?;
            hops.push(Hop::Vfifo { fpga: 0 });
            hops.push(Hop::HostDma { dir: TransferDir::CardToHost });
            routes.push(Route {
                kind: RouteKind::Egress { buffer, producer: last.id },
                from: Endpoint::Slot { fpga: z.fpga, slot: z.slot },
                to: Endpoint::Host,
                buffer,
                bytes,
                session: z.wave,
                inter_wave: false,
                hops,
            });
        }
    }
    Ok(RouteTable { routes })
}
