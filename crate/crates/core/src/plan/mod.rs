//! Planning: task placement onto IP slots, streaming routes between them,
//! and the CONF register writes that program the fabric.

mod conf;
mod placement;
mod route;

pub use conf::{
    gen_conf_writes, parse_conf_hex, write_conf_hex, ConfMeaning, ConfWrite, CONF_BASE, CONF_SIZE,
    IP_BLOCK, IP_STRIDE, MFH_BLOCK, SWITCH_BLOCK, VFIFO_MODE, VFIFO_MODE_DRAIN, VFIFO_MODE_LOOP,
};
pub use placement::{map_tasks, resolve_kinds, Assignment, Placement};
pub use route::{
    data_chains, infer_routes, net_path, Endpoint, Hop, MfhOp, Route, RouteKind, RouteTable,
    TransferDir,
};

use serde::Serialize;

/// Everything `--dump-plan` writes.
#[derive(Debug, Serialize)]
pub struct PlanDump<'a> {
    pub placement: &'a Placement,
    pub routes: &'a RouteTable,
}
