use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::ClusterDesc;
use crate::error::{Error, Result};
use crate::stencil::KernelKind;
use crate::taskgraph::TaskGraph;
use crate::variant::{VariantKind, VariantRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub task: usize,
    pub fpga: usize,
    pub slot: usize,
    pub wave: usize,
    pub kind: KernelKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub assignments: Vec<Assignment>,
    pub waves: usize,
}

impl Placement {
    pub fn of(&self, task: usize) -> &Assignment {
        &self.assignments[task]
    }
}

/// Resolves every task's base function to an IP kernel under `ctx`.
pub fn resolve_kinds(
    graph: &TaskGraph,
    registry: &VariantRegistry,
    ctx: &BTreeSet<String>,
) -> Result<Vec<KernelKind>> {
    graph
        .nodes
        .iter()
        .map(|n| {
            let v = registry.resolve(&n.kernel_ref, ctx)?;
            match (v.kind, v.ip_catalog_ref) {
                (VariantKind::IpVariant, Some(k)) => Ok(k),
                _ => Err(Error::Placement(format!(
                    "task {} ({}) resolves to the CPU base {}; only device-resident regions can be mapped",
                    n.id, n.kernel_ref, v.variant_name
                ))),
            }
        })
        .collect()
}

/// Round-robin placement: tasks in creation order take the next compatible
/// slot, slots ordered by distance from the host then slot id. Running out of
/// slots starts a new wave that reuses them.
pub fn map_tasks(graph: &TaskGraph, cluster: &ClusterDesc, kinds: &[KernelKind]) -> Result<Placement> {
    if kinds.len() != graph.nodes.len() {
        return Err(Error::Placement("one kernel kind per task required".into()));
    }
    let mut slots: BTreeMap<KernelKind, Vec<(usize, usize)>> = BTreeMap::new();
    for f in &cluster.fpgas {
        for s in &f.ip_slots {
            slots.entry(s.kernel_kind).or_default().push((f.id, s.slot_id));
        }
    }
    let mut cursor: BTreeMap<KernelKind, usize> = BTreeMap::new();
    let mut assignments = Vec::with_capacity(kinds.len());
    let mut waves = 0;
    for (task, &kind) in kinds.iter().enumerate() {
        let pool = slots
            .get(&kind)
            .ok_or_else(|| Error::Placement(format!("no IP slot in the cluster runs {kind}")))?;
        let n = cursor.entry(kind).or_insert(0);
        let (fpga, slot) = pool[*n % pool.len()];
        let wave = *n / pool.len();
        *n += 1;
        waves = waves.max(wave + 1);
        assignments.push(Assignment {
            task,
            fpga,
            slot,
            wave,
            kind,
        });
    }
    Ok(Placement { assignments, waves })
}
