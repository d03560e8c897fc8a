//! Deferred OpenMP-style task graphs.
//!
//! Tasks are recorded by a single control thread through [`GraphBuilder`]
//! and nothing is dispatched until [`GraphBuilder::finalize_at_sync`] freezes
//! the graph. Edges follow the OpenMP 4.5 depend-clause rules with exact
//! symbol matching.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Dims;
use crate::stencil::Laplace3dForm;

/// A depend-clause list item, e.g. `deps[3]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DepVar(pub String);

impl DepVar {
    pub fn new(name: impl Into<String>) -> Self {
        DepVar(name.into())
    }

    pub fn indexed(array: &str, i: usize) -> Self {
        DepVar(format!("{array}[{i}]"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BufferId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapDirection {
    To,
    From,
    Tofrom,
}

impl MapDirection {
    pub fn copies_in(self) -> bool {
        matches!(self, MapDirection::To | MapDirection::Tofrom)
    }

    pub fn copies_out(self) -> bool {
        matches!(self, MapDirection::From | MapDirection::Tofrom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapEntry {
    pub buffer: BufferId,
    pub direction: MapDirection,
    pub length: usize,
}

/// Arguments of the offloaded stencil call: the grid buffer and its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskArgs {
    pub buffer: BufferId,
    pub dims: Dims,
    pub coeffs: Vec<f32>,
    #[serde(default)]
    pub laplace3d_form: Laplace3dForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskNode {
    pub id: usize,
    pub kernel_ref: String,
    pub args: TaskArgs,
    pub deps_in: Vec<DepVar>,
    pub deps_out: Vec<DepVar>,
    pub maps: Vec<MapEntry>,
    pub nowait: bool,
}

impl TaskNode {
    pub fn map_for(&self, buffer: BufferId) -> Option<&MapEntry> {
        self.maps.iter().find(|m| m.buffer == buffer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeCause {
    #[serde(rename = "RAW")]
    Raw,
    #[serde(rename = "WAW")]
    Waw,
    #[serde(rename = "WAR")]
    War,
    /// Ordering introduced by a blocking (non-`nowait`) target.
    #[serde(rename = "SYNC")]
    Sync,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub producer: usize,
    pub consumer: usize,
    pub cause: EdgeCause,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphState {
    Building,
    Finalized,
}

/// Everything a task needs besides its id.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub kernel_ref: String,
    pub args: TaskArgs,
    pub deps_in: Vec<DepVar>,
    pub deps_out: Vec<DepVar>,
    pub maps: Vec<MapEntry>,
    pub nowait: bool,
}

#[derive(Debug, Default)]
struct DepState {
    last_writer: Option<usize>,
    readers: Vec<usize>,
}

/// Records tasks for one `single` region.
#[derive(Debug)]
pub struct GraphBuilder {
    nodes: Vec<TaskNode>,
    edges: BTreeMap<(usize, usize), EdgeCause>,
    deps: BTreeMap<DepVar, DepState>,
    buffers: BTreeMap<BufferId, usize>,
    barrier: Option<usize>,
    state: GraphState,
}

impl Default for GraphBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl GraphBuilder {
    pub fn new() -> Self {
        GraphBuilder {
            nodes: Vec::new(),
            edges: BTreeMap::new(),
            deps: BTreeMap::new(),
            buffers: BTreeMap::new(),
            barrier: None,
            state: GraphState::Building,
        }
    }

    pub fn state(&self) -> GraphState {
        self.state
    }

    /// Registers a host buffer of `bytes` bytes.
    pub fn register_buffer(&mut self, bytes: usize) -> BufferId {
        let id = BufferId(self.buffers.len() as u32);
        self.buffers.insert(id, bytes);
        id
    }

    fn add_edge(&mut self, producer: usize, consumer: usize, cause: EdgeCause) {
        if producer == consumer {
            return;
        }
        // keep the strongest cause per pair; RAW carries data
        self.edges
            .entry((producer, consumer))
            .and_modify(|c| *c = (*c).min(cause))
            .or_insert(cause);
    }

    pub fn task_create(&mut self, spec: TaskSpec) -> Result<usize> {
        if self.state == GraphState::Finalized {
            return Err(Error::Graph("task_create on a finalized graph".into()));
        }
        if spec.kernel_ref.trim().is_empty() {
            return Err(Error::Graph("empty kernel_ref".into()));
        }
        for m in &spec.maps {
            match self.buffers.get(&m.buffer) {
                None => {
                    return Err(Error::Graph(format!("map of unregistered buffer {:?}", m.buffer)))
                }
                Some(_) if m.length == 0 => {
                    return Err(Error::Graph(format!("zero-length map of {:?}", m.buffer)))
                }
                Some(&cap) if m.length > cap => {
                    return Err(Error::Graph(format!(
                        "map of {} bytes exceeds buffer {:?} ({cap} bytes)",
                        m.length, m.buffer
                    )))
                }
                Some(_) => {}
            }
        }

        let id = self.nodes.len();
        if let Some(b) = self.barrier {
            for p in 0..=b {
                self.add_edge(p, id, EdgeCause::Sync);
            }
        }
        for var in &spec.deps_in {
            let st = self.deps.entry(var.clone()).or_default();
            let writer = st.last_writer;
            if !st.readers.contains(&id) {
                st.readers.push(id);
            }
            if let Some(w) = writer {
                self.add_edge(w, id, EdgeCause::Raw);
            }
        }
        for var in &spec.deps_out {
            let st = self.deps.entry(var.clone()).or_default();
            let readers: Vec<usize> = st.readers.iter().copied().filter(|&r| r != id).collect();
            let writer = st.last_writer;
            st.last_writer = Some(id);
            st.readers.clear();
            if readers.is_empty() {
                if let Some(w) = writer {
                    self.add_edge(w, id, EdgeCause::Waw);
                }
            } else {
                for r in readers {
                    self.add_edge(r, id, EdgeCause::War);
                }
            }
        }
        if !spec.nowait {
            self.barrier = Some(id);
        }

        self.nodes.push(TaskNode {
            id,
            kernel_ref: spec.kernel_ref,
            args: spec.args,
            deps_in: spec.deps_in,
            deps_out: spec.deps_out,
            maps: spec.maps,
            nowait: spec.nowait,
        });
        Ok(id)
    }

    /// Freezes the graph at the end of the `single` region.
    pub fn finalize_at_sync(&mut self) -> Result<TaskGraph> {
        if self.state == GraphState::Finalized {
            return Err(Error::Graph("graph already finalized".into()));
        }
        self.state = GraphState::Finalized;
        let edges = self
            .edges
            .iter()
            .map(|(&(producer, consumer), &cause)| Edge {
                producer,
                consumer,
                cause,
            })
            .collect();
        Ok(TaskGraph {
            nodes: std::mem::take(&mut self.nodes),
            edges,
            buffers: self.buffers.clone(),
            state: GraphState::Finalized,
        })
    }
}

/// A finalized, immutable task graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGraph {
    pub nodes: Vec<TaskNode>,
    pub edges: Vec<Edge>,
    #[serde(skip)]
    pub buffers: BTreeMap<BufferId, usize>,
    pub state: GraphState,
}

impl TaskGraph {
    /// Builds a graph directly from parts, bypassing the dependence rules.
    pub fn from_parts(nodes: Vec<TaskNode>, edges: Vec<Edge>) -> Self {
        let mut buffers = BTreeMap::new();
        for n in &nodes {
            for m in &n.maps {
                let e = buffers.entry(m.buffer).or_insert(0);
                *e = (*e).max(m.length);
            }
        }
        TaskGraph {
            nodes,
            edges,
            buffers,
            state: GraphState::Finalized,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn predecessors(&self, id: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.consumer == id)
    }

    pub fn successors(&self, id: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.producer == id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Checks that the edge set is acyclic and points forward in creation order.
pub fn validate_acyclic(graph: &TaskGraph) -> Result<()> {
    if graph.state != GraphState::Finalized {
        return Err(Error::Graph("graph not finalized".into()));
    }
    let n = graph.nodes.len();
    for e in &graph.edges {
        if e.producer >= n || e.consumer >= n {
            return Err(Error::Graph(format!(
                "edge {} -> {} references a missing task",
                e.producer, e.consumer
            )));
        }
    }
    // Kahn's algorithm, so hand-built graphs with back edges that happen to
    // be acyclic are still reported precisely.
    let mut indeg = vec![0usize; n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    let pairs: BTreeSet<(usize, usize)> =
        graph.edges.iter().map(|e| (e.producer, e.consumer)).collect();
    for &(p, c) in &pairs {
        indeg[c] += 1;
        succ[p].push(c);
    }
    let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(v) = ready.pop() {
        seen += 1;
        for &s in &succ[v] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.push(s);
            }
        }
    }
    if seen != n {
        let stuck = (0..n).find(|&i| indeg[i] > 0).unwrap_or(0);
        return Err(Error::Cycle(stuck));
    }
    if let Some(e) = graph.edges.iter().find(|e| e.producer >= e.consumer) {
        return Err(Error::Graph(format!(
            "edge {} -> {} points backward in creation order",
            e.producer, e.consumer
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(ins: &[&str], outs: &[&str], buffer: BufferId) -> TaskSpec {
        TaskSpec {
            kernel_ref: "do_laplace2d".into(),
            args: TaskArgs {
                buffer,
                dims: Dims::d2(4, 4),
                coeffs: vec![],
                laplace3d_form: Laplace3dForm::Verbatim,
            },
            deps_in: ins.iter().map(|s| DepVar::new(*s)).collect(),
            deps_out: outs.iter().map(|s| DepVar::new(*s)).collect(),
            maps: vec![MapEntry {
                buffer,
                direction: MapDirection::Tofrom,
                length: 64,
            }],
            nowait: true,
        }
    }

    fn edges(g: &TaskGraph) -> Vec<(usize, usize, EdgeCause)> {
        g.edges.iter().map(|e| (e.producer, e.consumer, e.cause)).collect()
    }

    #[test]
    fn pipeline_chain() {
        let mut b = GraphBuilder::new();
        let buf = b.register_buffer(64);
        for i in 0..4 {
            let d_in = format!("deps[{i}]");
            let d_out = format!("deps[{}]", i + 1);
            b.task_create(spec(&[&d_in], &[&d_out], buf)).unwrap();
        }
        let g = b.finalize_at_sync().unwrap();
        use EdgeCause::Raw;
        assert_eq!(edges(&g), vec![(0, 1, Raw), (1, 2, Raw), (2, 3, Raw)]);
        validate_acyclic(&g).unwrap();
    }

    #[test]
    fn independent_tasks() {
        let mut b = GraphBuilder::new();
        let buf = b.register_buffer(64);
        b.task_create(spec(&["a"], &["b"], buf)).unwrap();
        b.task_create(spec(&["c"], &["d"], buf)).unwrap();
        assert!(b.finalize_at_sync().unwrap().edges.is_empty());
    }

    #[test]
    fn diamond() {
        let mut b = GraphBuilder::new();
        let buf = b.register_buffer(64);
        b.task_create(spec(&[], &["a"], buf)).unwrap();
        b.task_create(spec(&["a"], &["b"], buf)).unwrap();
        b.task_create(spec(&["a"], &["c"], buf)).unwrap();
        b.task_create(spec(&["b", "c"], &[], buf)).unwrap();
        let g = b.finalize_at_sync().unwrap();
        use EdgeCause::Raw;
        assert_eq!(
            edges(&g),
            vec![(0, 1, Raw), (0, 2, Raw), (1, 3, Raw), (2, 3, Raw)]
        );
    }

    #[test]
    fn waw_and_war() {
        let mut b = GraphBuilder::new();
        let buf = b.register_buffer(64);
        b.task_create(spec(&[], &["x"], buf)).unwrap();
        b.task_create(spec(&[], &["x"], buf)).unwrap();
        b.task_create(spec(&["x"], &[], buf)).unwrap();
        b.task_create(spec(&[], &["x"], buf)).unwrap();
        let g = b.finalize_at_sync().unwrap();
        use EdgeCause::*;
        assert_eq!(edges(&g), vec![(0, 1, Waw), (1, 2, Raw), (2, 3, War)]);
    }

    #[test]
    fn inout_same_symbol() {
        let mut b = GraphBuilder::new();
        let buf = b.register_buffer(64);
        b.task_create(spec(&["v"], &["v"], buf)).unwrap();
        b.task_create(spec(&["v"], &["v"], buf)).unwrap();
        let g = b.finalize_at_sync().unwrap();
        assert_eq!(edges(&g), vec![(0, 1, EdgeCause::Raw)]);
    }

    #[test]
    fn blocking_target_orders_later_tasks() {
        let mut b = GraphBuilder::new();
        let buf = b.register_buffer(64);
        let mut s = spec(&[], &["a"], buf);
        s.nowait = false;
        b.task_create(s).unwrap();
        b.task_create(spec(&[], &["z"], buf)).unwrap();
        let g = b.finalize_at_sync().unwrap();
        assert_eq!(edges(&g), vec![(0, 1, EdgeCause::Sync)]);
    }

    #[test]
    fn finalize_errors() {
        let mut b = GraphBuilder::new();
        let buf = b.register_buffer(64);
        let g = b.finalize_at_sync().unwrap();
        assert!(g.is_empty());
        validate_acyclic(&g).unwrap();
        assert!(b.finalize_at_sync().is_err());
        assert!(b.task_create(spec(&[], &[], buf)).is_err());

        let mut b = GraphBuilder::new();
        let buf = b.register_buffer(64);
        let mut s = spec(&[], &[], buf);
        s.kernel_ref = " ".into();
        assert!(b.task_create(s).is_err());
        let mut s = spec(&[], &[], BufferId(9));
        s.maps[0].buffer = BufferId(9);
        assert!(b.task_create(s).is_err());
    }

    #[test]
    fn hand_built_cycle_rejected() {
        let mut b = GraphBuilder::new();
        let buf = b.register_buffer(64);
        b.task_create(spec(&[], &[], buf)).unwrap();
        b.task_create(spec(&[], &[], buf)).unwrap();
        let g = b.finalize_at_sync().unwrap();
        let cyclic = TaskGraph::from_parts(
            g.nodes.clone(),
            vec![
                Edge { producer: 0, consumer: 1, cause: EdgeCause::Raw },
                Edge { producer: 1, consumer: 0, cause: EdgeCause::Raw },
            ],
        );
        assert!(matches!(validate_acyclic(&cyclic), Err(Error::Cycle(_))));
    }

    proptest! {
        #[test]
        fn random_programs_are_forward_dags(
            ops in proptest::collection::vec(
                (proptest::collection::vec(0u8..12, 0..3), proptest::collection::vec(0u8..12, 0..3)),
                0..200,
            )
        ) {
            let build = || {
                let mut b = GraphBuilder::new();
                let buf = b.register_buffer(64);
                for (ins, outs) in &ops {
                    let ins: Vec<String> = ins.iter().map(|v| format!("v{v}")).collect();
                    let outs: Vec<String> = outs.iter().map(|v| format!("v{v}")).collect();
                    let ins: Vec<&str> = ins.iter().map(|s| s.as_str()).collect();
                    let outs: Vec<&str> = outs.iter().map(|s| s.as_str()).collect();
                    b.task_create(spec(&ins, &outs, buf)).unwrap();
                }
                b.finalize_at_sync().unwrap()
            };
            let g = build();
            prop_assert!(g.edges.iter().all(|e| e.producer < e.consumer));
            validate_acyclic(&g).unwrap();
            prop_assert_eq!(&g, &build());
        }
    }
}
