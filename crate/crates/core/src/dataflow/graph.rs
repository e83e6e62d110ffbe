use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{ticks, Ticks};

/// Dense index of an operator instance inside a [`DataflowGraph`].
pub type InstanceIdx = usize;
/// Dense index of a channel inside a [`DataflowGraph`]; channel order is
/// stable and sorted by `(from, to)` instance index.
pub type ChannelId = usize;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OperatorInstanceId {
    pub operator: String,
    pub index: u32,
}

impl fmt::Display for OperatorInstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.operator, self.index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    Forward,
    Shuffle,
    Broadcast,
    Feedback,
}

impl ChannelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelKind::Forward => "forward",
            ChannelKind::Shuffle => "shuffle",
            ChannelKind::Broadcast => "broadcast",
            ChannelKind::Feedback => "feedback",
        }
    }
}

impl FromStr for ChannelKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(ChannelKind::Forward),
            "shuffle" => Ok(ChannelKind::Shuffle),
            "broadcast" => Ok(ChannelKind::Broadcast),
            "feedback" => Ok(ChannelKind::Feedback),
            other => Err(GraphError::Parse(format!("unknown channel kind `{other}`"))),
        }
    }
}

/// Operator logic identifier. Parameters (window length, multiplier) are
/// bound separately by the workload that instantiates the graph.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LogicId {
    /// Reads the named stream of the source log.
    Source(String),
    Map,
    IncrementalJoin,
    WindowJoin,
    WindowCount,
    ReachJoin,
    ReachSelect,
    ReachProject,
    /// Select then project in one operator, for compact cyclic graphs.
    ReachStep,
    Sink,
}

impl LogicId {
    pub fn is_source(&self) -> bool {
        matches!(self, LogicId::Source(_))
    }

    pub fn is_sink(&self) -> bool {
        matches!(self, LogicId::Sink)
    }
}

impl fmt::Display for LogicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogicId::Source(s) => write!(f, "source:{s}"),
            LogicId::Map => f.write_str("map"),
            LogicId::IncrementalJoin => f.write_str("incremental-join"),
            LogicId::WindowJoin => f.write_str("window-join"),
            LogicId::WindowCount => f.write_str("window-count"),
            LogicId::ReachJoin => f.write_str("reach-join"),
            LogicId::ReachSelect => f.write_str("reach-select"),
            LogicId::ReachProject => f.write_str("reach-project"),
            LogicId::ReachStep => f.write_str("reach-step"),
            LogicId::Sink => f.write_str("sink"),
        }
    }
}

impl FromStr for LogicId {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(stream) = s.strip_prefix("source:") {
            if stream.is_empty() {
                return Err(GraphError::Parse("source logic needs a stream name".into()));
            }
            return Ok(LogicId::Source(stream.to_string()));
        }
        Ok(match s {
            "map" => LogicId::Map,
            "incremental-join" => LogicId::IncrementalJoin,
            "window-join" => LogicId::WindowJoin,
            "window-count" => LogicId::WindowCount,
            "reach-join" => LogicId::ReachJoin,
            "reach-select" => LogicId::ReachSelect,
            "reach-project" => LogicId::ReachProject,
            "reach-step" => LogicId::ReachStep,
            "sink" => LogicId::Sink,
            other => return Err(GraphError::Parse(format!("unknown logic `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub name: String,
    pub parallelism: u32,
    pub logic: LogicId,
    pub stateful: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    pub kind: ChannelKind,
    /// Overrides [`GraphSpec::default_latency`] (time units).
    pub base_latency: Option<f64>,
    /// Overrides [`GraphSpec::default_bandwidth`] (bytes per time unit).
    pub bandwidth: Option<f64>,
}

/// Declarative graph description, before validation and instance expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub operators: Vec<OperatorSpec>,
    pub edges: Vec<EdgeSpec>,
    pub default_latency: f64,
    pub default_bandwidth: f64,
}

pub const DEFAULT_LATENCY: f64 = 0.0005;
pub const DEFAULT_BANDWIDTH: f64 = 1.0e8;

impl GraphSpec {
    pub fn new() -> Self {
        GraphSpec {
            operators: Vec::new(),
            edges: Vec::new(),
            default_latency: DEFAULT_LATENCY,
            default_bandwidth: DEFAULT_BANDWIDTH,
        }
    }

    pub fn operator(mut self, name: &str, parallelism: u32, logic: LogicId, stateful: bool) -> Self {
        self.operators.push(OperatorSpec { name: name.to_string(), parallelism, logic, stateful });
        self
    }

    pub fn edge(mut self, from: &str, to: &str, kind: ChannelKind) -> Self {
        self.edges.push(EdgeSpec {
            from: from.to_string(),
            to: to.to_string(),
            kind,
            base_latency: None,
            bandwidth: None,
        });
        self
    }
}

impl Default for GraphSpec {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("directed cycle through non-feedback channels: {0:?}")]
    UnflaggedCycle(Vec<String>),
    #[error("operator `{0}` violates connectivity (missing input or output)")]
    DanglingOperator(String),
    #[error("duplicate operator name `{0}`")]
    DuplicateOperator(String),
    #[error("edge references unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("operator `{0}` has parallelism 0")]
    InvalidParallelism(String),
    #[error("invalid edge {0}")]
    InvalidEdge(String),
    #[error("graph spec parse error: {0}")]
    Parse(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceInfo {
    pub id: OperatorInstanceId,
    pub operator: usize,
    /// Worker hosting this instance; worker `w` hosts instance `w` of every
    /// operator.
    pub worker: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub id: ChannelId,
    pub from: InstanceIdx,
    pub to: InstanceIdx,
    pub kind: ChannelKind,
    pub base_latency: Ticks,
    /// Bytes per time unit.
    pub bandwidth: f64,
    pub edge: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: ChannelKind,
    /// `routes[u][d]` is the channel from the `u`-th upstream instance to
    /// the `d`-th downstream instance, if one exists.
    pub routes: Vec<Vec<Option<ChannelId>>>,
}

/// A validated, instance-expanded dataflow graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataflowGraph {
    pub operators: Vec<OperatorSpec>,
    pub instances: Vec<InstanceInfo>,
    /// First instance index of each operator; instances of one operator are
    /// contiguous.
    pub first_instance: Vec<InstanceIdx>,
    pub channels: Vec<Channel>,
    pub edges: Vec<Edge>,
    pub inputs: Vec<Vec<ChannelId>>,
    pub outputs: Vec<Vec<ChannelId>>,
    pub out_edges: Vec<Vec<usize>>,
    pub sources: Vec<usize>,
    pub sinks: Vec<usize>,
}

impl DataflowGraph {
    pub fn instance_count(&self) -> usize {
        self.instances.len()
    }

    pub fn worker_count(&self) -> u32 {
        self.operators.iter().map(|o| o.parallelism).max().unwrap_or(0)
    }

    pub fn operator_index(&self, name: &str) -> Option<usize> {
        self.operators.iter().position(|o| o.name == name)
    }

    pub fn instance(&self, operator: usize, index: u32) -> InstanceIdx {
        self.first_instance[operator] + index as usize
    }

    pub fn instance_by_id(&self, id: &OperatorInstanceId) -> Option<InstanceIdx> {
        let op = self.operator_index(&id.operator)?;
        (id.index < self.operators[op].parallelism).then(|| self.instance(op, id.index))
    }

    pub fn operator_of(&self, instance: InstanceIdx) -> &OperatorSpec {
        &self.operators[self.instances[instance].operator]
    }

    pub fn has_feedback(&self) -> bool {
        self.edges.iter().any(|e| e.kind == ChannelKind::Feedback)
    }

    pub fn is_source_instance(&self, instance: InstanceIdx) -> bool {
        self.operator_of(instance).logic.is_source()
    }

    pub fn instances_on_worker(&self, worker: u32) -> Vec<InstanceIdx> {
        self.instances
            .iter()
            .enumerate()
            .filter(|(_, i)| i.worker == worker)
            .map(|(idx, _)| idx)
            .collect()
    }
}

/// Deterministic key-to-instance partitioner shared by all keyed channels.
pub fn partition_of(key: u64, parallelism: u32) -> u32 {
    let mut h = FnvHasher::default();
    h.write_u64(key);
    (h.finish() % parallelism as u64) as u32
}

/// Validates `spec` and expands it into instances and channels.
pub fn build_graph(spec: &GraphSpec) -> Result<DataflowGraph, GraphError> {
    let mut names = BTreeMap::new();
    for (i, op) in spec.operators.iter().enumerate() {
        if names.insert(op.name.clone(), i).is_some() {
            return Err(GraphError::DuplicateOperator(op.name.clone()));
        }
        if op.parallelism == 0 {
            return Err(GraphError::InvalidParallelism(op.name.clone()));
        }
    }
    let lookup = |n: &str| names.get(n).copied().ok_or_else(|| GraphError::UnknownOperator(n.to_string()));

    let mut resolved = Vec::with_capacity(spec.edges.len());
    let mut seen = BTreeSet::new();
    for e in &spec.edges {
        let (from, to) = (lookup(&e.from)?, lookup(&e.to)?);
        if !seen.insert((from, to)) {
            return Err(GraphError::InvalidEdge(format!("duplicate edge {} -> {}", e.from, e.to)));
        }
        let (f, t) = (&spec.operators[from], &spec.operators[to]);
        if t.logic.is_source() {
            return Err(GraphError::InvalidEdge(format!("{} -> source {}", e.from, e.to)));
        }
        if f.logic.is_sink() {
            return Err(GraphError::InvalidEdge(format!("sink {} -> {}", e.from, e.to)));
        }
        if e.kind == ChannelKind::Forward && f.parallelism != t.parallelism {
            return Err(GraphError::InvalidEdge(format!(
                "forward edge {} -> {} needs equal parallelism",
                e.from, e.to
            )));
        }
        if e.bandwidth.unwrap_or(spec.default_bandwidth) <= 0.0 {
            return Err(GraphError::InvalidEdge(format!("{} -> {} bandwidth must be > 0", e.from, e.to)));
        }
        if e.base_latency.unwrap_or(spec.default_latency) < 0.0 {
            return Err(GraphError::InvalidEdge(format!("{} -> {} latency must be >= 0", e.from, e.to)));
        }
        resolved.push((from, to, e));
    }

    check_acyclic(spec, &resolved)?;

    let n_ops = spec.operators.len();
    let mut has_in = vec![false; n_ops];
    let mut has_out = vec![false; n_ops];
    for &(f, t, _) in &resolved {
        has_out[f] = true;
        has_in[t] = true;
    }
    for (i, op) in spec.operators.iter().enumerate() {
        if (!op.logic.is_source() && !has_in[i]) || (!op.logic.is_sink() && !has_out[i]) {
            return Err(GraphError::DanglingOperator(op.name.clone()));
        }
    }

    let mut instances = Vec::new();
    let mut first_instance = Vec::with_capacity(n_ops);
    for (op_idx, op) in spec.operators.iter().enumerate() {
        first_instance.push(instances.len());
        for index in 0..op.parallelism {
            instances.push(InstanceInfo {
                id: OperatorInstanceId { operator: op.name.clone(), index },
                operator: op_idx,
                worker: index,
            });
        }
    }

    // Enumerate instance-level channel endpoints, then sort for a stable order.
    let mut raw = Vec::new();
    for (edge_idx, &(f, t, e)) in resolved.iter().enumerate() {
        let (pf, pt) = (spec.operators[f].parallelism, spec.operators[t].parallelism);
        for u in 0..pf {
            for d in 0..pt {
                if e.kind == ChannelKind::Forward && u != d {
                    continue;
                }
                raw.push((first_instance[f] + u as usize, first_instance[t] + d as usize, edge_idx));
            }
        }
    }
    raw.sort_unstable();

    let mut edges: Vec<Edge> = resolved
        .iter()
        .map(|&(f, t, e)| Edge {
            from: f,
            to: t,
            kind: e.kind,
            routes: vec![vec![None; spec.operators[t].parallelism as usize]; spec.operators[f].parallelism as usize],
        })
        .collect();
    let mut inputs = vec![Vec::new(); instances.len()];
    let mut outputs = vec![Vec::new(); instances.len()];
    let mut channels = Vec::with_capacity(raw.len());
    for (id, (from, to, edge_idx)) in raw.into_iter().enumerate() {
        let e = resolved[edge_idx].2;
        let u = instances[from].id.index as usize;
        let d = instances[to].id.index as usize;
        edges[edge_idx].routes[u][d] = Some(id);
        inputs[to].push(id);
        outputs[from].push(id);
        channels.push(Channel {
            id,
            from,
            to,
            kind: e.kind,
            base_latency: ticks(e.base_latency.unwrap_or(spec.default_latency)),
            bandwidth: e.bandwidth.unwrap_or(spec.default_bandwidth),
            edge: edge_idx,
        });
    }
    for v in inputs.iter_mut() {
        v.sort_unstable();
    }

    let mut out_edges = vec![Vec::new(); n_ops];
    for (i, e) in edges.iter().enumerate() {
        out_edges[e.from].push(i);
    }

    Ok(DataflowGraph {
        sources: (0..n_ops).filter(|&i| spec.operators[i].logic.is_source()).collect(),
        sinks: (0..n_ops).filter(|&i| spec.operators[i].logic.is_sink()).collect(),
        operators: spec.operators.clone(),
        instances,
        first_instance,
        channels,
        edges,
        inputs,
        outputs,
        out_edges,
    })
}

fn check_acyclic(spec: &GraphSpec, edges: &[(usize, usize, &EdgeSpec)]) -> Result<(), GraphError> {
    let n = spec.operators.len();
    let mut indegree = vec![0usize; n];
    let mut adj = vec![Vec::new(); n];
    for &(f, t, e) in edges {
        if e.kind != ChannelKind::Feedback {
            adj[f].push(t);
            indegree[t] += 1;
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut visited = 0;
    while let Some(v) = queue.pop_front() {
        visited += 1;
        for &w in &adj[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    if visited == n {
        return Ok(());
    }
    let cyclic = (0..n).filter(|&i| indegree[i] > 0).map(|i| spec.operators[i].name.clone()).collect();
    Err(GraphError::UnflaggedCycle(cyclic))
}
