//! Desk-scale NexMark analogs and the cyclic reachability query.

mod generator;
mod logic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataflow::{build_graph, ChannelKind, DataflowGraph, GraphError, GraphSpec, LogicId};
use crate::time::{ticks, Ticks};

pub use generator::{generate, CyclicProbs, GeneratorConfig, SourceLog, SourceRecord};
pub use logic::{apply, route, LogicParams, Route};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("unknown query `{0}`")]
    UnknownQuery(String),
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryId {
    Q1,
    Q3,
    Q8,
    Q12,
    Reach,
}

impl QueryId {
    pub const ALL: [QueryId; 5] = [QueryId::Q1, QueryId::Q3, QueryId::Q8, QueryId::Q12, QueryId::Reach];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryId::Q1 => "q1",
            QueryId::Q3 => "q3",
            QueryId::Q8 => "q8",
            QueryId::Q12 => "q12",
            QueryId::Reach => "reach",
        }
    }
}

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryId {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "q1" => Ok(QueryId::Q1),
            "q3" => Ok(QueryId::Q3),
            "q8" => Ok(QueryId::Q8),
            "q12" => Ok(QueryId::Q12),
            "reach" => Ok(QueryId::Reach),
            _ => Err(WorkloadError::UnknownQuery(s.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub id: QueryId,
    pub parallelism: u32,
    /// Tumbling window length in time units (Q8, Q12).
    pub window: f64,
    /// Price multiplier of the Q1 map.
    pub multiplier: f64,
    /// Longest path the reachability query extends (nodes).
    pub max_path_len: usize,
}

impl QuerySpec {
    pub fn new(id: QueryId, parallelism: u32) -> Self {
        QuerySpec { id, parallelism, window: 2.0, multiplier: 0.9, max_path_len: 4 }
    }
}

/// A deployed query: graph plus logic parameters.
#[derive(Clone, Debug)]
pub struct Query {
    pub spec: QuerySpec,
    pub graph_spec: GraphSpec,
    pub graph: DataflowGraph,
    pub params: LogicParams,
}

impl Query {
    /// Stream names read by the source operators with their parallelism.
    pub fn streams(&self) -> Vec<(String, u32)> {
        self.graph
            .operators
            .iter()
            .filter_map(|o| match &o.logic {
                LogicId::Source(s) => Some((s.clone(), o.parallelism)),
                _ => None,
            })
            .collect()
    }
}

pub fn build_query(spec: &QuerySpec) -> Result<Query, WorkloadError> {
    let p = spec.parallelism;
    if p == 0 {
        return Err(WorkloadError::Invalid("parallelism must be at least 1".into()));
    }
    if matches!(spec.id, QueryId::Q8 | QueryId::Q12) && spec.window <= 0.0 {
        return Err(WorkloadError::Invalid("window length must be positive".into()));
    }
    use ChannelKind::*;
    let src = |s: &str| LogicId::Source(s.to_string());
    let graph_spec = match spec.id {
        QueryId::Q1 => GraphSpec::new()
            .operator("bids", p, src("bids"), true)
            .operator("map", p, LogicId::Map, false)
            .operator("sink", p, LogicId::Sink, true)
            .edge("bids", "map", Forward)
            .edge("map", "sink", Forward),
        QueryId::Q3 | QueryId::Q8 => {
            let join = if spec.id == QueryId::Q3 { LogicId::IncrementalJoin } else { LogicId::WindowJoin };
            GraphSpec::new()
                .operator("persons", p, src("persons"), true)
                .operator("auctions", p, src("auctions"), true)
                .operator("join", p, join, true)
                .operator("sink", p, LogicId::Sink, true)
                .edge("persons", "join", Shuffle)
                .edge("auctions", "join", Shuffle)
                .edge("join", "sink", Forward)
        }
        QueryId::Q12 => GraphSpec::new()
            .operator("bids", p, src("bids"), true)
            .operator("count", p, LogicId::WindowCount, true)
            .operator("sink", p, LogicId::Sink, true)
            .edge("bids", "count", Shuffle)
            .edge("count", "sink", Forward),
        QueryId::Reach => GraphSpec::new()
            .operator("links", p, src("links"), true)
            .operator("sources", p, src("sources"), true)
            .operator("join", p, LogicId::ReachJoin, true)
            .operator("select", p, LogicId::ReachSelect, false)
            .operator("project", p, LogicId::ReachProject, false)
            .operator("sink", p, LogicId::Sink, true)
            .edge("links", "join", Shuffle)
            .edge("sources", "join", Shuffle)
            .edge("join", "select", Forward)
            .edge("select", "project", Forward)
            .edge("project", "sink", Forward)
            .edge("project", "join", Feedback),
    };
    with_graph(spec, graph_spec)
}

/// Deploys a custom graph (for instance one read from a graph file) with
/// the logic parameters of `spec`; `spec.id` only labels the result.
pub fn with_graph(spec: &QuerySpec, graph_spec: GraphSpec) -> Result<Query, WorkloadError> {
    let graph = build_graph(&graph_spec)?;
    let params = LogicParams {
        multiplier: spec.multiplier,
        window: ticks(spec.window).max(1) as Ticks,
        max_path_len: spec.max_path_len.max(1),
    };
    Ok(Query { spec: spec.clone(), graph_spec, graph, params })
}

#[cfg(test)]
mod tests;
