//! Event kernel: runs a dataflow graph over a source log under one
//! checkpointing protocol, with failures, recovery and replay.

mod config;
mod metrics;
mod store;
mod trace;
mod world;

#[cfg(test)]
mod tests;

use thiserror::Error;

pub use config::{CostModel, FailureSpec, Protocol, ReplayPolicy, RunConfig};
pub use metrics::{ByteCounts, CheckpointSample, MetricsRaw, RecoveryRecord};
pub use store::DurableStore;
pub use trace::{hash_lines, parse_trace, write_trace, ParsedTrace, Trace, TraceLine, TraceParseError, TRACE_HEADER};

use crate::dataflow::{DataflowGraph, OperatorState};
use crate::protocol::ProtocolError;
use crate::recovery::{ExecutionHistory, RecoveryError};
use crate::workloads::{LogicParams, SourceLog};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("the protocol does not support cyclic topologies")]
    CyclicTopologyUnsupported,
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("failure names unknown worker {0}")]
    UnknownWorker(u32),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace_hash: u64,
    pub trace_events: u64,
    /// Present when `record_trace` was set.
    pub trace: Option<Vec<String>>,
    pub raw: MetricsRaw,
    pub final_states: Vec<OperatorState>,
    /// Present when `record_history` was set.
    pub history: Option<ExecutionHistory>,
}

/// Runs one simulation. Identical inputs give identical outputs, trace
/// hash included.
pub fn run(
    graph: &DataflowGraph,
    params: &LogicParams,
    sources: &SourceLog,
    cfg: &RunConfig,
) -> Result<RunOutput, SimError> {
    cfg.validate(graph)?;
    let mut world = world::World::new(graph, params, sources, cfg);
    world.start();
    world.run_loop()?;
    Ok(world.finish())
}
