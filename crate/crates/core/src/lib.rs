//! Deterministic discrete-event simulation of streaming dataflows under
//! coordinated, uncoordinated and communication-induced checkpointing.
//!
//! The crate is organised bottom-up:
//!
//! * [`dataflow`] — graph model, channels, messages, keyed operator state.
//! * [`workloads`] — NexMark-style query analogs, the cyclic reachability
//!   query and seeded input generators.
//! * [`protocol`] — per-protocol state machines (marker alignment, channel
//!   logs with deduplication, the HMNR clock bundle).
//! * [`recovery`] — checkpoint graphs, rollback propagation, brute-force
//!   oracles and replay planning.
//! * [`sim`] — the event kernel that drives everything above.
//! * [`batch`] — order-preserving batch execution of independent worlds,
//!   parallel when the `parallel` feature is enabled.

pub mod batch;
pub mod dataflow;
pub mod protocol;
pub mod recovery;
pub mod sim;
pub mod time;
pub mod workloads;

pub use dataflow::{
    build_graph, ChannelId, ChannelKind, DataflowGraph, GraphError, GraphSpec, InstanceIdx,
    OperatorInstanceId, OperatorState, Record,
};
pub use sim::{run, MetricsRaw, Protocol, RunConfig, RunOutput, SimError};
pub use time::{ticks, units, Ticks, TICKS_PER_UNIT};
