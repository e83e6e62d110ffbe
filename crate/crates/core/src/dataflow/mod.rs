//! Dataflow graph model, messages and keyed operator state.

mod graph;
mod message;
pub mod record;
mod spec_file;
mod state;

pub use graph::{
    build_graph, partition_of, Channel, ChannelId, ChannelKind, DataflowGraph, Edge, EdgeSpec, GraphError, GraphSpec,
    InstanceIdx, InstanceInfo, LogicId, OperatorInstanceId, OperatorSpec, DEFAULT_BANDWIDTH, DEFAULT_LATENCY,
};
pub use message::{Message, SeqCounters};
pub use record::{Auction, Bid, Person, Record};
pub use spec_file::{parse_graph_spec, write_graph_spec, GRAPH_HEADER};
pub use state::{OperatorState, StateKey, StateSnapshot, Value};
