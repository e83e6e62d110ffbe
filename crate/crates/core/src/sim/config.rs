use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::dataflow::{DataflowGraph, LogicId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Coordinated aligned checkpointing.
    Coor,
    /// Uncoordinated checkpointing with upstream backup.
    Unc,
    /// Communication-induced checkpointing.
    Cic,
    /// No checkpoints; recovery restarts from the beginning.
    None,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Coor, Protocol::Unc, Protocol::Cic, Protocol::None];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Coor => "coor",
            Protocol::Unc => "unc",
            Protocol::Cic => "cic",
            Protocol::None => "none",
        }
    }

    /// Whether senders keep upstream-backup logs and receivers deduplicate.
    pub fn logs_messages(self) -> bool {
        matches!(self, Protocol::Unc | Protocol::Cic)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "coor" | "coordinated" => Ok(Protocol::Coor),
            "unc" | "uncoordinated" => Ok(Protocol::Unc),
            "cic" => Ok(Protocol::Cic),
            "none" => Ok(Protocol::None),
            _ => Err(SimError::ConfigInvalid(format!("unknown protocol `{s}`"))),
        }
    }
}

/// Which logged messages a sender re-sends after a restore.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayPolicy {
    /// Only messages the restored receiver has not processed.
    #[default]
    Exact,
    /// Everything still retained in the log; the receiver's duplicate
    /// filter is what keeps processing exactly-once.
    RetainedLog,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSpec {
    /// Time units.
    pub time: f64,
    pub worker: u32,
}

/// Simulated costs, all in time units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub source_service: f64,
    pub map_service: f64,
    pub join_service: f64,
    pub window_service: f64,
    pub sink_service: f64,
    pub reach_service: f64,
    /// Serialization cost per byte read or written by an operator.
    pub serde_time_per_byte: f64,
    /// Extra sender cost per byte appended to the upstream-backup log.
    pub log_time_per_byte: f64,
    pub snapshot_time_per_byte: f64,
    pub restore_time_per_byte: f64,
    pub replay_prepare_time_per_message: f64,
    /// Fixed latency of a durable-store write or read.
    pub store_latency: f64,
    pub upload_time_per_byte: f64,
    /// One-way latency of coordinator control messages.
    pub control_latency: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            source_service: 0.0002,
            map_service: 0.0005,
            join_service: 0.001,
            window_service: 0.001,
            sink_service: 0.0002,
            reach_service: 0.0005,
            serde_time_per_byte: 1.0e-6,
            log_time_per_byte: 1.0e-7,
            snapshot_time_per_byte: 1.0e-7,
            restore_time_per_byte: 1.0e-7,
            replay_prepare_time_per_message: 2.0e-5,
            store_latency: 0.001,
            upload_time_per_byte: 1.0e-8,
            control_latency: 0.0005,
        }
    }
}

impl CostModel {
    pub fn service_time(&self, logic: &LogicId) -> f64 {
        match logic {
            LogicId::Source(_) => self.source_service,
            LogicId::Map => self.map_service,
            LogicId::IncrementalJoin | LogicId::WindowJoin => self.join_service,
            LogicId::WindowCount => self.window_service,
            LogicId::ReachJoin | LogicId::ReachSelect | LogicId::ReachProject | LogicId::ReachStep => self.reach_service,
            LogicId::Sink => self.sink_service,
        }
    }

    /// Multiplies every per-record service time by `factor`.
    pub fn scale_service(&mut self, factor: f64) {
        for s in [
            &mut self.source_service,
            &mut self.map_service,
            &mut self.join_service,
            &mut self.window_service,
            &mut self.sink_service,
            &mut self.reach_service,
        ] {
            *s *= factor;
        }
    }

    fn values(&self) -> [f64; 14] {
        [
            self.source_service,
            self.map_service,
            self.join_service,
            self.window_service,
            self.sink_service,
            self.reach_service,
            self.serde_time_per_byte,
            self.log_time_per_byte,
            self.snapshot_time_per_byte,
            self.restore_time_per_byte,
            self.replay_prepare_time_per_message,
            self.store_latency,
            self.upload_time_per_byte,
            self.control_latency,
        ]
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SimError> {
        if self.values().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SimError::ConfigInvalid("cost model values must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub protocol: Protocol,
    /// Checkpoint interval in time units (round interval under COOR).
    pub interval: f64,
    /// Input, triggers and failures live in `[0, horizon]`.
    pub horizon: f64,
    pub seed: u64,
    pub failures: Vec<FailureSpec>,
    pub cost: CostModel,
    pub detection_latency: f64,
    /// Data messages a channel may hold (in flight plus queued).
    pub queue_capacity: usize,
    pub dedup: bool,
    pub replay: ReplayPolicy,
    /// Keep running after the horizon until every queue is empty.
    pub drain: bool,
    /// Send-log garbage collection period; defaults to the interval.
    pub gc_interval: Option<f64>,
    pub marker_bytes: usize,
    /// Keep trace lines in memory (the hash is always computed).
    pub record_trace: bool,
    /// Keep the live send/receive/checkpoint history.
    pub record_history: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            protocol: Protocol::Unc,
            interval: 1.0,
            horizon: 10.0,
            seed: 1,
            failures: Vec::new(),
            cost: CostModel::default(),
            detection_latency: 0.0,
            queue_capacity: 1000,
            dedup: true,
            replay: ReplayPolicy::Exact,
            drain: true,
            gc_interval: None,
            marker_bytes: 16,
            record_trace: false,
            record_history: false,
        }
    }
}

impl RunConfig {
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self, graph: &DataflowGraph) -> Result<(), SimError> {
        if self.protocol == Protocol::Coor && graph.has_feedback() {
            return Err(SimError::CyclicTopologyUnsupported);
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::ConfigInvalid("horizon must be positive".into()));
        }
        if self.protocol != Protocol::None && !(self.interval > 0.0 && self.interval.is_finite()) {
            return Err(SimError::ConfigInvalid("checkpoint interval must be positive".into()));
        }
        if self.gc_interval.is_some_and(|g| !(g > 0.0)) {
            return Err(SimError::ConfigInvalid("gc interval must be positive".into()));
        }
        if self.queue_capacity == 0 {
            return Err(SimError::ConfigInvalid("queue capacity must be at least 1".into()));
        }
        if !(self.detection_latency >= 0.0) {
            return Err(SimError::ConfigInvalid("detection latency must be nonnegative".into()));
        }
        for f in &self.failures {
            if !(0.0..=self.horizon).contains(&f.time) {
                return Err(SimError::ConfigInvalid(format!("failure at {} outside the horizon", f.time)));
            }
            if f.worker >= graph.worker_count() {
                return Err(SimError::UnknownWorker(f.worker));
            }
        }
        self.cost.validate()
    }
}
