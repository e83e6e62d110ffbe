//! Checkpoint graphs, rollback propagation and the oracles that check it.
//!
//! Every instance owns an implicit index-0 checkpoint (empty state, all
//! sequence numbers 0), so a recovery line always exists.

mod fixtures;
mod graph;
mod history;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataflow::{ChannelId, InstanceIdx};
use crate::protocol::uncoordinated::SeqVector;

pub use fixtures::{domino_fixture, walkthrough_fixture};
pub use graph::{build_checkpoint_graph, rollback_propagation, CheckpointGraph, NodeId};
pub use history::{
    brute_force_recovery_line, iterative_recovery_line, random_history, ExecutionHistory, HistoryEvent,
    RandomHistoryLimits,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecoveryError {
    #[error("checkpoint {index} of instance {owner} has no metadata for channel {channel}")]
    MissingMetadata { owner: InstanceIdx, index: u64, channel: ChannelId },
    #[error("rollback of instance {owner} ran below its oldest retained checkpoint")]
    NoConsistentLine { owner: InstanceIdx },
}

/// Channel sequence metadata of one checkpoint, all the graph needs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub owner: InstanceIdx,
    pub index: u64,
    pub last_sent: SeqVector,
    pub last_received: SeqVector,
}

impl CheckpointMeta {
    /// The implicit initial checkpoint of `owner`.
    pub fn initial(owner: InstanceIdx, inputs: &[ChannelId], outputs: &[ChannelId]) -> Self {
        CheckpointMeta {
            owner,
            index: 0,
            last_sent: outputs.iter().map(|&c| (c, 0)).collect(),
            last_received: inputs.iter().map(|&c| (c, 0)).collect(),
        }
    }
}

/// Checkpoint index chosen for every instance.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecoveryLine {
    pub indices: Vec<u64>,
}

impl RecoveryLine {
    pub fn new(indices: Vec<u64>) -> Self {
        RecoveryLine { indices }
    }

    /// True when every component is at least the other's.
    pub fn dominates(&self, other: &RecoveryLine) -> bool {
        self.indices.iter().zip(&other.indices).all(|(a, b)| a >= b)
    }
}

/// Messages one channel must re-deliver after a restore.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelReplay {
    pub channel: ChannelId,
    /// Receiver's restored high-water mark.
    pub after: u64,
    /// Sender's restored last sent seq.
    pub upto: u64,
}

impl ChannelReplay {
    pub fn len(&self) -> u64 {
        self.upto.saturating_sub(self.after)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Replay ranges for every channel given the restored metadata of each
/// instance (`line[i]` is the checkpoint instance `i` restores).
pub fn replay_plan(line: &[&CheckpointMeta], channels: &[(InstanceIdx, InstanceIdx)]) -> Vec<ChannelReplay> {
    channels
        .iter()
        .enumerate()
        .map(|(c, &(from, to))| ChannelReplay {
            channel: c,
            after: line[to].last_received.get(&c).copied().unwrap_or(0),
            upto: line[from].last_sent.get(&c).copied().unwrap_or(0),
        })
        .collect()
}

/// Number of checkpoints strictly newer than the line.
pub fn invalid_count(latest: &[u64], line: &RecoveryLine) -> u64 {
    latest.iter().zip(&line.indices).map(|(l, x)| l.saturating_sub(*x)).sum()
}

/// Convenience map from instance to the line entry.
pub fn line_map(line: &RecoveryLine) -> BTreeMap<InstanceIdx, u64> {
    line.indices.iter().copied().enumerate().collect()
}

#[cfg(test)]
mod tests;
