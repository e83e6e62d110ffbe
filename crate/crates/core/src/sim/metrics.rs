use serde::{Deserialize, Serialize};

use crate::dataflow::InstanceIdx;
use crate::protocol::coordinated::RoundRecord;
use crate::protocol::uncoordinated::CheckpointKind;
use crate::time::Ticks;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointSample {
    pub owner: InstanceIdx,
    pub index: u64,
    pub kind: CheckpointKind,
    pub start: Ticks,
    pub durable: Ticks,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryRecord {
    pub failure_time: Ticks,
    pub detect_time: Ticks,
    pub restart_done: Ticks,
    pub line: Vec<u64>,
    /// Checkpoints newer than the line that could belong to no consistent
    /// line (always 0 under COOR, whose line is the last committed round).
    pub invalid: u64,
    /// All durable checkpoints dropped by the rollback, including those of
    /// an abandoned coordinated round.
    pub discarded: u64,
    pub replayed: u64,
    /// Some instance with durable checkpoints restarted from index 0.
    pub to_initial: bool,
}

impl RecoveryRecord {
    pub fn restart_time(&self) -> Ticks {
        self.restart_done - self.detect_time
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteCounts {
    /// Payload plus envelope of data messages (replays included).
    pub data: u64,
    pub piggyback: u64,
    pub marker: u64,
    /// Coordinator traffic: round triggers, acks, checkpoint metadata.
    pub control: u64,
}

impl ByteCounts {
    pub fn total(&self) -> u64 {
        self.data + self.piggyback + self.marker + self.control
    }
}

/// Raw samples of one run; the harness turns them into reports.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRaw {
    /// (sink completion time, end-to-end latency)
    pub latencies: Vec<(Ticks, Ticks)>,
    /// Source records read per one-unit bucket.
    pub ingested: Vec<u64>,
    /// Source records taken up by their first downstream operator, per
    /// one-unit bucket.
    pub processed: Vec<u64>,
    pub checkpoints: Vec<CheckpointSample>,
    pub rounds: Vec<RoundRecord>,
    pub rounds_started: u64,
    pub skipped_rounds: u64,
    pub abandoned_rounds: u64,
    pub forced_checkpoints: u64,
    pub recoveries: Vec<RecoveryRecord>,
    pub bytes: ByteCounts,
    pub data_messages: u64,
    pub blocked_time: Vec<Ticks>,
    pub replayed_messages: u64,
    pub duplicates_discarded: u64,
    pub max_retained_log: usize,
    pub end_time: Ticks,
    pub events: u64,
}

fn bump(buckets: &mut Vec<u64>, at: Ticks) {
    let b = crate::time::bucket(at) as usize;
    if buckets.len() <= b {
        buckets.resize(b + 1, 0);
    }
    buckets[b] += 1;
}

impl MetricsRaw {
    pub fn record_ingest(&mut self, at: Ticks) {
        bump(&mut self.ingested, at);
    }

    pub fn record_processed(&mut self, at: Ticks) {
        bump(&mut self.processed, at);
    }

    pub fn total_checkpoints(&self) -> u64 {
        self.checkpoints.len() as u64
    }

    pub fn invalid_checkpoints(&self) -> u64 {
        self.recoveries.iter().map(|r| r.invalid).sum()
    }
}
