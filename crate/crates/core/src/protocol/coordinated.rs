use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::dataflow::{ChannelId, InstanceIdx};
use crate::time::Ticks;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    pub start: Ticks,
    /// Time the last durable acknowledgment reached the coordinator.
    pub end: Ticks,
    pub blocked: BTreeMap<InstanceIdx, Ticks>,
}

impl RoundRecord {
    pub fn duration(&self) -> Ticks {
        self.end - self.start
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TriggerOutcome {
    Start(u64),
    Skipped,
}

#[derive(Clone, Debug)]
struct InFlight {
    round: u64,
    start: Ticks,
    acked: BTreeSet<InstanceIdx>,
    blocked: BTreeMap<InstanceIdx, Ticks>,
}

/// Round bookkeeping at the coordinator. At most one round is in flight; a
/// trigger that fires while one is running is skipped and counted.
#[derive(Clone, Debug)]
pub struct Coordinator {
    instances: usize,
    next_round: u64,
    in_flight: Option<InFlight>,
    pub completed: Vec<RoundRecord>,
    pub skipped: u64,
    pub abandoned: u64,
}

impl Coordinator {
    pub fn new(instances: usize) -> Self {
        Coordinator { instances, next_round: 1, in_flight: None, completed: Vec::new(), skipped: 0, abandoned: 0 }
    }

    pub fn next_round(&self) -> u64 {
        self.next_round
    }

    pub fn in_flight(&self) -> Option<u64> {
        self.in_flight.as_ref().map(|r| r.round)
    }

    pub fn last_completed(&self) -> Option<&RoundRecord> {
        self.completed.last()
    }

    pub fn on_trigger(&mut self, now: Ticks) -> TriggerOutcome {
        if self.in_flight.is_some() {
            self.skipped += 1;
            return TriggerOutcome::Skipped;
        }
        let round = self.next_round;
        self.next_round += 1;
        self.in_flight =
            Some(InFlight { round, start: now, acked: BTreeSet::new(), blocked: BTreeMap::new() });
        TriggerOutcome::Start(round)
    }

    /// Registers a durable acknowledgment; returns the record when this ack
    /// completes the round.
    pub fn on_ack(&mut self, instance: InstanceIdx, round: u64, blocked: Ticks, now: Ticks) -> Option<RoundRecord> {
        let flight = self.in_flight.as_mut().filter(|f| f.round == round)?;
        flight.acked.insert(instance);
        flight.blocked.insert(instance, blocked);
        if flight.acked.len() < self.instances {
            return None;
        }
        let f = self.in_flight.take().expect("checked above");
        let record = RoundRecord { round: f.round, start: f.start, end: now, blocked: f.blocked };
        self.completed.push(record.clone());
        Some(record)
    }

    /// Drops the in-flight round after a failure.
    pub fn abandon(&mut self) {
        if self.in_flight.take().is_some() {
            self.abandoned += 1;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignStep {
    /// More markers are outstanding; the channel stays blocked.
    Blocked,
    /// Markers arrived on every input; the snapshot may be taken.
    Aligned,
}

/// Marker alignment at one instance. A channel is blocked from the moment
/// its marker for the current round is consumed until the instance has
/// checkpointed; traffic behind the marker stays queued in FIFO order.
#[derive(Clone, Debug)]
pub struct Alignment {
    instance: InstanceIdx,
    pub expected_round: u64,
    blocked: BTreeSet<ChannelId>,
    blocked_since: Option<Ticks>,
    inputs: usize,
}

impl Alignment {
    pub fn new(instance: InstanceIdx, inputs: usize) -> Self {
        Alignment { instance, expected_round: 1, blocked: BTreeSet::new(), blocked_since: None, inputs }
    }

    pub fn is_blocked(&self, channel: ChannelId) -> bool {
        self.blocked.contains(&channel)
    }

    pub fn is_aligning(&self) -> bool {
        !self.blocked.is_empty()
    }

    pub fn on_marker(&mut self, channel: ChannelId, round: u64, now: Ticks) -> Result<AlignStep, ProtocolError> {
        if round != self.expected_round || self.blocked.contains(&channel) {
            return Err(ProtocolError::StaleMarker { instance: self.instance, expected: self.expected_round, got: round });
        }
        if self.blocked.is_empty() {
            self.blocked_since = Some(now);
        }
        self.blocked.insert(channel);
        Ok(if self.blocked.len() == self.inputs { AlignStep::Aligned } else { AlignStep::Blocked })
    }

    /// Unblocks every channel after the snapshot and returns how long the
    /// first blocked channel waited.
    pub fn finish(&mut self, now: Ticks) -> Ticks {
        self.blocked.clear();
        self.expected_round += 1;
        self.blocked_since.take().map_or(0, |s| now - s)
    }

    /// Discards partial alignment and expects `round` next (recovery).
    pub fn reset(&mut self, round: u64) {
        self.blocked.clear();
        self.blocked_since = None;
        self.expected_round = round;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlapping_trigger_is_skipped() {
        let mut c = Coordinator::new(2);
        assert_eq!(c.on_trigger(0), TriggerOutcome::Start(1));
        assert_eq!(c.on_trigger(5), TriggerOutcome::Skipped);
        assert_eq!(c.skipped, 1);
        assert!(c.on_ack(0, 1, 0, 7).is_none());
        let r = c.on_ack(1, 1, 3, 9).unwrap();
        assert_eq!(r.duration(), 9);
        assert_eq!(c.on_trigger(10), TriggerOutcome::Start(2));
    }

    #[test]
    fn single_instance_completes_after_one_ack() {
        let mut c = Coordinator::new(1);
        c.on_trigger(0);
        assert!(c.on_ack(0, 1, 0, 4).is_some());
    }

    #[test]
    fn abandoned_round_is_not_completed() {
        let mut c = Coordinator::new(2);
        c.on_trigger(0);
        c.on_ack(0, 1, 0, 1);
        c.abandon();
        assert!(c.on_ack(1, 1, 0, 2).is_none());
        assert!(c.last_completed().is_none());
        assert_eq!(c.on_trigger(3), TriggerOutcome::Start(2));
    }

    #[test]
    fn two_input_alignment() {
        let mut a = Alignment::new(0, 2);
        assert_eq!(a.on_marker(10, 1, 5).unwrap(), AlignStep::Blocked);
        assert!(a.is_blocked(10) && !a.is_blocked(11));
        assert_eq!(a.on_marker(11, 1, 8).unwrap(), AlignStep::Aligned);
        assert_eq!(a.finish(9), 4);
        assert!(!a.is_blocked(10));
        assert_eq!(a.expected_round, 2);
    }

    #[test]
    fn single_input_aligns_immediately() {
        let mut a = Alignment::new(0, 1);
        assert_eq!(a.on_marker(3, 1, 5).unwrap(), AlignStep::Aligned);
        assert_eq!(a.finish(5), 0);
    }

    #[test]
    fn wrong_round_is_stale() {
        let mut a = Alignment::new(4, 2);
        assert!(matches!(a.on_marker(0, 2, 0), Err(ProtocolError::StaleMarker { expected: 1, got: 2, .. })));
    }
}
