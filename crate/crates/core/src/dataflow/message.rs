use serde::{Deserialize, Serialize};

use super::graph::ChannelId;
use super::record::{Record, ENVELOPE_BYTES};
use crate::protocol::cic::CicPiggyback;
use crate::time::Ticks;

/// A routed data message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub channel: ChannelId,
    /// Per-channel sequence number, gapless from 1 in send order.
    pub seq: u64,
    pub send_time: Ticks,
    pub record: Record,
    /// Time the originating source record entered the input log.
    pub source_event_time: Ticks,
    pub piggyback: Option<Box<CicPiggyback>>,
}

impl Message {
    pub fn payload_bytes(&self) -> usize {
        ENVELOPE_BYTES + self.record.size_bytes()
    }

    pub fn piggyback_bytes(&self) -> usize {
        self.piggyback.as_ref().map_or(0, |p| p.size_bytes())
    }

    pub fn total_bytes(&self) -> usize {
        self.payload_bytes() + self.piggyback_bytes()
    }
}

/// Per-channel send sequence counters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqCounters {
    last: Vec<u64>,
}

impl SeqCounters {
    pub fn new(channels: usize) -> Self {
        SeqCounters { last: vec![0; channels] }
    }

    /// Returns the next sequence number for `channel`; the first call
    /// returns 1.
    pub fn next_seq(&mut self, channel: ChannelId) -> u64 {
        self.last[channel] += 1;
        self.last[channel]
    }

    pub fn last(&self, channel: ChannelId) -> u64 {
        self.last[channel]
    }

    /// Rewinds a channel after a restore so numbering continues from `seq`.
    pub fn reset_to(&mut self, channel: ChannelId, seq: u64) {
        self.last[channel] = seq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_channel_starts_at_one() {
        let mut s = SeqCounters::new(2);
        assert_eq!(s.next_seq(0), 1);
    }

    #[test]
    fn counts_up() {
        let mut s = SeqCounters::new(1);
        for _ in 0..5 {
            s.next_seq(0);
        }
        assert_eq!(s.next_seq(0), 6);
    }

    #[test]
    fn channels_are_independent() {
        let mut s = SeqCounters::new(2);
        for _ in 0..3 {
            s.next_seq(0);
        }
        s.next_seq(1);
        assert_eq!(s.next_seq(1), 2);
        assert_eq!(s.last(0), 3);
    }
}
