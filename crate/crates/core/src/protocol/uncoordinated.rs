use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::cic::CicClock;
use super::ProtocolError;
use crate::dataflow::record::INT_BYTES;
use crate::dataflow::{ChannelId, InstanceIdx, Message, StateSnapshot};
use crate::recovery::CheckpointMeta;
use crate::time::Ticks;

/// Highest sequence number per channel.
pub type SeqVector = BTreeMap<ChannelId, u64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Disposition {
    Process,
    Discard,
}

/// Per-instance channel bookkeeping: what was sent and processed on every
/// adjacent channel, and the upstream-backup log of sent messages.
#[derive(Clone, Debug, Default)]
pub struct ChannelLog {
    last_sent: SeqVector,
    last_received: SeqVector,
    send_log: BTreeMap<ChannelId, VecDeque<Message>>,
    logging: bool,
}

impl ChannelLog {
    pub fn new(inputs: &[ChannelId], outputs: &[ChannelId], logging: bool) -> Self {
        ChannelLog {
            last_sent: outputs.iter().map(|&c| (c, 0)).collect(),
            last_received: inputs.iter().map(|&c| (c, 0)).collect(),
            send_log: outputs.iter().map(|&c| (c, VecDeque::new())).collect(),
            logging,
        }
    }

    pub fn last_sent(&self, channel: ChannelId) -> u64 {
        self.last_sent.get(&channel).copied().unwrap_or(0)
    }

    pub fn last_received(&self, channel: ChannelId) -> u64 {
        self.last_received.get(&channel).copied().unwrap_or(0)
    }

    pub fn sent_vector(&self) -> &SeqVector {
        &self.last_sent
    }

    pub fn received_vector(&self) -> &SeqVector {
        &self.last_received
    }

    /// Records a fresh send; the message is appended to the log when
    /// logging is enabled.
    pub fn log_send(&mut self, msg: &Message) -> Result<(), ProtocolError> {
        let last = self.last_sent.entry(msg.channel).or_insert(0);
        if msg.seq != *last + 1 {
            return Err(ProtocolError::SeqGap { channel: msg.channel, expected: *last + 1, got: msg.seq });
        }
        *last = msg.seq;
        if self.logging {
            self.send_log.entry(msg.channel).or_default().push_back(msg.clone());
        }
        Ok(())
    }

    /// Receiver-side duplicate filter. With `dedup` off every message is
    /// processed and the high-water mark only moves forward.
    pub fn dedup_receive(&mut self, channel: ChannelId, seq: u64, dedup: bool) -> Disposition {
        let last = self.last_received.entry(channel).or_insert(0);
        if dedup && seq <= *last {
            return Disposition::Discard;
        }
        *last = (*last).max(seq);
        Disposition::Process
    }

    /// Drops log entries with `seq <= upto`.
    pub fn gc(&mut self, channel: ChannelId, upto: u64) {
        if let Some(log) = self.send_log.get_mut(&channel) {
            while log.front().is_some_and(|m| m.seq <= upto) {
                log.pop_front();
            }
        }
    }

    /// Rewinds the counters to a restored checkpoint and drops log entries
    /// the restored sender has not sent yet.
    pub fn restore(&mut self, sent: &SeqVector, received: &SeqVector) {
        for (c, last) in self.last_sent.iter_mut() {
            *last = sent.get(c).copied().unwrap_or(0);
            if let Some(log) = self.send_log.get_mut(c) {
                while log.back().is_some_and(|m| m.seq > *last) {
                    log.pop_back();
                }
            }
        }
        for (c, last) in self.last_received.iter_mut() {
            *last = received.get(c).copied().unwrap_or(0);
        }
    }

    /// Logged messages with `after < seq <= upto`, in seq order.
    pub fn replay(&self, channel: ChannelId, after: u64, upto: u64) -> Result<Vec<Message>, ProtocolError> {
        if upto <= after {
            return Ok(Vec::new());
        }
        let log = self.send_log.get(&channel);
        let first = log.and_then(|l| l.front()).map_or(u64::MAX, |m| m.seq);
        if first > after + 1 {
            return Err(ProtocolError::LogTruncated { channel, seq: after + 1 });
        }
        let out: Vec<Message> =
            log.into_iter().flatten().filter(|m| m.seq > after && m.seq <= upto).cloned().collect();
        if out.len() as u64 != upto - after {
            return Err(ProtocolError::LogTruncated { channel, seq: upto });
        }
        Ok(out)
    }

    pub fn retained(&self, channel: ChannelId) -> impl Iterator<Item = &Message> {
        self.send_log.get(&channel).into_iter().flatten()
    }

    pub fn retained_len(&self) -> usize {
        self.send_log.values().map(VecDeque::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckpointKind {
    Local,
    Forced,
    Round(u64),
}

impl CheckpointKind {
    pub fn label(&self) -> String {
        match self {
            CheckpointKind::Local => "local".into(),
            CheckpointKind::Forced => "forced".into(),
            CheckpointKind::Round(r) => format!("round:{r}"),
        }
    }
}

/// A checkpoint of one instance. `durable_time` is set once the upload
/// completes.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub owner: InstanceIdx,
    pub index: u64,
    pub kind: CheckpointKind,
    /// Dropped once the checkpoint falls below the retained recovery line.
    pub state: Option<StateSnapshot>,
    pub state_bytes: usize,
    pub last_sent: SeqVector,
    pub last_received: SeqVector,
    pub protocol_meta: Option<CicClock>,
    pub start_time: Ticks,
    pub durable_time: Option<Ticks>,
}

impl Checkpoint {
    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            owner: self.owner,
            index: self.index,
            last_sent: self.last_sent.clone(),
            last_received: self.last_received.clone(),
        }
    }

    /// Size of the metadata record sent to the coordinator: owner and
    /// index, then one (channel, seq) pair per adjacent channel.
    pub fn metadata_bytes(&self) -> usize {
        2 * INT_BYTES + 2 * INT_BYTES * (self.last_sent.len() + self.last_received.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::{Bid, Record};

    fn msg(channel: ChannelId, seq: u64) -> Message {
        Message {
            channel,
            seq,
            send_time: seq,
            record: Record::Bid(Bid { auction: 1, bidder: 2, price: 3, date_time: 0, extra: 0 }),
            source_event_time: 0,
            piggyback: None,
        }
    }

    #[test]
    fn send_log_holds_sent_messages() {
        let mut log = ChannelLog::new(&[], &[0], true);
        for s in 1..=3 {
            log.log_send(&msg(0, s)).unwrap();
        }
        let seqs: Vec<u64> = log.retained(0).map(|m| m.seq).collect();
        assert_eq!(seqs, vec![1, 2, 3]);
        assert_eq!(log.last_sent(0), 3);
    }

    #[test]
    fn seq_gap_is_rejected() {
        let mut log = ChannelLog::new(&[], &[0], true);
        log.log_send(&msg(0, 1)).unwrap();
        assert_eq!(log.log_send(&msg(0, 3)), Err(ProtocolError::SeqGap { channel: 0, expected: 2, got: 3 }));
    }

    #[test]
    fn gc_keeps_entries_above_the_line() {
        let mut log = ChannelLog::new(&[], &[0], true);
        for s in 1..=3 {
            log.log_send(&msg(0, s)).unwrap();
        }
        log.gc(0, 2);
        let seqs: Vec<u64> = log.retained(0).map(|m| m.seq).collect();
        assert_eq!(seqs, vec![3]);
        assert!(matches!(log.replay(0, 1, 3), Err(ProtocolError::LogTruncated { .. })));
        assert_eq!(log.replay(0, 2, 3).unwrap().len(), 1);
    }

    #[test]
    fn dedup_threshold() {
        let mut log = ChannelLog::new(&[7], &[], false);
        log.restore(&SeqVector::new(), &[(7, 5)].into_iter().collect());
        let got: Vec<Disposition> = [4, 5, 6].iter().map(|&s| log.dedup_receive(7, s, true)).collect();
        assert_eq!(got, vec![Disposition::Discard, Disposition::Discard, Disposition::Process]);
        assert_eq!(log.last_received(7), 6);
    }

    #[test]
    fn fresh_instance_processes_first_message() {
        let mut log = ChannelLog::new(&[0], &[], false);
        assert_eq!(log.dedup_receive(0, 1, true), Disposition::Process);
    }

    #[test]
    fn without_dedup_duplicates_are_processed() {
        let mut log = ChannelLog::new(&[0], &[], false);
        log.dedup_receive(0, 3, false);
        assert_eq!(log.dedup_receive(0, 2, false), Disposition::Process);
        assert_eq!(log.last_received(0), 3);
    }

    #[test]
    fn restore_truncates_unsent_tail() {
        let mut log = ChannelLog::new(&[], &[0], true);
        for s in 1..=5 {
            log.log_send(&msg(0, s)).unwrap();
        }
        log.restore(&[(0, 3)].into_iter().collect(), &SeqVector::new());
        assert_eq!(log.retained(0).count(), 3);
        log.log_send(&msg(0, 4)).unwrap();
        assert_eq!(log.retained(0).count(), 4);
    }
}
