//! Communication-induced checkpointing (HMNR family).
//!
//! Every instance keeps a Lamport clock, a checkpoint-count vector and the
//! `sent_to` / `taken` / `greater` boolean vectors. The clock, `ckpt`,
//! `taken` and `greater` travel on every data message. A receiver forces a
//! checkpoint before processing a message when either
//!
//! * the sender's clock is ahead of ours and we sent, in the current
//!   interval, to some instance whose clock the sender believes is behind
//!   its own (clock-inversion rule), or
//! * the sender has seen a causal path that started in our current interval
//!   and passed through a checkpoint (Z-path rule).
//!
//! `ckpt` entries for instances we have no causal knowledge of are `None`;
//! `None` orders below every count, so element-wise max merges still work.
//! `greater[j]` is derived from a local lower bound on `j`'s clock.

use serde::{Deserialize, Serialize};

use crate::dataflow::record::INT_BYTES;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CicPiggyback {
    pub lc: u64,
    pub ckpt: Vec<Option<u64>>,
    pub taken: Vec<bool>,
    pub greater: Vec<bool>,
}

/// Bytes a piggyback occupies for `n` instances: the clock, one integer per
/// `ckpt` entry and one bit per entry of each boolean vector.
pub fn piggyback_bytes(n: usize) -> usize {
    INT_BYTES + n * INT_BYTES + 2 * n.div_ceil(8)
}

impl CicPiggyback {
    pub fn size_bytes(&self) -> usize {
        piggyback_bytes(self.ckpt.len())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForceDecision {
    /// Sent to the sender this interval and the sender is ahead (or saw a
    /// Z-path back to us).
    pub direct_rule: bool,
    /// Sent to some `k` this interval and the sender's clock exceeds what
    /// it knows about `k`.
    pub clock_rule: bool,
    /// A Z-path from our current interval has come back to it.
    pub zpath_rule: bool,
}

impl ForceDecision {
    /// Checkpoints beyond the minimum are always safe, so any rule forces.
    pub fn force(&self) -> bool {
        self.direct_rule || self.clock_rule || self.zpath_rule
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CicClock {
    pub me: usize,
    pub lc: u64,
    pub ckpt: Vec<Option<u64>>,
    pub sent_to: Vec<bool>,
    pub taken: Vec<bool>,
    pub greater: Vec<bool>,
    /// Lower bound on every other instance's clock; never piggybacked.
    pub known_lc: Vec<u64>,
}

impl CicClock {
    pub fn new(me: usize, n: usize) -> Self {
        let mut ckpt = vec![None; n];
        ckpt[me] = Some(0);
        let mut clock = CicClock {
            me,
            lc: 1,
            ckpt,
            sent_to: vec![false; n],
            taken: vec![false; n],
            greater: vec![false; n],
            known_lc: vec![0; n],
        };
        clock.refresh_greater();
        clock
    }

    pub fn len(&self) -> usize {
        self.ckpt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ckpt.is_empty()
    }

    /// Own checkpoint index.
    pub fn index(&self) -> u64 {
        self.ckpt[self.me].unwrap_or(0)
    }

    fn refresh_greater(&mut self) {
        self.known_lc[self.me] = self.lc;
        for j in 0..self.len() {
            self.greater[j] = j != self.me && self.lc > self.known_lc[j];
        }
    }

    /// Marks `target` as sent-to and returns the piggyback to attach.
    pub fn on_send(&mut self, target: usize) -> CicPiggyback {
        self.sent_to[target] = true;
        CicPiggyback { lc: self.lc, ckpt: self.ckpt.clone(), taken: self.taken.clone(), greater: self.greater.clone() }
    }

    /// Decides whether a checkpoint must be taken before processing a
    /// message carrying `pb`.
    pub fn should_force(&self, sender: usize, pb: &CicPiggyback) -> ForceDecision {
        let direct_rule = self.sent_to[sender] && (pb.lc > self.lc || pb.taken[self.me]);
        let clock_rule = pb.lc > self.lc && (0..self.len()).any(|k| self.sent_to[k] && pb.greater[k]);
        let zpath_rule = pb.ckpt[self.me] == self.ckpt[self.me] && pb.taken[self.me] && self.sent_to.iter().any(|&s| s);
        ForceDecision { direct_rule, clock_rule, zpath_rule }
    }

    /// Clock updates for a new (local or forced) checkpoint.
    pub fn on_checkpoint(&mut self) {
        self.lc += 1;
        self.ckpt[self.me] = Some(self.index() + 1);
        self.sent_to.iter_mut().for_each(|s| *s = false);
        for k in 0..self.len() {
            self.taken[k] = k != self.me && self.ckpt[k].is_some();
        }
        self.refresh_greater();
    }

    /// Merges the sender's piggyback after the force decision has been
    /// acted on.
    pub fn merge(&mut self, sender: usize, pb: &CicPiggyback) {
        self.known_lc[sender] = self.known_lc[sender].max(pb.lc);
        for k in 0..self.len() {
            if k != self.me && k != sender && !pb.greater[k] {
                // The sender knows k's clock is at least its own.
                self.known_lc[k] = self.known_lc[k].max(pb.lc);
            }
        }
        self.lc = self.lc.max(pb.lc);
        for k in 0..self.len() {
            if k == self.me {
                continue;
            }
            if pb.ckpt[k] > self.ckpt[k] {
                self.ckpt[k] = pb.ckpt[k];
                self.taken[k] = pb.taken[k];
            } else if pb.ckpt[k] == self.ckpt[k] {
                self.taken[k] |= pb.taken[k];
            }
        }
        self.refresh_greater();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn piggyback_size_for_forty_instances() {
        assert_eq!(piggyback_bytes(40), 8 + 320 + 5 + 5);
        assert_eq!(piggyback_bytes(12), 8 + 96 + 2 + 2);
    }

    #[test]
    fn first_send_flips_one_bit_and_is_idempotent() {
        let mut c = CicClock::new(0, 4);
        c.on_send(2);
        assert_eq!(c.sent_to, vec![false, false, true, false]);
        c.on_send(2);
        assert_eq!(c.sent_to.iter().filter(|&&b| b).count(), 1);
    }

    #[test]
    fn never_forced_without_sends_in_interval() {
        let c = CicClock::new(0, 3);
        let mut sender = CicClock::new(1, 3);
        for _ in 0..7 {
            sender.on_checkpoint();
        }
        let pb = sender.on_send(0);
        assert!(pb.lc > c.lc);
        assert!(!c.should_force(1, &pb).force());
    }

    #[test]
    fn clock_ahead_after_send_forces() {
        // 0 sent to 2 in its current interval, then hears from 1 whose
        // clock is ahead of anything 1 knows about 2.
        let mut c = CicClock::new(0, 3);
        c.lc = 4;
        c.on_send(2);
        let mut sender = CicClock::new(1, 3);
        sender.lc = 9;
        sender.refresh_greater();
        let pb = sender.on_send(0);
        let d = c.should_force(1, &pb);
        assert!(d.clock_rule && d.force());
        c.on_checkpoint();
        c.merge(1, &pb);
        assert!(c.lc >= 9);
    }

    #[test]
    fn sent_to_sender_with_larger_clock_forces() {
        let mut c = CicClock::new(0, 2);
        c.lc = 4;
        c.on_send(1);
        let mut sender = CicClock::new(1, 2);
        sender.lc = 9;
        let pb = sender.on_send(0);
        let d = c.should_force(1, &pb);
        assert!(d.direct_rule && d.force());
        c.on_checkpoint();
        c.merge(1, &pb);
        assert!(c.lc >= 9);
    }

    #[test]
    fn zpath_back_into_current_interval_forces() {
        // 0 sends to 1, 1 checkpoints, 1 sends back: the checkpoint of 1
        // would otherwise sit on a Z-cycle.
        let mut a = CicClock::new(0, 2);
        let mut b = CicClock::new(1, 2);
        let m1 = a.on_send(1);
        assert!(!b.should_force(0, &m1).force());
        b.merge(0, &m1);
        b.on_checkpoint();
        let m2 = b.on_send(0);
        assert!(a.should_force(1, &m2).force());
    }

    #[test]
    fn checkpoint_resets_sent_to_and_advances() {
        let mut c = CicClock::new(1, 3);
        c.on_send(0);
        c.on_send(2);
        c.on_checkpoint();
        assert!(c.sent_to.iter().all(|s| !s));
        assert_eq!(c.index(), 1);
        assert_eq!(c.lc, 2);
        c.on_checkpoint();
        assert_eq!(c.index(), 2);
        assert_eq!(c.lc, 3);
    }

    #[test]
    fn merge_is_monotone() {
        let mut a = CicClock::new(0, 3);
        let mut b = CicClock::new(1, 3);
        b.on_checkpoint();
        b.on_checkpoint();
        let pb = b.on_send(0);
        let (lc, ckpt) = (a.lc, a.ckpt.clone());
        a.merge(1, &pb);
        assert!(a.lc >= lc);
        assert!(a.ckpt.iter().zip(&ckpt).all(|(n, o)| n >= o));
        assert_eq!(a.ckpt[1], Some(2));
    }
}
