use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CheckpointMeta, RecoveryLine};
use crate::dataflow::{ChannelId, InstanceIdx};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HistoryEvent {
    Send { channel: ChannelId, seq: u64 },
    /// The receiver processed the message (duplicates discarded by the
    /// receiver never appear).
    Receive { channel: ChannelId, seq: u64 },
    Checkpoint { owner: InstanceIdx, index: u64 },
}

/// Globally ordered sends, receives and checkpoints of one execution.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionHistory {
    pub instances: usize,
    /// `channels[c] = (from, to)`
    pub channels: Vec<(InstanceIdx, InstanceIdx)>,
    pub events: Vec<HistoryEvent>,
}

#[derive(Clone, Copy, Debug)]
struct MessagePos {
    channel: ChannelId,
    send: usize,
    recv: Option<usize>,
}

impl ExecutionHistory {
    pub fn new(instances: usize, channels: Vec<(InstanceIdx, InstanceIdx)>) -> Self {
        ExecutionHistory { instances, channels, events: Vec::new() }
    }

    pub fn owner_of(&self, ev: &HistoryEvent) -> InstanceIdx {
        match *ev {
            HistoryEvent::Send { channel, .. } => self.channels[channel].0,
            HistoryEvent::Receive { channel, .. } => self.channels[channel].1,
            HistoryEvent::Checkpoint { owner, .. } => owner,
        }
    }

    pub fn send(&mut self, channel: ChannelId, seq: u64) {
        self.events.push(HistoryEvent::Send { channel, seq });
    }

    pub fn receive(&mut self, channel: ChannelId, seq: u64) {
        self.events.push(HistoryEvent::Receive { channel, seq });
    }

    pub fn checkpoint(&mut self, owner: InstanceIdx, index: u64) {
        self.events.push(HistoryEvent::Checkpoint { owner, index });
    }

    /// Drops a checkpoint that never became durable.
    pub fn forget_checkpoint(&mut self, owner: InstanceIdx, index: u64) {
        self.events.retain(|ev| *ev != HistoryEvent::Checkpoint { owner, index });
    }

    /// Highest checkpoint index per owner.
    pub fn latest(&self) -> Vec<u64> {
        let mut out = vec![0; self.instances];
        for ev in &self.events {
            if let HistoryEvent::Checkpoint { owner, index } = *ev {
                out[owner] = out[owner].max(index);
            }
        }
        out
    }

    /// Event position of each checkpoint; index 0 is before everything.
    fn checkpoint_positions(&self) -> Vec<Vec<Option<usize>>> {
        let latest = self.latest();
        let mut pos: Vec<Vec<Option<usize>>> = latest.iter().map(|&l| vec![None; l as usize + 1]).collect();
        for (p, ev) in self.events.iter().enumerate() {
            if let HistoryEvent::Checkpoint { owner, index } = *ev {
                pos[owner][index as usize] = Some(p);
            }
        }
        pos
    }

    fn messages(&self) -> Vec<MessagePos> {
        let mut by_key: BTreeMap<(ChannelId, u64), usize> = BTreeMap::new();
        let mut out: Vec<MessagePos> = Vec::new();
        for (p, ev) in self.events.iter().enumerate() {
            match *ev {
                HistoryEvent::Send { channel, seq } => {
                    by_key.insert((channel, seq), out.len());
                    out.push(MessagePos { channel, send: p, recv: None });
                }
                HistoryEvent::Receive { channel, seq } => {
                    if let Some(&m) = by_key.get(&(channel, seq)) {
                        out[m].recv.get_or_insert(p);
                    }
                }
                HistoryEvent::Checkpoint { .. } => {}
            }
        }
        out
    }

    /// Messages that are orphans with respect to `line`: processed before
    /// the receiver's checkpoint but sent after the sender's.
    pub fn orphans(&self, line: &RecoveryLine) -> Vec<(ChannelId, u64)> {
        let cps = self.checkpoint_positions();
        let at = |owner: InstanceIdx, idx: u64| -> Option<usize> { cps[owner].get(idx as usize).copied().flatten() };
        let mut out = Vec::new();
        for m in self.messages() {
            let Some(recv) = m.recv else { continue };
            let (from, to) = self.channels[m.channel];
            let sent_after = match at(from, line.indices[from]) {
                None => true,
                Some(c) => m.send > c,
            };
            let received_before = match at(to, line.indices[to]) {
                None => false,
                Some(c) => recv < c,
            };
            if sent_after && received_before {
                if let HistoryEvent::Send { seq, .. } = self.events[m.send] {
                    out.push((m.channel, seq));
                }
            }
        }
        out
    }

    pub fn is_consistent(&self, line: &RecoveryLine) -> bool {
        self.orphans(line).is_empty()
    }

    /// Channel metadata for every checkpoint, including the implicit
    /// index-0 ones, grouped by owner in ascending index order.
    pub fn checkpoint_metas(&self) -> Vec<Vec<CheckpointMeta>> {
        let mut inputs = vec![Vec::new(); self.instances];
        let mut outputs = vec![Vec::new(); self.instances];
        for (c, &(f, t)) in self.channels.iter().enumerate() {
            outputs[f].push(c);
            inputs[t].push(c);
        }
        let mut metas: Vec<Vec<CheckpointMeta>> =
            (0..self.instances).map(|o| vec![CheckpointMeta::initial(o, &inputs[o], &outputs[o])]).collect();
        let mut sent = vec![0u64; self.channels.len()];
        let mut received = vec![0u64; self.channels.len()];
        for ev in &self.events {
            match *ev {
                HistoryEvent::Send { channel, seq } => sent[channel] = sent[channel].max(seq),
                HistoryEvent::Receive { channel, seq } => received[channel] = received[channel].max(seq),
                HistoryEvent::Checkpoint { owner, index } => metas[owner].push(CheckpointMeta {
                    owner,
                    index,
                    last_sent: outputs[owner].iter().map(|&c| (c, sent[c])).collect(),
                    last_received: inputs[owner].iter().map(|&c| (c, received[c])).collect(),
                }),
            }
        }
        metas
    }

    /// Removes everything each instance did after its checkpoint in `line`,
    /// the view of the execution that survives a rollback to `line`.
    pub fn truncate_to(&mut self, line: &RecoveryLine) {
        let cps = self.checkpoint_positions();
        let cut: Vec<Option<usize>> =
            (0..self.instances).map(|o| cps[o].get(line.indices[o] as usize).copied().flatten()).collect();
        let events = std::mem::take(&mut self.events);
        self.events = events
            .into_iter()
            .enumerate()
            .filter(|(p, ev)| match cut[self.owner_of(ev)] {
                None => false,
                Some(c) => *p <= c,
            })
            .map(|(_, ev)| ev)
            .collect();
    }

    /// Stored checkpoints (index ≥ 1) that lie on a Z-cycle.
    ///
    /// A Z-path is a message sequence where each message is sent by the
    /// receiver of its predecessor in the same or a later checkpoint
    /// interval than the one the predecessor was received in. Checkpoint
    /// `x` of `p` is on a Z-cycle when a Z-path starts with a send by `p`
    /// in interval `>= x` and ends with a receive at `p` in interval `< x`.
    ///
    /// Searches over intervals rather than messages: node `(q, y)` means
    /// "q may send in interval y or later", it reaches `(q, y + 1)`, and a
    /// message sent in `(q, s)` and received in `(r, z)` links them.
    pub fn z_cycle_checkpoints(&self) -> BTreeSet<(InstanceIdx, u64)> {
        let (sends, recvs) = self.message_intervals();
        let mut intervals = vec![1u64; self.instances];
        for ev in &self.events {
            if let HistoryEvent::Checkpoint { owner, .. } = *ev {
                intervals[owner] += 1;
            }
        }
        let base: Vec<usize> = intervals
            .iter()
            .scan(0usize, |acc, &k| {
                let b = *acc;
                *acc += k as usize;
                Some(b)
            })
            .collect();
        let node = |q: InstanceIdx, y: u64| base[q] + y as usize;
        let total = base.last().map_or(0, |b| b + *intervals.last().unwrap_or(&0) as usize);
        let mut edges: Vec<BTreeSet<(InstanceIdx, u64)>> = vec![BTreeSet::new(); total];
        for (m, &(q, s)) in sends.iter().enumerate() {
            if let Some(&(r, z)) = recvs.get(&m) {
                edges[node(q, s)].insert((r, z));
            }
        }
        let mut out = BTreeSet::new();
        for p in 0..self.instances {
            for x in 1..intervals[p] {
                // does (p, x) reach a receive at p in an interval before x?
                let mut seen = vec![false; total];
                let mut stack = vec![(p, x)];
                seen[node(p, x)] = true;
                let mut hit = false;
                while let Some((q, y)) = stack.pop() {
                    let mut next: Vec<(InstanceIdx, u64)> = edges[node(q, y)].iter().copied().collect();
                    if y + 1 < intervals[q] {
                        next.push((q, y + 1));
                    }
                    for (r, z) in next {
                        if r == p && z < x {
                            hit = true;
                            break;
                        }
                        if !seen[node(r, z)] {
                            seen[node(r, z)] = true;
                            stack.push((r, z));
                        }
                    }
                    if hit {
                        break;
                    }
                }
                if hit {
                    out.insert((p, x));
                }
            }
        }
        out
    }

    /// Per message (in send order), the sender's interval at the send and,
    /// if processed, the receiver's interval at the first receive.
    #[allow(clippy::type_complexity)]
    fn message_intervals(&self) -> (Vec<(InstanceIdx, u64)>, BTreeMap<usize, (InstanceIdx, u64)>) {
        let mut interval = vec![0u64; self.instances];
        let mut send_iv: Vec<(InstanceIdx, u64)> = Vec::new();
        let mut recv_iv: BTreeMap<usize, (InstanceIdx, u64)> = BTreeMap::new();
        let mut by_key: BTreeMap<(ChannelId, u64), usize> = BTreeMap::new();
        for ev in &self.events {
            match *ev {
                HistoryEvent::Send { channel, seq } => {
                    let from = self.channels[channel].0;
                    by_key.insert((channel, seq), send_iv.len());
                    send_iv.push((from, interval[from]));
                }
                HistoryEvent::Receive { channel, seq } => {
                    let to = self.channels[channel].1;
                    if let Some(&m) = by_key.get(&(channel, seq)) {
                        recv_iv.entry(m).or_insert((to, interval[to]));
                    }
                }
                HistoryEvent::Checkpoint { owner, .. } => interval[owner] += 1,
            }
        }
        (send_iv, recv_iv)
    }

    /// Message-level breadth-first search straight from the definition;
    /// reference for [`Self::z_cycle_checkpoints`].
    #[cfg(test)]
    pub(crate) fn z_cycle_checkpoints_by_messages(&self) -> BTreeSet<(InstanceIdx, u64)> {
        let (send_iv, recv_iv) = self.message_intervals();
        let n = send_iv.len();
        let mut by_sender: Vec<Vec<usize>> = vec![Vec::new(); self.instances];
        for (m, &(s, _)) in send_iv.iter().enumerate() {
            by_sender[s].push(m);
        }
        let mut out = BTreeSet::new();
        for start in 0..n {
            let (p, x_hi) = send_iv[start];
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            let mut lowest_back: Option<u64> = None;
            while let Some(m) = queue.pop_front() {
                let Some(&(r, riv)) = recv_iv.get(&m) else { continue };
                if r == p {
                    lowest_back = Some(lowest_back.map_or(riv, |l: u64| l.min(riv)));
                }
                for &next in &by_sender[r] {
                    if !seen[next] && send_iv[next].1 >= riv {
                        seen[next] = true;
                        queue.push_back(next);
                    }
                }
            }
            if let Some(low) = lowest_back {
                for x in (low + 1)..=x_hi {
                    out.insert((p, x));
                }
            }
        }
        out
    }
}

/// Largest consistent line, by enumerating every combination of
/// checkpoint indices and checking orphans directly against the history.
/// Falls back to [`iterative_recovery_line`] when the product of chain
/// lengths exceeds one million.
pub fn brute_force_recovery_line(h: &ExecutionHistory) -> RecoveryLine {
    let latest = h.latest();
    let combos: f64 = latest.iter().map(|&l| (l + 1) as f64).product();
    if combos > 1.0e6 {
        return iterative_recovery_line(h);
    }
    let mut best = vec![0u64; h.instances];
    let mut cur = vec![0u64; h.instances];
    loop {
        let line = RecoveryLine::new(cur.clone());
        if h.is_consistent(&line) {
            for (b, c) in best.iter_mut().zip(&cur) {
                *b = (*b).max(*c);
            }
        }
        let mut i = 0;
        loop {
            if i == cur.len() {
                return RecoveryLine::new(best);
            }
            if cur[i] < latest[i] {
                cur[i] += 1;
                break;
            }
            cur[i] = 0;
            i += 1;
        }
    }
}

/// Orphan elimination: start from the latest checkpoints and, while an
/// orphan exists, roll its receiver back to the last checkpoint taken
/// before it processed the orphan.
pub fn iterative_recovery_line(h: &ExecutionHistory) -> RecoveryLine {
    let cps = h.checkpoint_positions();
    let mut line = RecoveryLine::new(h.latest());
    let msgs = h.messages();
    loop {
        let mut changed = false;
        for m in &msgs {
            let Some(recv) = m.recv else { continue };
            let (from, to) = h.channels[m.channel];
            let sent_after = cps[from][line.indices[from] as usize].is_none_or(|c| m.send > c);
            let received_before = cps[to][line.indices[to] as usize].is_some_and(|c| recv < c);
            if sent_after && received_before {
                let mut idx = line.indices[to];
                while cps[to][idx as usize].is_some_and(|c| c > recv) {
                    idx -= 1;
                }
                line.indices[to] = idx;
                changed = true;
            }
        }
        if !changed {
            return line;
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RandomHistoryLimits {
    pub max_instances: usize,
    pub max_checkpoints: u64,
    pub max_messages: usize,
}

impl Default for RandomHistoryLimits {
    fn default() -> Self {
        RandomHistoryLimits { max_instances: 4, max_checkpoints: 5, max_messages: 30 }
    }
}

/// A random execution over a fully connected set of 2..=max instances with
/// FIFO channels. Some messages may remain in flight at the end.
pub fn random_history<R: Rng>(rng: &mut R, limits: RandomHistoryLimits) -> ExecutionHistory {
    let n = rng.gen_range(2..=limits.max_instances.max(2));
    let channels: Vec<(usize, usize)> =
        (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    let mut h = ExecutionHistory::new(n, channels.clone());
    let mut seq = vec![0u64; channels.len()];
    let mut pending: Vec<VecDeque<u64>> = vec![VecDeque::new(); channels.len()];
    let mut ckpts = vec![0u64; n];
    let msg_budget = rng.gen_range(0..=limits.max_messages);
    let mut sent = 0;
    loop {
        let can_send = sent < msg_budget;
        let can_recv = pending.iter().any(|q| !q.is_empty());
        let can_ckpt = ckpts.iter().any(|&c| c < limits.max_checkpoints);
        if !can_send && !can_ckpt {
            break;
        }
        match rng.gen_range(0..10) {
            0..=3 if can_send => {
                let c = rng.gen_range(0..channels.len());
                seq[c] += 1;
                h.send(c, seq[c]);
                pending[c].push_back(seq[c]);
                sent += 1;
            }
            4..=6 if can_recv => {
                let ready: Vec<usize> = (0..channels.len()).filter(|&c| !pending[c].is_empty()).collect();
                let c = ready[rng.gen_range(0..ready.len())];
                let s = pending[c].pop_front().expect("non-empty");
                h.receive(c, s);
            }
            7..=9 if can_ckpt => {
                let o = rng.gen_range(0..n);
                if ckpts[o] < limits.max_checkpoints {
                    ckpts[o] += 1;
                    h.checkpoint(o, ckpts[o]);
                }
            }
            _ => {
                if !can_send && !can_recv && rng.gen_bool(0.3) {
                    // Nothing but checkpoints left; stop early sometimes.
                    break;
                }
            }
        }
    }
    h
}
