use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Protocol, ReplayPolicy, RunConfig};
use super::metrics::{CheckpointSample, MetricsRaw, RecoveryRecord};
use super::store::DurableStore;
use super::trace::Trace;
use super::{RunOutput, SimError};
use crate::dataflow::record::ENVELOPE_BYTES;
use crate::dataflow::{
    partition_of, ChannelId, ChannelKind, DataflowGraph, InstanceIdx, LogicId, Message, OperatorState, Record,
    SeqCounters,
};
use crate::protocol::cic::{piggyback_bytes, CicClock};
use crate::protocol::coordinated::{AlignStep, Alignment, Coordinator, TriggerOutcome};
use crate::protocol::uncoordinated::{Checkpoint, CheckpointKind, ChannelLog};
use crate::protocol::ProtocolError;
use crate::recovery::{
    build_checkpoint_graph, replay_plan, rollback_propagation, ChannelReplay, CheckpointMeta, ExecutionHistory,
    RecoveryLine,
};
use crate::time::{ticks, Ticks};
use crate::workloads::{apply, route, LogicParams, Route, SourceLog};

/// Size of a coordinator trigger or acknowledgment.
const CONTROL_BYTES: usize = 16;

#[derive(Clone, Debug)]
enum Item {
    Data(Message),
    Marker(u64),
}

#[derive(Clone, Debug)]
enum Ev {
    SourceWake(InstanceIdx),
    Deliver { channel: ChannelId, item: Item },
    ProcessDone(InstanceIdx),
    CopyDone(InstanceIdx),
    Durable { inst: InstanceIdx, index: u64 },
    Trigger { inst: InstanceIdx, gen: u64 },
    RoundTrigger,
    RoundStart { inst: InstanceIdx, round: u64 },
    Ack { inst: InstanceIdx, round: u64, blocked: Ticks },
    Gc,
    Fail(u32),
    Detect,
    RestartDone,
}

struct Scheduled {
    time: Ticks,
    tiebreak: u64,
    /// `None` for events that survive failures (schedules, failures).
    epoch: Option<u64>,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.tiebreak) == (other.time, other.tiebreak)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.tiebreak).cmp(&(other.time, other.tiebreak))
    }
}

#[derive(Clone, Debug)]
enum Out {
    Fresh { channel: ChannelId, record: Record, source_time: Ticks },
    Replay(Message),
}

impl Out {
    fn channel(&self) -> ChannelId {
        match self {
            Out::Fresh { channel, .. } => *channel,
            Out::Replay(m) => m.channel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Busy {
    Idle,
    Processing,
    Copying,
}

struct Inst {
    op: usize,
    logic: LogicId,
    /// Stream and partition for source instances.
    source: Option<(String, u32)>,
    inputs: Vec<ChannelId>,
    outputs: Vec<ChannelId>,
    slot_of: BTreeMap<ChannelId, u32>,
    queues: BTreeMap<ChannelId, VecDeque<(Ticks, u64, Item)>>,
    state: OperatorState,
    log: ChannelLog,
    seqs: SeqCounters,
    clock: Option<CicClock>,
    align: Alignment,
    busy: Busy,
    completing: Vec<Out>,
    sink_times: Vec<Ticks>,
    pending_out: VecDeque<Out>,
    snapshot_request: Option<CheckpointKind>,
    copying: Option<(u64, CheckpointKind)>,
    after_copy: Option<Message>,
    next_index: u64,
    upload_free_at: Ticks,
    trigger_gen: u64,
    wake_at: Option<Ticks>,
    round_blocked: Ticks,
    initial: CheckpointMeta,
}

#[derive(Clone, Copy, Debug, Default)]
struct ChanRt {
    free_at: Ticks,
    reserved: usize,
    waiter: Option<InstanceIdx>,
}

struct PendingRecovery {
    failure_time: Ticks,
    detect_time: Ticks,
    line: RecoveryLine,
    plan: Vec<ChannelReplay>,
    invalid: u64,
    discarded: u64,
    to_initial: bool,
}

pub(crate) struct World<'a> {
    g: &'a DataflowGraph,
    params: &'a LogicParams,
    sources: &'a SourceLog,
    cfg: &'a RunConfig,
    protocol: Protocol,
    now: Ticks,
    cur_tb: u64,
    next_tb: u64,
    epoch: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    inst: Vec<Inst>,
    chans: Vec<ChanRt>,
    ends: Vec<(InstanceIdx, InstanceIdx)>,
    coord: Coordinator,
    round_index: BTreeMap<u64, Vec<Option<u64>>>,
    store: DurableStore,
    trace: Trace,
    history: Option<ExecutionHistory>,
    metrics: MetricsRaw,
    rng: ChaCha8Rng,
    recovering: bool,
    deferred: VecDeque<u32>,
    floor: Vec<u64>,
    pending: Option<PendingRecovery>,
    kicks: VecDeque<InstanceIdx>,
    kicked: Vec<bool>,
    horizon: Ticks,
    interval: Ticks,
    pb_bytes: usize,
}

impl<'a> World<'a> {
    pub(crate) fn new(g: &'a DataflowGraph, params: &'a LogicParams, sources: &'a SourceLog, cfg: &'a RunConfig) -> Self {
        let n = g.instance_count();
        let protocol = cfg.protocol;
        let inst = (0..n)
            .map(|i| {
                let info = &g.instances[i];
                let op = &g.operators[info.operator];
                let inputs = g.inputs[i].clone();
                let outputs = g.outputs[i].clone();
                let source = match &op.logic {
                    LogicId::Source(s) => Some((s.clone(), info.id.index)),
                    _ => None,
                };
                Inst {
                    op: info.operator,
                    logic: op.logic.clone(),
                    source,
                    slot_of: inputs.iter().enumerate().map(|(k, &c)| (c, k as u32)).collect(),
                    queues: inputs.iter().map(|&c| (c, VecDeque::new())).collect(),
                    state: OperatorState::new(),
                    log: ChannelLog::new(&inputs, &outputs, protocol.logs_messages()),
                    seqs: SeqCounters::new(g.channels.len()),
                    clock: (protocol == Protocol::Cic).then(|| CicClock::new(i, n)),
                    align: Alignment::new(i, inputs.len()),
                    busy: Busy::Idle,
                    completing: Vec::new(),
                    sink_times: Vec::new(),
                    pending_out: VecDeque::new(),
                    snapshot_request: None,
                    copying: None,
                    after_copy: None,
                    next_index: 1,
                    upload_free_at: 0,
                    trigger_gen: 0,
                    wake_at: None,
                    round_blocked: 0,
                    initial: CheckpointMeta::initial(i, &inputs, &outputs),
                    inputs,
                    outputs,
                }
            })
            .collect();
        World {
            g,
            params,
            sources,
            cfg,
            protocol,
            now: 0,
            cur_tb: 0,
            next_tb: 1,
            epoch: 0,
            queue: BinaryHeap::new(),
            inst,
            chans: vec![ChanRt::default(); g.channels.len()],
            ends: g.channels.iter().map(|c| (c.from, c.to)).collect(),
            coord: Coordinator::new(n),
            round_index: BTreeMap::new(),
            store: DurableStore::new(n),
            trace: Trace::new(cfg.record_trace),
            history: cfg.record_history.then(|| {
                ExecutionHistory::new(n, g.channels.iter().map(|c| (c.from, c.to)).collect())
            }),
            metrics: MetricsRaw { blocked_time: vec![0; n], ..Default::default() },
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            recovering: false,
            deferred: VecDeque::new(),
            floor: vec![0; n],
            pending: None,
            kicks: VecDeque::new(),
            kicked: vec![false; n],
            horizon: ticks(cfg.horizon),
            interval: ticks(cfg.interval).max(1),
            pb_bytes: piggyback_bytes(n),
        }
    }

    fn schedule(&mut self, time: Ticks, guarded: bool, ev: Ev) {
        let tiebreak = self.next_tb;
        self.next_tb += 1;
        let epoch = guarded.then_some(self.epoch);
        self.queue.push(Reverse(Scheduled { time, tiebreak, epoch, ev }));
    }

    fn kick(&mut self, i: InstanceIdx) {
        if !self.kicked[i] {
            self.kicked[i] = true;
            self.kicks.push_back(i);
        }
    }

    fn tr(&mut self, kind: &str, details: std::fmt::Arguments<'_>) {
        self.trace.push(self.now, self.cur_tb, kind, details);
    }

    pub(crate) fn start(&mut self) {
        let n = self.inst.len();
        let (p, m) = (self.protocol, self.ends.len());
        self.tr("topo", format_args!("protocol={p} instances={n} channels={m}"));
        for c in 0..m {
            let (f, t) = self.ends[c];
            let kind = self.g.channels[c].kind.as_str();
            self.tr("chan", format_args!("id={c} from={f} to={t} kind={kind}"));
        }
        for i in 0..n {
            self.kick(i);
        }
        match self.protocol {
            Protocol::Coor => {
                if self.interval <= self.horizon {
                    self.schedule(self.interval, false, Ev::RoundTrigger);
                }
            }
            Protocol::Unc | Protocol::Cic => {
                for i in 0..n {
                    let phase = self.rng.gen_range(1..=self.interval);
                    if phase <= self.horizon {
                        self.schedule(phase, false, Ev::Trigger { inst: i, gen: 0 });
                    }
                }
                let gc = self.gc_interval();
                if gc <= self.horizon {
                    self.schedule(gc, false, Ev::Gc);
                }
            }
            Protocol::None => {}
        }
        for f in &self.cfg.failures {
            self.schedule(ticks(f.time), false, Ev::Fail(f.worker));
        }
    }

    fn gc_interval(&self) -> Ticks {
        self.cfg.gc_interval.map_or(self.interval, |g| ticks(g).max(1))
    }

    pub(crate) fn run_loop(&mut self) -> Result<(), SimError> {
        self.drain_kicks()?;
        while let Some(Reverse(s)) = self.queue.pop() {
            if !self.cfg.drain && s.time > self.horizon {
                break;
            }
            if s.epoch.is_some_and(|e| e != self.epoch) {
                continue;
            }
            self.now = s.time;
            self.cur_tb = s.tiebreak;
            self.metrics.events += 1;
            self.handle(s.ev)?;
            self.drain_kicks()?;
        }
        self.metrics.end_time = self.now;
        Ok(())
    }

    fn drain_kicks(&mut self) -> Result<(), SimError> {
        while let Some(i) = self.kicks.pop_front() {
            self.kicked[i] = false;
            self.advance(i)?;
        }
        Ok(())
    }

    fn handle(&mut self, ev: Ev) -> Result<(), SimError> {
        match ev {
            Ev::SourceWake(i) => {
                self.inst[i].wake_at = None;
                self.kick(i);
            }
            Ev::Deliver { channel, item } => self.on_deliver(channel, item),
            Ev::ProcessDone(i) => {
                let inst = &mut self.inst[i];
                inst.busy = Busy::Idle;
                let outs = std::mem::take(&mut inst.completing);
                inst.pending_out.extend(outs);
                for t in std::mem::take(&mut inst.sink_times) {
                    self.metrics.latencies.push((self.now, self.now - t));
                }
                self.kick(i);
            }
            Ev::CopyDone(i) => self.on_copy_done(i)?,
            Ev::Durable { inst, index } => self.on_durable(inst, index),
            Ev::Trigger { inst, gen } => self.on_trigger(inst, gen),
            Ev::RoundTrigger => self.on_round_trigger(),
            Ev::RoundStart { inst, round } => {
                self.inst[inst].snapshot_request = Some(CheckpointKind::Round(round));
                self.kick(inst);
            }
            Ev::Ack { inst, round, blocked } => {
                if let Some(rec) = self.coord.on_ack(inst, round, blocked, self.now) {
                    let d = rec.duration();
                    self.tr("round-done", format_args!("round={round} duration={d}"));
                    self.metrics.rounds.push(rec);
                }
            }
            Ev::Gc => self.on_gc()?,
            Ev::Fail(w) => self.on_fail(w)?,
            Ev::Detect => self.on_detect()?,
            Ev::RestartDone => self.on_restart_done()?,
        }
        Ok(())
    }

    fn on_deliver(&mut self, channel: ChannelId, item: Item) {
        let to = self.ends[channel].1;
        match &item {
            Item::Data(m) => {
                let seq = m.seq;
                self.tr("deliver", format_args!("ch={channel} seq={seq}"));
            }
            Item::Marker(r) => {
                let r = *r;
                self.tr("marker-deliver", format_args!("ch={channel} round={r}"));
            }
        }
        let tb = self.cur_tb;
        self.inst[to].queues.get_mut(&channel).expect("input channel").push_back((self.now, tb, item));
        self.kick(to);
    }

    /// Moves instance `i` forward as far as possible at the current time.
    fn advance(&mut self, i: InstanceIdx) -> Result<(), SimError> {
        loop {
            if self.recovering || self.inst[i].busy != Busy::Idle {
                return Ok(());
            }
            if !self.inst[i].pending_out.is_empty() {
                self.flush(i)?;
                if !self.inst[i].pending_out.is_empty() {
                    return Ok(());
                }
            }
            if let Some(kind) = self.inst[i].snapshot_request.take() {
                self.start_snapshot(i, kind, None);
                return Ok(());
            }
            if self.inst[i].source.is_some() {
                self.source_step(i);
                return Ok(());
            }
            // Earliest-delivered head among unblocked inputs.
            let inst = &self.inst[i];
            let pick = inst
                .queues
                .iter()
                .filter(|(c, q)| !q.is_empty() && !inst.align.is_blocked(**c))
                .map(|(c, q)| {
                    let (t, tb, _) = q.front().expect("non-empty");
                    (*t, *tb, *c)
                })
                .min();
            let Some((_, _, channel)) = pick else { return Ok(()) };
            let (_, _, item) = self.inst[i].queues.get_mut(&channel).expect("input").pop_front().expect("non-empty");
            match item {
                Item::Marker(round) => {
                    let now = self.now;
                    let step = self.inst[i].align.on_marker(channel, round, now).map_err(SimError::Protocol)?;
                    self.tr("marker-recv", format_args!("ch={channel} round={round} inst={i}"));
                    if step == AlignStep::Aligned {
                        self.inst[i].snapshot_request = Some(CheckpointKind::Round(round));
                    }
                }
                Item::Data(m) => {
                    self.release_credit(channel);
                    let logs = self.protocol.logs_messages();
                    if logs && self.cfg.dedup && m.seq <= self.inst[i].log.last_received(channel) {
                        let seq = m.seq;
                        self.metrics.duplicates_discarded += 1;
                        self.tr("dup", format_args!("ch={channel} seq={seq} inst={i}"));
                        continue;
                    }
                    if self.protocol == Protocol::Cic {
                        let pb = m.piggyback.as_deref().ok_or(ProtocolError::MissingPiggyback { channel })?;
                        let clock = self.inst[i].clock.as_ref().expect("cic clock");
                        if clock.should_force(self.ends[channel].0, pb).force() {
                            self.metrics.forced_checkpoints += 1;
                            let seq = m.seq;
                            self.tr("force", format_args!("inst={i} ch={channel} seq={seq}"));
                            self.start_snapshot(i, CheckpointKind::Forced, Some(m));
                            return Ok(());
                        }
                    }
                    self.process_message(i, m)?;
                    return Ok(());
                }
            }
        }
    }

    fn release_credit(&mut self, channel: ChannelId) {
        if self.g.channels[channel].kind == ChannelKind::Feedback {
            return;
        }
        let ch = &mut self.chans[channel];
        ch.reserved -= 1;
        if let Some(w) = ch.waiter.take() {
            self.kick(w);
        }
    }

    fn source_step(&mut self, i: InstanceIdx) {
        let (stream, part) = self.inst[i].source.clone().expect("source");
        let records = self.sources.partition(&stream, part);
        let offset = self.inst[i].state.input_offsets.get(&part).copied().unwrap_or(0) as usize;
        let Some(rec) = records.get(offset) else { return };
        if rec.time > self.now {
            if self.inst[i].wake_at != Some(rec.time) {
                self.inst[i].wake_at = Some(rec.time);
                self.schedule(rec.time, true, Ev::SourceWake(i));
            }
            return;
        }
        self.inst[i].state.input_offsets.insert(part, offset as u64 + 1);
        self.metrics.record_ingest(self.now);
        self.tr("emit", format_args!("inst={i} part={part} off={offset}"));
        let outs = self.route_outputs(i, vec![rec.record.clone()], rec.time);
        let out_bytes = self.out_bytes(&outs);
        let cost = &self.cfg.cost;
        let dur = cost.service_time(&self.inst[i].logic) + cost.serde_time_per_byte * out_bytes as f64 + self.log_cost(out_bytes);
        self.begin_processing(i, outs, dur);
    }

    fn log_cost(&self, out_bytes: usize) -> f64 {
        if self.protocol.logs_messages() {
            self.cfg.cost.log_time_per_byte * out_bytes as f64
        } else {
            0.0
        }
    }

    fn out_bytes(&self, outs: &[Out]) -> usize {
        let pb = if self.protocol == Protocol::Cic { self.pb_bytes } else { 0 };
        outs.iter()
            .map(|o| match o {
                Out::Fresh { record, .. } => ENVELOPE_BYTES + record.size_bytes() + pb,
                Out::Replay(m) => m.total_bytes(),
            })
            .sum()
    }

    fn begin_processing(&mut self, i: InstanceIdx, outs: Vec<Out>, duration: f64) {
        let inst = &mut self.inst[i];
        inst.busy = Busy::Processing;
        inst.completing = outs;
        let at = self.now + ticks(duration).max(1);
        self.schedule(at, true, Ev::ProcessDone(i));
    }

    fn process_message(&mut self, i: InstanceIdx, m: Message) -> Result<(), SimError> {
        let channel = m.channel;
        let dedup = self.protocol.logs_messages() && self.cfg.dedup;
        self.inst[i].log.dedup_receive(channel, m.seq, dedup);
        if let Some(clock) = self.inst[i].clock.as_mut() {
            let pb = m.piggyback.as_deref().ok_or(ProtocolError::MissingPiggyback { channel })?;
            clock.merge(self.ends[channel].0, pb);
        }
        if let Some(h) = self.history.as_mut() {
            h.receive(channel, m.seq);
        }
        if self.inst[self.ends[channel].0].source.is_some() {
            self.metrics.record_processed(self.now);
        }
        let seq = m.seq;
        self.tr("recv", format_args!("ch={channel} seq={seq} inst={i}"));
        let inst = &mut self.inst[i];
        let slot = inst.slot_of[&channel];
        let slots = inst.inputs.len() as u32;
        let outputs = apply(&inst.logic, self.params, &mut inst.state, slot, slots, &m.record, m.source_event_time);
        if inst.logic.is_sink() {
            inst.sink_times.push(m.source_event_time);
        }
        let outs = self.route_outputs(i, outputs, m.source_event_time);
        let out_bytes = self.out_bytes(&outs);
        let cost = &self.cfg.cost;
        let dur = cost.service_time(&self.inst[i].logic)
            + cost.serde_time_per_byte * (m.total_bytes() + out_bytes) as f64
            + self.log_cost(out_bytes);
        self.begin_processing(i, outs, dur);
        Ok(())
    }

    fn route_outputs(&self, i: InstanceIdx, records: Vec<Record>, source_time: Ticks) -> Vec<Out> {
        let op = self.inst[i].op;
        let u = i - self.g.first_instance[op];
        let mut outs = Vec::new();
        for record in records {
            for &e in &self.g.out_edges[op] {
                let edge = &self.g.edges[e];
                let row = &edge.routes[u];
                let mut push = |c: Option<ChannelId>| {
                    if let Some(channel) = c {
                        outs.push(Out::Fresh { channel, record: record.clone(), source_time });
                    }
                };
                match edge.kind {
                    ChannelKind::Forward => row.iter().copied().for_each(&mut push),
                    ChannelKind::Broadcast => row.iter().copied().for_each(&mut push),
                    ChannelKind::Shuffle | ChannelKind::Feedback => match route(&record) {
                        Route::Key(k) => push(row[partition_of(k, row.len() as u32) as usize]),
                        Route::All => row.iter().copied().for_each(&mut push),
                    },
                }
            }
        }
        outs
    }

    /// Sends buffered outputs while the receiving channels have credit.
    fn flush(&mut self, i: InstanceIdx) -> Result<(), SimError> {
        while let Some(front) = self.inst[i].pending_out.front() {
            let channel = front.channel();
            let feedback = self.g.channels[channel].kind == ChannelKind::Feedback;
            if !feedback && self.chans[channel].reserved >= self.cfg.queue_capacity {
                self.chans[channel].waiter = Some(i);
                return Ok(());
            }
            let out = self.inst[i].pending_out.pop_front().expect("non-empty");
            let to = self.ends[channel].1;
            let (msg, replay) = match out {
                Out::Replay(m) => (m, true),
                Out::Fresh { channel, record, source_time } => {
                    let inst = &mut self.inst[i];
                    let seq = inst.seqs.next_seq(channel);
                    let piggyback = inst.clock.as_mut().map(|c| Box::new(c.on_send(to)));
                    let msg = Message { channel, seq, send_time: self.now, record, source_event_time: source_time, piggyback };
                    inst.log.log_send(&msg).map_err(SimError::Protocol)?;
                    if let Some(h) = self.history.as_mut() {
                        h.send(channel, seq);
                    }
                    (msg, false)
                }
            };
            if !feedback {
                self.chans[channel].reserved += 1;
            }
            let (payload, pb) = (msg.payload_bytes(), msg.piggyback_bytes());
            self.metrics.bytes.data += payload as u64;
            self.metrics.bytes.piggyback += pb as u64;
            self.metrics.data_messages += 1;
            let seq = msg.seq;
            let tag = msg.record.tag();
            let r = u8::from(replay);
            self.tr("send", format_args!("ch={channel} seq={seq} from={i} to={to} bytes={payload} pb={pb} rec={tag} replay={r}"));
            self.transmit(channel, payload + pb, Item::Data(msg));
        }
        Ok(())
    }

    fn transmit(&mut self, channel: ChannelId, bytes: usize, item: Item) {
        let ch = &self.g.channels[channel];
        let tx = ticks(bytes as f64 / ch.bandwidth);
        let free = self.now.max(self.chans[channel].free_at) + tx;
        self.chans[channel].free_at = free;
        let arrival = free + ch.base_latency;
        self.schedule(arrival, true, Ev::Deliver { channel, item });
    }

    fn control(&mut self, what: &str, bytes: usize) {
        self.metrics.bytes.control += bytes as u64;
        self.tr("ctrl", format_args!("kind={what} bytes={bytes}"));
    }

    fn start_snapshot(&mut self, i: InstanceIdx, kind: CheckpointKind, after: Option<Message>) {
        let now = self.now;
        let interval = self.interval;
        let horizon = self.horizon;
        let inst = &mut self.inst[i];
        let index = inst.next_index;
        inst.next_index += 1;
        let mut retrigger = None;
        if let Some(clock) = inst.clock.as_mut() {
            clock.on_checkpoint();
            if kind == CheckpointKind::Forced {
                // A forced checkpoint restarts the local schedule.
                inst.trigger_gen += 1;
                if now + interval <= horizon {
                    retrigger = Some((now + interval, inst.trigger_gen));
                }
            }
        }
        let snap = inst.state.snapshot();
        let bytes = snap.bytes;
        let cp = Checkpoint {
            owner: i,
            index,
            kind,
            state: Some(snap),
            state_bytes: bytes,
            last_sent: inst.log.sent_vector().clone(),
            last_received: inst.log.received_vector().clone(),
            protocol_meta: inst.clock.clone(),
            start_time: now,
            durable_time: None,
        };
        inst.busy = Busy::Copying;
        inst.copying = Some((index, kind));
        inst.after_copy = after;
        if let CheckpointKind::Round(r) = kind {
            let n = self.inst.len();
            self.round_index.entry(r).or_insert_with(|| vec![None; n])[i] = Some(index);
        }
        self.store.begin(cp);
        if let Some(h) = self.history.as_mut() {
            h.checkpoint(i, index);
        }
        let label = kind.label();
        self.tr("ckpt", format_args!("inst={i} idx={index} kind={label} bytes={bytes}"));
        if let Some((at, gen)) = retrigger {
            self.schedule(at, false, Ev::Trigger { inst: i, gen });
        }
        let copy = ticks(self.cfg.cost.snapshot_time_per_byte * bytes as f64);
        self.schedule(now + copy, true, Ev::CopyDone(i));
    }

    fn on_copy_done(&mut self, i: InstanceIdx) -> Result<(), SimError> {
        let (index, kind) = self.inst[i].copying.take().expect("copy in progress");
        self.inst[i].busy = Busy::Idle;
        let bytes = self.store.get(i, index).map_or(0, |c| c.state_bytes);
        let cost = &self.cfg.cost;
        let inst = &mut self.inst[i];
        let start = self.now.max(inst.upload_free_at);
        inst.upload_free_at = start + ticks(cost.upload_time_per_byte * bytes as f64);
        let durable_at = inst.upload_free_at + ticks(cost.store_latency);
        self.schedule(durable_at, true, Ev::Durable { inst: i, index });
        if let CheckpointKind::Round(r) = kind {
            let blocked = self.inst[i].align.finish(self.now);
            self.inst[i].round_blocked = blocked;
            self.metrics.blocked_time[i] += blocked;
            for c in self.inst[i].outputs.clone() {
                let b = self.cfg.marker_bytes;
                self.metrics.bytes.marker += b as u64;
                self.tr("marker", format_args!("ch={c} round={r} bytes={b}"));
                self.transmit(c, b, Item::Marker(r));
            }
        }
        if let Some(m) = self.inst[i].after_copy.take() {
            self.process_message(i, m)?;
        } else {
            self.kick(i);
        }
        Ok(())
    }

    fn on_durable(&mut self, i: InstanceIdx, index: u64) {
        let now = self.now;
        let Some(cp) = self.store.mark_durable(i, index, now) else { return };
        let (kind, start, meta_bytes) = (cp.kind, cp.start_time, cp.metadata_bytes());
        self.metrics.checkpoints.push(CheckpointSample { owner: i, index, kind, start, durable: now });
        self.tr("durable", format_args!("inst={i} idx={index}"));
        match kind {
            CheckpointKind::Round(round) => {
                self.control("ack", CONTROL_BYTES);
                let blocked = self.inst[i].round_blocked;
                let at = now + ticks(self.cfg.cost.control_latency);
                self.schedule(at, true, Ev::Ack { inst: i, round, blocked });
            }
            _ => self.control("meta", meta_bytes),
        }
    }

    fn on_trigger(&mut self, i: InstanceIdx, gen: u64) {
        if gen != self.inst[i].trigger_gen {
            return;
        }
        if self.now + self.interval <= self.horizon {
            self.schedule(self.now + self.interval, false, Ev::Trigger { inst: i, gen });
        }
        if self.recovering {
            return;
        }
        let inst = &mut self.inst[i];
        if inst.snapshot_request.is_none() {
            inst.snapshot_request = Some(CheckpointKind::Local);
        }
        self.kick(i);
    }

    fn on_round_trigger(&mut self) {
        if self.now + self.interval <= self.horizon {
            self.schedule(self.now + self.interval, false, Ev::RoundTrigger);
        }
        if self.recovering {
            self.coord.skipped += 1;
            self.metrics.skipped_rounds += 1;
            self.tr("round-skip", format_args!("reason=recovery"));
            return;
        }
        match self.coord.on_trigger(self.now) {
            TriggerOutcome::Skipped => {
                self.metrics.skipped_rounds += 1;
                self.tr("round-skip", format_args!("reason=in-flight"));
            }
            TriggerOutcome::Start(round) => {
                self.metrics.rounds_started += 1;
                self.tr("round-start", format_args!("round={round}"));
                let at = self.now + ticks(self.cfg.cost.control_latency);
                for i in 0..self.inst.len() {
                    if self.inst[i].source.is_some() {
                        self.control("trigger", CONTROL_BYTES);
                        self.schedule(at, true, Ev::RoundStart { inst: i, round });
                    }
                }
            }
        }
    }

    /// Recovery line over durable checkpoints at or above the floor.
    fn current_line(&self) -> Result<RecoveryLine, SimError> {
        let chains: Vec<Vec<CheckpointMeta>> = (0..self.inst.len())
            .map(|i| self.store.durable_metas(i, self.floor[i], &self.inst[i].initial))
            .collect();
        let graph = build_checkpoint_graph(&chains, &self.ends)?;
        Ok(rollback_propagation(&graph)?)
    }

    fn line_meta(&self, i: InstanceIdx, index: u64) -> CheckpointMeta {
        if index == 0 {
            self.inst[i].initial.clone()
        } else {
            self.store.get(i, index).expect("line checkpoint is stored").meta()
        }
    }

    fn on_gc(&mut self) -> Result<(), SimError> {
        let next = self.now + self.gc_interval();
        if next <= self.horizon {
            self.schedule(next, false, Ev::Gc);
        }
        if self.recovering {
            return Ok(());
        }
        let line = self.current_line()?;
        let metas: Vec<CheckpointMeta> = (0..self.inst.len()).map(|i| self.line_meta(i, line.indices[i])).collect();
        for (c, &(from, to)) in self.ends.iter().enumerate() {
            let received = metas[to].last_received.get(&c).copied().unwrap_or(0);
            let sent = metas[from].last_sent.get(&c).copied().unwrap_or(0);
            self.inst[from].log.gc(c, received.min(sent));
        }
        for i in 0..self.inst.len() {
            self.floor[i] = line.indices[i];
            self.store.drop_states_below(i, line.indices[i]);
        }
        let retained: usize = self.inst.iter().map(|x| x.log.retained_len()).sum();
        self.metrics.max_retained_log = self.metrics.max_retained_log.max(retained);
        Ok(())
    }

    fn on_fail(&mut self, worker: u32) -> Result<(), SimError> {
        if worker >= self.g.worker_count() {
            return Err(SimError::UnknownWorker(worker));
        }
        if self.recovering {
            self.deferred.push_back(worker);
            self.tr("fail-deferred", format_args!("worker={worker}"));
            return Ok(());
        }
        self.tr("fail", format_args!("worker={worker}"));
        self.epoch += 1;
        self.recovering = true;
        self.coord.abandon();
        self.metrics.abandoned_rounds = self.coord.abandoned;
        for i in 0..self.inst.len() {
            let inst = &mut self.inst[i];
            inst.queues.values_mut().for_each(VecDeque::clear);
            inst.pending_out.clear();
            inst.completing.clear();
            inst.sink_times.clear();
            inst.busy = Busy::Idle;
            inst.snapshot_request = None;
            inst.copying = None;
            inst.after_copy = None;
            inst.wake_at = None;
            let aborted = self.store.abort_pending(i);
            for idx in aborted {
                self.tr("abort", format_args!("inst={i} idx={idx}"));
                if let Some(h) = self.history.as_mut() {
                    h.forget_checkpoint(i, idx);
                }
            }
            self.inst[i].next_index = self.store.latest_durable(i) + 1;
        }
        for ch in &mut self.chans {
            *ch = ChanRt { free_at: self.now, ..ChanRt::default() };
        }
        let failure_time = self.now;
        self.pending = Some(PendingRecovery {
            failure_time,
            detect_time: 0,
            line: RecoveryLine::new(Vec::new()),
            plan: Vec::new(),
            invalid: 0,
            discarded: 0,
            to_initial: false,
        });
        let at = self.now + ticks(self.cfg.detection_latency);
        self.schedule(at, true, Ev::Detect);
        Ok(())
    }

    fn on_detect(&mut self) -> Result<(), SimError> {
        let n = self.inst.len();
        let line = match self.protocol {
            Protocol::Coor => match self.coord.last_completed() {
                Some(r) => RecoveryLine::new(
                    self.round_index[&r.round].iter().map(|x| x.expect("committed round is complete")).collect(),
                ),
                None => RecoveryLine::new(vec![0; n]),
            },
            Protocol::Unc | Protocol::Cic => self.current_line()?,
            Protocol::None => RecoveryLine::new(vec![0; n]),
        };
        let latest: Vec<u64> = (0..n).map(|i| self.store.latest_durable(i)).collect();
        let discarded: u64 = latest.iter().zip(&line.indices).map(|(l, x)| l - x).sum();
        let invalid = if self.protocol == Protocol::Coor { 0 } else { discarded };
        let to_initial = latest.iter().zip(&line.indices).any(|(l, x)| *x == 0 && *l > 0);
        let metas: Vec<CheckpointMeta> = (0..n).map(|i| self.line_meta(i, line.indices[i])).collect();
        let plan = if self.protocol.logs_messages() {
            replay_plan(&metas.iter().collect::<Vec<_>>(), &self.ends)
        } else {
            Vec::new()
        };
        let mut replay_count = vec![0u64; n];
        for p in &plan {
            let from = self.ends[p.channel].0;
            replay_count[from] += match self.cfg.replay {
                ReplayPolicy::Exact => p.len(),
                ReplayPolicy::RetainedLog => {
                    self.inst[from].log.retained(p.channel).filter(|m| m.seq <= p.upto).count() as u64
                }
            };
        }
        let cost = &self.cfg.cost;
        let restart = (0..n)
            .map(|i| {
                let bytes = if line.indices[i] == 0 {
                    0
                } else {
                    self.store.get(i, line.indices[i]).map_or(0, |c| c.state_bytes)
                };
                cost.store_latency
                    + cost.restore_time_per_byte * bytes as f64
                    + cost.replay_prepare_time_per_message * replay_count[i] as f64
            })
            .fold(0.0, f64::max);
        let rendered = render_line(&line);
        self.tr("line", format_args!("idx={rendered} invalid={invalid} discarded={discarded}"));
        let p = self.pending.as_mut().expect("failure pending");
        p.detect_time = self.now;
        p.line = line;
        p.plan = plan;
        p.invalid = invalid;
        p.discarded = discarded;
        p.to_initial = to_initial;
        let at = self.now + ticks(restart);
        self.schedule(at, true, Ev::RestartDone);
        Ok(())
    }

    fn on_restart_done(&mut self) -> Result<(), SimError> {
        let p = self.pending.take().expect("failure pending");
        let n = self.inst.len();
        let next_round = self.coord.next_round();
        for i in 0..n {
            let idx = p.line.indices[i];
            let (state, sent, received, clock) = if idx == 0 {
                (OperatorState::new(), Default::default(), Default::default(), None)
            } else {
                let cp = self.store.get(i, idx).expect("line checkpoint is stored");
                let state = cp.state.as_ref().expect("line checkpoint keeps its state").state.clone();
                (state, cp.last_sent.clone(), cp.last_received.clone(), cp.protocol_meta.clone())
            };
            let inst = &mut self.inst[i];
            inst.state = state;
            inst.log.restore(&sent, &received);
            for &c in &inst.outputs {
                inst.seqs.reset_to(c, inst.log.last_sent(c));
            }
            if inst.clock.is_some() {
                inst.clock = Some(clock.unwrap_or_else(|| CicClock::new(i, n)));
            }
            inst.align.reset(next_round);
            inst.next_index = idx + 1;
            inst.upload_free_at = self.now;
            self.store.truncate(i, idx);
            if self.protocol.logs_messages() {
                self.floor[i] = idx;
            }
        }
        if let Some(h) = self.history.as_mut() {
            h.truncate_to(&p.line);
        }
        let mut replayed = 0u64;
        let mut per_sender: BTreeMap<InstanceIdx, Vec<Message>> = BTreeMap::new();
        for r in &p.plan {
            let from = self.ends[r.channel].0;
            let msgs = match self.cfg.replay {
                ReplayPolicy::Exact => self.inst[from].log.replay(r.channel, r.after, r.upto).map_err(SimError::Protocol)?,
                ReplayPolicy::RetainedLog => {
                    self.inst[from].log.retained(r.channel).filter(|m| m.seq <= r.upto).cloned().collect()
                }
            };
            replayed += msgs.len() as u64;
            if !msgs.is_empty() {
                let (c, k) = (r.channel, msgs.len());
                self.tr("replay", format_args!("ch={c} from={from} count={k}"));
            }
            per_sender.entry(from).or_default().extend(msgs);
        }
        for (from, mut msgs) in per_sender {
            msgs.sort_by_key(|m| (m.send_time, m.channel, m.seq));
            self.inst[from].pending_out.extend(msgs.into_iter().map(Out::Replay));
        }
        self.metrics.replayed_messages += replayed;
        self.metrics.recoveries.push(RecoveryRecord {
            failure_time: p.failure_time,
            detect_time: p.detect_time,
            restart_done: self.now,
            line: p.line.indices.clone(),
            invalid: p.invalid,
            discarded: p.discarded,
            replayed,
            to_initial: p.to_initial,
        });
        self.tr("restart-done", format_args!("replayed={replayed}"));
        self.recovering = false;
        for i in 0..n {
            self.kick(i);
        }
        if let Some(w) = self.deferred.pop_front() {
            self.schedule(self.now, false, Ev::Fail(w));
        }
        Ok(())
    }

    pub(crate) fn finish(self) -> RunOutput {
        let trace_hash = self.trace.hash();
        let trace_events = self.trace.len();
        RunOutput {
            trace_hash,
            trace_events,
            trace: self.trace.into_lines(),
            raw: self.metrics,
            final_states: self.inst.into_iter().map(|i| i.state).collect(),
            history: self.history,
        }
    }
}

pub(crate) fn render_line(line: &RecoveryLine) -> String {
    line.indices.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}
