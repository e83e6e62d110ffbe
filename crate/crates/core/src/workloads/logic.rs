use serde::{Deserialize, Serialize};

use crate::dataflow::{Auction, LogicId, OperatorState, Person, Record, StateKey, Value};
use crate::time::Ticks;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogicParams {
    pub multiplier: f64,
    /// Window length in ticks.
    pub window: Ticks,
    pub max_path_len: usize,
}

impl Default for LogicParams {
    fn default() -> Self {
        LogicParams { multiplier: 0.9, window: 2_000_000, max_path_len: 4 }
    }
}

/// Where a record goes on a keyed edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    Key(u64),
    All,
}

pub fn route(record: &Record) -> Route {
    match record {
        Record::Bid(b) => Route::Key(b.bidder),
        Record::Person(p) => Route::Key(p.id),
        Record::Auction(a) => Route::Key(a.seller),
        Record::MappedBid { bidder, .. } => Route::Key(*bidder),
        Record::Joined { person, .. } => Route::Key(*person),
        Record::WindowCount { key, .. } => Route::Key(*key),
        Record::Link { from, .. } | Record::DeleteLink { from, .. } => Route::Key(*from),
        Record::ReachSource { path } => Route::Key(*path.last().unwrap_or(&0)),
        Record::DeleteSource { .. } => Route::All,
        Record::JoinedPair { to, .. } => Route::Key(*to),
    }
}

/// Applies operator logic to one input record and returns the outputs.
///
/// `slot` is the position of the input channel among the instance's
/// inputs and `slots` their number; windowed operators use them to track
/// per-channel progress of ingestion time. `ts` is the ingestion time of
/// the record that caused this input.
pub fn apply(
    logic: &LogicId,
    params: &LogicParams,
    state: &mut OperatorState,
    slot: u32,
    slots: u32,
    record: &Record,
    ts: Ticks,
) -> Vec<Record> {
    match logic {
        LogicId::Source(_) => vec![record.clone()],
        LogicId::Map => match record {
            Record::Bid(b) => vec![Record::MappedBid {
                auction: b.auction,
                bidder: b.bidder,
                price: (b.price as f64 * params.multiplier).round() as i64,
                extra: b.extra,
            }],
            other => vec![other.clone()],
        },
        LogicId::IncrementalJoin => join(state, record, None),
        LogicId::WindowJoin => {
            let window = ts / params.window;
            let out = join(state, record, Some(window));
            advance_frontier(state, params.window, slot, slots, ts);
            out
        }
        LogicId::WindowCount => {
            let out = match record {
                Record::Bid(b) => {
                    let window = ts / params.window;
                    let count = state.add_count(StateKey::Window { key: b.bidder, window }, 1);
                    vec![Record::WindowCount { key: b.bidder, window, count }]
                }
                _ => Vec::new(),
            };
            advance_frontier(state, params.window, slot, slots, ts);
            out
        }
        LogicId::ReachJoin => reach_join(state, record),
        LogicId::ReachSelect => match record {
            Record::JoinedPair { path, to } if !path.contains(to) && path.len() < params.max_path_len => {
                vec![record.clone()]
            }
            _ => Vec::new(),
        },
        LogicId::ReachStep => apply(&LogicId::ReachSelect, params, state, slot, slots, record, ts)
            .iter()
            .flat_map(|r| apply(&LogicId::ReachProject, params, state, slot, slots, r, ts))
            .collect(),
        LogicId::ReachProject => match record {
            Record::JoinedPair { path, to } => {
                let mut p = path.clone();
                p.push(*to);
                vec![Record::ReachSource { path: p }]
            }
            _ => Vec::new(),
        },
        LogicId::Sink => {
            state.add_count(StateKey::Output(record.clone()), 1);
            Vec::new()
        }
    }
}

/// Symmetric join of persons with auctions on person id = seller. Each
/// matching pair is emitted once, by whichever side arrives second.
fn join(state: &mut OperatorState, record: &Record, window: Option<u64>) -> Vec<Record> {
    let key = match record {
        Record::Person(p) => p.id,
        Record::Auction(a) => a.seller,
        _ => return Vec::new(),
    };
    let state_key = match window {
        Some(w) => StateKey::Window { key, window: w },
        None => StateKey::Key(key),
    };
    let window = window.unwrap_or(0);
    let entry = state
        .keyed
        .entry(state_key)
        .or_insert_with(|| Value::JoinSides { persons: Vec::new(), auctions: Vec::new() });
    let Value::JoinSides { persons, auctions } = entry else {
        return Vec::new();
    };
    match record {
        Record::Person(p) => {
            insert_sorted::<Person>(persons, p.clone());
            auctions.iter().map(|a| Record::Joined { person: p.id, auction: a.id, window }).collect()
        }
        Record::Auction(a) => {
            insert_sorted::<Auction>(auctions, a.clone());
            persons.iter().map(|p| Record::Joined { person: p.id, auction: a.id, window }).collect()
        }
        _ => Vec::new(),
    }
}

fn insert_sorted<T: Ord>(v: &mut Vec<T>, item: T) {
    let pos = v.binary_search(&item).unwrap_or_else(|p| p);
    v.insert(pos, item);
}

/// Tracks the highest ingestion time per input slot and purges windows that
/// ended before the minimum over slots. Channels are FIFO and every source
/// emits in ingestion order, so no later record can fall into a purged
/// window.
fn advance_frontier(state: &mut OperatorState, window: Ticks, slot: u32, slots: u32, ts: Ticks) {
    let frontier = |s: &OperatorState| -> Ticks {
        (0..slots)
            .map(|i| match s.keyed.get(&StateKey::Frontier(i)) {
                Some(Value::Time(t)) => *t,
                _ => 0,
            })
            .min()
            .unwrap_or(0)
    };
    let before = frontier(state);
    let slot_entry = state.keyed.entry(StateKey::Frontier(slot)).or_insert(Value::Time(0));
    if let Value::Time(t) = slot_entry {
        *t = (*t).max(ts);
    }
    let after = frontier(state);
    if after / window > before / window {
        let done = after / window;
        state.keyed.retain(|k, _| !matches!(k, StateKey::Window { window: w, .. } if *w < done));
    }
}

fn reach_join(state: &mut OperatorState, record: &Record) -> Vec<Record> {
    fn node_entry(state: &mut OperatorState, node: u64) -> &mut Value {
        state
            .keyed
            .entry(StateKey::Key(node))
            .or_insert_with(|| Value::ReachNode { links: Default::default(), paths: Default::default() })
    }
    match record {
        Record::Link { from, to } => {
            let Value::ReachNode { links, paths } = node_entry(state, *from) else { return Vec::new() };
            if !links.insert(*to) {
                return Vec::new();
            }
            paths.iter().map(|p| Record::JoinedPair { path: p.clone(), to: *to }).collect()
        }
        Record::DeleteLink { from, to } => {
            if let Some(Value::ReachNode { links, .. }) = state.keyed.get_mut(&StateKey::Key(*from)) {
                links.remove(to);
            }
            Vec::new()
        }
        Record::ReachSource { path } => {
            let Some(&node) = path.last() else { return Vec::new() };
            let Value::ReachNode { links, paths } = node_entry(state, node) else { return Vec::new() };
            if !paths.insert(path.clone()) {
                return Vec::new();
            }
            links.iter().map(|&to| Record::JoinedPair { path: path.clone(), to }).collect()
        }
        Record::DeleteSource { node } => {
            for v in state.keyed.values_mut() {
                if let Value::ReachNode { paths, .. } = v {
                    paths.retain(|p| p.first() != Some(node));
                }
            }
            Vec::new()
        }
        _ => Vec::new(),
    }
}
