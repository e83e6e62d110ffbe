use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::record::{Auction, Person, Record, INT_BYTES};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StateKey {
    Key(u64),
    Window { key: u64, window: u64 },
    /// Sink effect keyed by the received record.
    Output(Record),
    /// Highest ingestion time seen on one input slot (windowed operators).
    Frontier(u32),
}

impl StateKey {
    fn size_bytes(&self) -> usize {
        match self {
            StateKey::Key(_) | StateKey::Frontier(_) => INT_BYTES,
            StateKey::Window { .. } => 2 * INT_BYTES,
            StateKey::Output(r) => r.size_bytes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Value {
    Count(u64),
    Time(u64),
    JoinSides { persons: Vec<Person>, auctions: Vec<Auction> },
    ReachNode { links: BTreeSet<u64>, paths: BTreeSet<Vec<u64>> },
}

impl Value {
    fn size_bytes(&self) -> usize {
        match self {
            Value::Count(_) | Value::Time(_) => INT_BYTES,
            Value::JoinSides { persons, auctions } => {
                persons.iter().map(|p| Record::Person(p.clone()).size_bytes()).sum::<usize>()
                    + auctions.iter().map(|a| Record::Auction(a.clone()).size_bytes()).sum::<usize>()
            }
            Value::ReachNode { links, paths } => {
                links.len() * INT_BYTES + paths.iter().map(|p| p.len() * INT_BYTES).sum::<usize>()
            }
        }
    }
}

/// Keyed state of one operator instance.
///
/// `size_bytes` is a pure function of the contents. Sources additionally
/// track their read offset per input partition.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorState {
    pub keyed: BTreeMap<StateKey, Value>,
    pub input_offsets: BTreeMap<u32, u64>,
}

impl OperatorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.keyed.is_empty() && self.input_offsets.is_empty()
    }

    pub fn size_bytes(&self) -> usize {
        self.keyed.iter().map(|(k, v)| k.size_bytes() + v.size_bytes()).sum::<usize>()
            + self.input_offsets.len() * 2 * INT_BYTES
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot { bytes: self.size_bytes(), state: self.clone() }
    }

    pub fn restore(snapshot: &StateSnapshot) -> Self {
        snapshot.state.clone()
    }

    pub fn count(&self, key: &StateKey) -> u64 {
        match self.keyed.get(key) {
            Some(Value::Count(c)) => *c,
            _ => 0,
        }
    }

    pub fn add_count(&mut self, key: StateKey, delta: u64) -> u64 {
        let slot = self.keyed.entry(key).or_insert(Value::Count(0));
        match slot {
            Value::Count(c) => {
                *c += delta;
                *c
            }
            other => {
                *other = Value::Count(delta);
                delta
            }
        }
    }
}

/// Immutable copy of an [`OperatorState`] held by a checkpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub bytes: usize,
    pub state: OperatorState,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_state() -> impl Strategy<Value = OperatorState> {
        let entry = prop_oneof![
            (any::<u64>(), any::<u64>()).prop_map(|(k, c)| (StateKey::Key(k), Value::Count(c))),
            (any::<u64>(), 0u64..50, any::<u64>())
                .prop_map(|(k, w, t)| (StateKey::Window { key: k, window: w }, Value::Time(t))),
            (prop::collection::btree_set(0u64..100, 0..5), prop::collection::vec(0u64..100, 1..4), any::<u64>())
                .prop_map(|(links, path, k)| {
                    (StateKey::Key(k), Value::ReachNode { links, paths: [path].into_iter().collect() })
                }),
        ];
        (prop::collection::vec(entry, 0..20), prop::collection::btree_map(0u32..8, any::<u64>(), 0..4)).prop_map(
            |(entries, offsets)| OperatorState { keyed: entries.into_iter().collect(), input_offsets: offsets },
        )
    }

    proptest! {
        #[test]
        fn snapshot_restore_round_trip(s in arb_state()) {
            let snap = s.snapshot();
            prop_assert_eq!(snap.bytes, s.size_bytes());
            prop_assert_eq!(OperatorState::restore(&snap), s);
        }

        #[test]
        fn size_is_a_function_of_contents(s in arb_state()) {
            let rebuilt = OperatorState {
                keyed: s.keyed.iter().rev().map(|(k, v)| (k.clone(), v.clone())).collect(),
                input_offsets: s.input_offsets.clone(),
            };
            prop_assert_eq!(rebuilt.size_bytes(), s.size_bytes());
        }
    }

    #[test]
    fn counts() {
        let mut s = OperatorState::new();
        assert_eq!(s.add_count(StateKey::Key(3), 2), 2);
        assert_eq!(s.add_count(StateKey::Key(3), 1), 3);
        assert_eq!(s.count(&StateKey::Key(3)), 3);
        assert_eq!(s.count(&StateKey::Key(4)), 0);
        assert_eq!(s.size_bytes(), 16);
    }
}
