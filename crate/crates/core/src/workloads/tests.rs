use std::collections::{BTreeMap, BTreeSet, VecDeque};

use proptest::prelude::*;

use super::*;
use crate::dataflow::{Auction, Bid, OperatorState, Person, Record, StateKey};

fn bid(bidder: u64, price: i64) -> Record {
    Record::Bid(Bid { auction: 1, bidder, price, date_time: 0, extra: 0 })
}

#[test]
fn q1_maps_one_record() {
    let q = build_query(&QuerySpec::new(QueryId::Q1, 1)).unwrap();
    let mut s = OperatorState::new();
    let out = apply(&LogicId::Map, &q.params, &mut s, 0, 1, &bid(3, 100), 0);
    assert_eq!(out, vec![Record::MappedBid { auction: 1, bidder: 3, price: 90, extra: 0 }]);
}

#[test]
fn q12_running_counts() {
    let q = build_query(&QuerySpec::new(QueryId::Q12, 1)).unwrap();
    let mut s = OperatorState::new();
    let mut counts = Vec::new();
    for i in 0..10 {
        for r in apply(&LogicId::WindowCount, &q.params, &mut s, 0, 1, &bid(5, 1), 1000 + i) {
            if let Record::WindowCount { count, .. } = r {
                counts.push(count);
            }
        }
    }
    assert_eq!(counts, (1..=10).collect::<Vec<_>>());
    assert_eq!(s.count(&StateKey::Window { key: 5, window: 0 }), 10);
}

#[test]
fn windows_are_purged_once_every_slot_moves_past_them() {
    let params = LogicParams { window: 10, ..LogicParams::default() };
    let mut s = OperatorState::new();
    apply(&LogicId::WindowCount, &params, &mut s, 0, 2, &bid(1, 1), 5);
    apply(&LogicId::WindowCount, &params, &mut s, 0, 2, &bid(1, 1), 25);
    // slot 1 has seen nothing yet: window 0 must stay
    assert_eq!(s.count(&StateKey::Window { key: 1, window: 0 }), 1);
    apply(&LogicId::WindowCount, &params, &mut s, 1, 2, &bid(2, 1), 12);
    assert_eq!(s.count(&StateKey::Window { key: 1, window: 0 }), 0);
    assert_eq!(s.count(&StateKey::Window { key: 1, window: 2 }), 1);
}

#[test]
fn topologies() {
    for id in QueryId::ALL {
        let q = build_query(&QuerySpec::new(id, 2)).unwrap();
        let feedback = q.graph.edges.iter().filter(|e| e.kind == ChannelKind::Feedback).count();
        assert_eq!(feedback, usize::from(id == QueryId::Reach), "{id}");
    }
    let q1 = build_query(&QuerySpec::new(QueryId::Q1, 4)).unwrap();
    assert!(q1.graph.edges.iter().all(|e| e.kind == ChannelKind::Forward));
    assert_eq!(q1.graph.channels.len(), 8);
    assert!("q99".parse::<QueryId>().is_err());
}

/// Single-instance reachability pipeline run to a fixpoint.
fn run_reach(links: &[(u64, u64)], sources: &[u64], max_len: usize) -> BTreeSet<Vec<u64>> {
    let params = LogicParams { max_path_len: max_len, ..LogicParams::default() };
    let mut join = OperatorState::new();
    let mut sink = OperatorState::new();
    let mut queue: VecDeque<Record> = links.iter().map(|&(from, to)| Record::Link { from, to }).collect();
    queue.extend(sources.iter().map(|&n| Record::ReachSource { path: vec![n] }));
    while let Some(r) = queue.pop_front() {
        for pair in apply(&LogicId::ReachJoin, &params, &mut join, 0, 1, &r, 0) {
            for sel in apply(&LogicId::ReachSelect, &params, &mut OperatorState::new(), 0, 1, &pair, 0) {
                for src in apply(&LogicId::ReachProject, &params, &mut OperatorState::new(), 0, 1, &sel, 0) {
                    apply(&LogicId::Sink, &params, &mut sink, 0, 1, &src, 0);
                    queue.push_back(src);
                }
            }
        }
    }
    sink.keyed
        .keys()
        .filter_map(|k| match k {
            StateKey::Output(Record::ReachSource { path }) => Some(path.clone()),
            _ => None,
        })
        .collect()
}

fn bfs(links: &[(u64, u64)], source: u64) -> BTreeSet<u64> {
    let mut adj: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for &(a, b) in links {
        adj.entry(a).or_default().push(b);
    }
    let mut seen = BTreeSet::from([source]);
    let mut q = VecDeque::from([source]);
    while let Some(n) = q.pop_front() {
        for &m in adj.get(&n).into_iter().flatten() {
            if seen.insert(m) {
                q.push_back(m);
            }
        }
    }
    seen
}

#[test]
fn reach_tiny_graph() {
    let (a, b, c) = (1, 2, 3);
    let paths = run_reach(&[(a, b), (b, c)], &[a], 10);
    assert_eq!(paths, BTreeSet::from([vec![a, b], vec![a, b, c]]));
    let mut reached: BTreeSet<u64> = paths.iter().map(|p| *p.last().unwrap()).collect();
    reached.insert(a);
    assert_eq!(reached, bfs(&[(a, b), (b, c)], a));
}

proptest! {
    #[test]
    fn reach_matches_bfs_and_paths_are_simple(
        links in prop::collection::vec((0u64..6, 0u64..6), 0..12),
        source in 0u64..6,
    ) {
        let links: Vec<(u64, u64)> = links.into_iter().filter(|(a, b)| a != b).collect();
        let paths = run_reach(&links, &[source], 16);
        let set: BTreeSet<(u64, u64)> = links.iter().copied().collect();
        for p in &paths {
            prop_assert_eq!(p[0], source);
            let distinct: BTreeSet<u64> = p.iter().copied().collect();
            prop_assert_eq!(distinct.len(), p.len());
            for w in p.windows(2) {
                prop_assert!(set.contains(&(w[0], w[1])));
            }
        }
        let mut reached: BTreeSet<u64> = paths.iter().map(|p| *p.last().unwrap()).collect();
        reached.insert(source);
        prop_assert_eq!(reached, bfs(&links, source));
    }

    #[test]
    fn join_is_independent_of_arrival_order(
        persons in prop::collection::vec(0u64..5, 0..6),
        sellers in prop::collection::vec(0u64..5, 0..8),
        seed in any::<u64>(),
    ) {
        let mut input: Vec<Record> = persons.iter().enumerate()
            .map(|(i, &id)| Record::Person(Person { id, date_time: i as u64, extra: 0 }))
            .chain(sellers.iter().enumerate().map(|(i, &s)| Record::Auction(Auction { id: i as u64, seller: s, category: 0, date_time: 0, extra: 0 })))
            .collect();
        // batch oracle
        let mut expect = BTreeMap::new();
        for &p in &persons {
            for (i, &s) in sellers.iter().enumerate() {
                if p == s {
                    *expect.entry((p, i as u64)).or_insert(0u32) += 1;
                }
            }
        }
        use rand::{seq::SliceRandom, SeedableRng};
        input.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let mut s = OperatorState::new();
        let mut got = BTreeMap::new();
        for r in &input {
            for o in apply(&LogicId::IncrementalJoin, &LogicParams::default(), &mut s, 0, 1, r, 0) {
                if let Record::Joined { person, auction, .. } = o {
                    *got.entry((person, auction)).or_insert(0u32) += 1;
                }
            }
        }
        prop_assert_eq!(got, expect);
    }
}

fn bids_query() -> Query {
    build_query(&QuerySpec::new(QueryId::Q12, 4)).unwrap()
}

fn bidders(log: &SourceLog) -> Vec<u64> {
    log.records()
        .filter_map(|r| match &r.record {
            Record::Bid(b) => Some(b.bidder),
            _ => None,
        })
        .collect()
}

#[test]
fn uniform_keys() {
    let cfg = GeneratorConfig { rate: 10_000.0, key_universe: 100, max_records: Some(10_000), ..Default::default() };
    let log = generate(&bids_query(), &cfg, 10.0).unwrap();
    let mut freq: BTreeMap<u64, u64> = BTreeMap::new();
    for k in bidders(&log) {
        *freq.entry(k).or_default() += 1;
    }
    assert_eq!(freq.len(), 100);
    let expected = 100.0f64;
    let chi2: f64 = freq.values().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    // 99.9% quantile of chi-square with 99 degrees of freedom is about 148.2
    assert!(chi2 < 148.2, "chi2 {chi2}");
}

#[test]
fn hot_ratio_bounds() {
    let cfg = GeneratorConfig { rate: 10_000.0, hot_ratio: 0.3, max_records: Some(10_000), ..Default::default() };
    let log = generate(&bids_query(), &cfg, 10.0).unwrap();
    let b = bidders(&log);
    assert_eq!(b.len(), 10_000);
    let hot = b.iter().filter(|&&k| k == 0).count();
    assert!((2800..=3200).contains(&hot), "{hot}");
}

#[test]
fn cyclic_frequencies() {
    let q = build_query(&QuerySpec::new(QueryId::Reach, 2)).unwrap();
    let cfg = GeneratorConfig { rate: 1000.0, max_records: Some(1000), ..Default::default() };
    let log = generate(&q, &cfg, 10.0).unwrap();
    let mut counts = [0f64; 4];
    for r in log.records() {
        let i = match r.record {
            Record::Link { .. } => 0,
            Record::ReachSource { .. } => 1,
            Record::DeleteLink { .. } => 2,
            Record::DeleteSource { .. } => 3,
            _ => unreachable!(),
        };
        counts[i] += 1.0;
    }
    for (c, p) in counts.iter().zip([0.60, 0.15, 0.20, 0.05]) {
        let sigma = (1000.0_f64 * p * (1.0 - p)).sqrt();
        assert!((c - 1000.0 * p).abs() <= 3.0 * sigma, "{counts:?}");
    }
}

#[test]
fn generation_is_deterministic_and_ordered() {
    let q = build_query(&QuerySpec::new(QueryId::Q3, 3)).unwrap();
    let cfg = GeneratorConfig { rate: 500.0, seed: 9, ..Default::default() };
    let a = generate(&q, &cfg, 5.0).unwrap();
    assert_eq!(a, generate(&q, &cfg, 5.0).unwrap());
    assert!(a.total() > 2000);
    for parts in a.streams.values() {
        for p in parts {
            assert!(p.windows(2).all(|w| w[0].time <= w[1].time));
        }
    }
    assert!(generate(&q, &GeneratorConfig { rate: 0.0, ..cfg }, 5.0).is_err());
}

#[test]
fn fused_step_equals_select_then_project() {
    let params = LogicParams { max_path_len: 3, ..LogicParams::default() };
    let pairs = [
        Record::JoinedPair { path: vec![1, 2], to: 3 },
        Record::JoinedPair { path: vec![1, 2], to: 1 },
        Record::JoinedPair { path: vec![1, 2, 3], to: 4 },
        Record::Link { from: 1, to: 2 },
    ];
    for r in &pairs {
        let split: Vec<Record> = apply(&LogicId::ReachSelect, &params, &mut OperatorState::new(), 0, 1, r, 0)
            .iter()
            .flat_map(|s| apply(&LogicId::ReachProject, &params, &mut OperatorState::new(), 0, 1, s, 0))
            .collect();
        assert_eq!(apply(&LogicId::ReachStep, &params, &mut OperatorState::new(), 0, 1, r, 0), split);
    }
}
