use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Query, WorkloadError};
use crate::dataflow::{Auction, Bid, Person, Record};
use crate::time::{ticks, Ticks, TICKS_PER_UNIT};

/// Event-kind probabilities of the reachability generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CyclicProbs {
    pub new_link: f64,
    pub new_source: f64,
    pub delete_link: f64,
    pub delete_source: f64,
}

impl Default for CyclicProbs {
    fn default() -> Self {
        CyclicProbs { new_link: 0.60, new_source: 0.15, delete_link: 0.20, delete_source: 0.05 }
    }
}

impl CyclicProbs {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let all = [self.new_link, self.new_source, self.delete_link, self.delete_source];
        if all.iter().any(|p| !(0.0..=1.0).contains(p)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(WorkloadError::Invalid("cyclic probabilities must be in [0,1] and sum to 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Records per time unit over all streams of the query.
    pub rate: f64,
    /// Fraction of keyed records drawn from the hot set.
    pub hot_ratio: f64,
    pub hot_set_size: u64,
    /// Keys (bidders, sellers) are drawn from `0..key_universe`.
    pub key_universe: u64,
    pub seed: u64,
    /// Relative inter-arrival jitter in `[0, 1]`.
    pub jitter: f64,
    /// Filler bytes per NexMark record.
    pub extra_bytes: u32,
    pub cyclic_probs: CyclicProbs,
    pub node_universe: u64,
    /// Stop after this many records even before the horizon.
    pub max_records: Option<usize>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            rate: 1000.0,
            hot_ratio: 0.0,
            hot_set_size: 1,
            key_universe: 1000,
            seed: 1,
            jitter: 1.0,
            extra_bytes: 32,
            cyclic_probs: CyclicProbs::default(),
            node_universe: 2000,
            max_records: None,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(WorkloadError::Invalid("rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.hot_ratio) {
            return Err(WorkloadError::Invalid("hot_ratio must be in [0, 1)".into()));
        }
        if self.hot_set_size == 0 || self.hot_set_size >= self.key_universe {
            return Err(WorkloadError::Invalid("hot_set_size must be in [1, key_universe)".into()));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(WorkloadError::Invalid("jitter must be in [0, 1]".into()));
        }
        if self.node_universe < 2 {
            return Err(WorkloadError::Invalid("node_universe must be at least 2".into()));
        }
        self.cyclic_probs.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    /// Ingestion time.
    pub time: Ticks,
    pub record: Record,
}

/// Replayable input: per stream, per partition, records in time order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceLog {
    pub streams: BTreeMap<String, Vec<Vec<SourceRecord>>>,
}

impl SourceLog {
    pub fn partition(&self, stream: &str, index: u32) -> &[SourceRecord] {
        self.streams.get(stream).and_then(|p| p.get(index as usize)).map_or(&[], |v| v.as_slice())
    }

    pub fn total(&self) -> usize {
        self.streams.values().flatten().map(Vec::len).sum()
    }

    pub fn records(&self) -> impl Iterator<Item = &SourceRecord> {
        self.streams.values().flatten().flatten()
    }
}

struct KeyDraw {
    hot_ratio: f64,
    hot_set: u64,
    universe: u64,
}

impl KeyDraw {
    fn draw<R: Rng>(&self, rng: &mut R) -> u64 {
        if self.hot_ratio == 0.0 {
            rng.gen_range(0..self.universe)
        } else if rng.gen_bool(self.hot_ratio) {
            rng.gen_range(0..self.hot_set)
        } else {
            rng.gen_range(self.hot_set..self.universe)
        }
    }
}

/// Generates the input of `query` over `[0, horizon)` time units.
///
/// Records are spread round-robin over the partitions of their stream.
/// NexMark queries draw persons and auctions 1:3; bids are the only stream
/// of Q1 and Q12.
pub fn generate(query: &Query, cfg: &GeneratorConfig, horizon: f64) -> Result<SourceLog, WorkloadError> {
    cfg.validate()?;
    let streams: BTreeMap<String, u32> = query.streams().into_iter().collect();
    let mut log = SourceLog {
        streams: streams.iter().map(|(s, &p)| (s.clone(), vec![Vec::new(); p as usize])).collect(),
    };
    let mut next_part: BTreeMap<String, u32> = streams.keys().map(|s| (s.clone(), 0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let keys = KeyDraw { hot_ratio: cfg.hot_ratio, hot_set: cfg.hot_set_size, universe: cfg.key_universe };
    let end = ticks(horizon);
    let gap = TICKS_PER_UNIT as f64 / cfg.rate;
    let mut t = 0.0f64;
    let mut emitted = 0usize;
    let mut persons = 0u64;
    let mut auctions = 0u64;
    let mut links: BTreeSet<(u64, u64)> = BTreeSet::new();
    let mut sources: BTreeSet<u64> = BTreeSet::new();
    loop {
        t += gap * (1.0 + cfg.jitter * rng.gen_range(-1.0..1.0));
        let time = t.round() as Ticks;
        if time >= end || cfg.max_records.is_some_and(|m| emitted >= m) {
            break;
        }
        let (stream, record) = if streams.contains_key("bids") {
            let bid = Bid {
                auction: rng.gen_range(0..cfg.key_universe),
                bidder: keys.draw(&mut rng),
                price: rng.gen_range(1..10_000),
                date_time: time,
                extra: cfg.extra_bytes,
            };
            ("bids", Record::Bid(bid))
        } else if streams.contains_key("persons") {
            if rng.gen_bool(0.25) {
                persons += 1;
                ("persons", Record::Person(Person { id: persons - 1, date_time: time, extra: cfg.extra_bytes }))
            } else {
                auctions += 1;
                let a = Auction {
                    id: auctions - 1,
                    seller: keys.draw(&mut rng),
                    category: rng.gen_range(0..10),
                    date_time: time,
                    extra: cfg.extra_bytes,
                };
                ("auctions", Record::Auction(a))
            }
        } else if streams.contains_key("links") {
            cyclic_event(&mut rng, cfg, &mut links, &mut sources)
        } else {
            return Err(WorkloadError::Invalid("query reads no known stream".into()));
        };
        let parts = streams[stream];
        let part = next_part.get_mut(stream).expect("stream registered");
        let idx = *part;
        *part = (*part + 1) % parts;
        log.streams.get_mut(stream).expect("stream registered")[idx as usize].push(SourceRecord { time, record });
        emitted += 1;
    }
    Ok(log)
}

fn cyclic_event<R: Rng>(
    rng: &mut R,
    cfg: &GeneratorConfig,
    links: &mut BTreeSet<(u64, u64)>,
    sources: &mut BTreeSet<u64>,
) -> (&'static str, Record) {
    let p = cfg.cyclic_probs;
    let u: f64 = rng.gen_range(0.0..1.0);
    let n = cfg.node_universe;
    if u < p.new_link {
        let from = rng.gen_range(0..n);
        let mut to = rng.gen_range(0..n - 1);
        if to >= from {
            to += 1;
        }
        links.insert((from, to));
        ("links", Record::Link { from, to })
    } else if u < p.new_link + p.new_source {
        let node = rng.gen_range(0..n);
        sources.insert(node);
        ("sources", Record::ReachSource { path: vec![node] })
    } else if u < p.new_link + p.new_source + p.delete_link {
        let (from, to) = if links.is_empty() {
            // Nothing to delete: a no-op deletion of an arbitrary pair.
            (rng.gen_range(0..n), rng.gen_range(0..n))
        } else {
            let pick = *links.iter().nth(rng.gen_range(0..links.len())).expect("in range");
            links.remove(&pick);
            pick
        };
        ("links", Record::DeleteLink { from, to })
    } else {
        let node = if sources.is_empty() {
            rng.gen_range(0..n)
        } else {
            let pick = *sources.iter().nth(rng.gen_range(0..sources.len())).expect("in range");
            sources.remove(&pick);
            pick
        };
        ("sources", Record::DeleteSource { node })
    }
}
