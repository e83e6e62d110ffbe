//! Record vocabulary carried by data messages and the fixed size model.
//!
//! Sizes are not derived from any serialization format. Every integer field
//! counts [`INT_BYTES`], every `extra` filler counts its declared length in
//! bytes and paths count one integer per node.

use serde::{Deserialize, Serialize};

pub const INT_BYTES: usize = 8;

/// Per-message envelope bytes (sequence number and ingestion timestamp).
/// Present under every protocol, including the checkpoint-free baseline.
pub const ENVELOPE_BYTES: usize = 2 * INT_BYTES;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Bid {
    pub auction: u64,
    pub bidder: u64,
    pub price: i64,
    pub date_time: u64,
    pub extra: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Person {
    pub id: u64,
    pub date_time: u64,
    pub extra: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Auction {
    pub id: u64,
    pub seller: u64,
    pub category: u64,
    pub date_time: u64,
    pub extra: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Record {
    Bid(Bid),
    Person(Person),
    Auction(Auction),
    /// Output of the bid-transforming map.
    MappedBid { auction: u64, bidder: u64, price: i64, extra: u32 },
    /// Person/auction join result; `window` is 0 for the unwindowed join.
    Joined { person: u64, auction: u64, window: u64 },
    /// Running count of one key within one tumbling window.
    WindowCount { key: u64, window: u64, count: u64 },
    Link { from: u64, to: u64 },
    DeleteLink { from: u64, to: u64 },
    /// A reachability source: `path[0]` is the source node, the last node is
    /// the currently reachable node.
    ReachSource { path: Vec<u64> },
    DeleteSource { node: u64 },
    /// A source path joined with an outgoing link of its last node.
    JoinedPair { path: Vec<u64>, to: u64 },
}

impl Record {
    pub fn size_bytes(&self) -> usize {
        match self {
            Record::Bid(b) => 4 * INT_BYTES + b.extra as usize,
            Record::Person(p) => 2 * INT_BYTES + p.extra as usize,
            Record::Auction(a) => 4 * INT_BYTES + a.extra as usize,
            Record::MappedBid { extra, .. } => 3 * INT_BYTES + *extra as usize,
            Record::Joined { .. } => 3 * INT_BYTES,
            Record::WindowCount { .. } => 3 * INT_BYTES,
            Record::Link { .. } | Record::DeleteLink { .. } => 2 * INT_BYTES,
            Record::ReachSource { path } => INT_BYTES + path.len() * INT_BYTES,
            Record::DeleteSource { .. } => INT_BYTES,
            Record::JoinedPair { path, .. } => 2 * INT_BYTES + path.len() * INT_BYTES,
        }
    }

    /// Short tag used in traces.
    pub fn tag(&self) -> &'static str {
        match self {
            Record::Bid(_) => "bid",
            Record::Person(_) => "person",
            Record::Auction(_) => "auction",
            Record::MappedBid { .. } => "mapped",
            Record::Joined { .. } => "joined",
            Record::WindowCount { .. } => "wcount",
            Record::Link { .. } => "link",
            Record::DeleteLink { .. } => "dellink",
            Record::ReachSource { .. } => "rsource",
            Record::DeleteSource { .. } => "delsource",
            Record::JoinedPair { .. } => "pair",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_model() {
        let bid = Record::Bid(Bid { auction: 1, bidder: 2, price: 3, date_time: 4, extra: 10 });
        assert_eq!(bid.size_bytes(), 42);
        assert_eq!(Record::ReachSource { path: vec![1, 2, 3] }.size_bytes(), 32);
        assert_eq!(Record::JoinedPair { path: vec![1], to: 2 }.size_bytes(), 24);
    }
}
