//! Protocol state machines driven by the simulation kernel.
//!
//! * [`coordinated`] — round coordinator and per-instance marker alignment.
//! * [`uncoordinated`] — per-channel sequence metadata, upstream send logs
//!   and receiver-side deduplication, plus the checkpoint record shared by
//!   all protocols.
//! * [`cic`] — the HMNR clock bundle layered on the uncoordinated path.

pub mod cic;
pub mod coordinated;
pub mod uncoordinated;

use thiserror::Error;

use crate::dataflow::ChannelId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("stale marker at instance {instance}: expected round {expected}, got {got}")]
    StaleMarker { instance: usize, expected: u64, got: u64 },
    #[error("sequence gap on channel {channel}: expected {expected}, got {got}")]
    SeqGap { channel: ChannelId, expected: u64, got: u64 },
    #[error("data message on channel {channel} carries no piggyback")]
    MissingPiggyback { channel: ChannelId },
    #[error("message {seq} on channel {channel} needed for replay was garbage collected")]
    LogTruncated { channel: ChannelId, seq: u64 },
}
