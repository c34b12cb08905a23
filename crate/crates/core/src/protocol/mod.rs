//! Network-coding-aware NDN node: names, Bloom filters, PIT/CS/FIB and
//! the counter-based forwarding strategy.

mod bloom;
mod name;
mod node;
mod tables;

use thiserror::Error;

pub use bloom::{BloomFilter, BloomMode, BloomParams, BLOOM_BITS};
pub use name::ContentName;
pub use node::{Action, FacePlan, NodeEngine, NodeSetup, NodeStats, Outbox, TraceEvent};
pub use tables::{
    build_bloom, cs_lookup, cs_update, pit_lookup_data, pit_lookup_interest, serving_entries, CsEntry, DataObject, Face,
    FibEntry, Interest, PitEntry,
};

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed name: {0}")]
    MalformedName(String),
    #[error(transparent)]
    Coding(#[from] crate::prlnc::PrlncError),
}
