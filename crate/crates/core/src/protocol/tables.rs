//! PIT, CS and FIB entries and the lookup/update procedures over them.
//!
//! Every procedure enumerates clients through the node's roster of known
//! client ids, since a Bloom filter cannot list its own members.

use super::bloom::{BloomFilter, BloomMode};
use super::name::ContentName;
use crate::prlnc::CodedPacket;

/// Where an Interest came from; Data for it goes back the same way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Face {
    /// The local application (a client's player).
    App,
    /// Link index in the network graph. An Interest that arrived over
    /// link `e` is answered by Data travelling `e` in reverse.
    Link(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interest {
    pub name: ContentName,
    pub bf: BloomFilter,
    pub nonce: u64,
    /// Time the Interest left the previous hop.
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataObject {
    pub name: ContentName,
    /// Clients this object may be forwarded to.
    pub bf: BloomFilter,
    pub packet: CodedPacket,
    /// Absolute expiry time (the generation's playback deadline).
    pub expiry: f64,
}

/// One pending Interest with the faces and filters aggregated onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct PitEntry {
    pub tuples: Vec<(Face, BloomFilter)>,
    /// Union of the tuple filters, kept in step with `tuples`.
    pub union: BloomFilter,
    pub nonce: u64,
    pub inserted: f64,
}

impl PitEntry {
    pub fn new(face: Face, bf: BloomFilter, nonce: u64, inserted: f64) -> Self {
        Self { union: bf.clone(), tuples: vec![(face, bf)], nonce, inserted }
    }

    pub fn append(&mut self, face: Face, bf: BloomFilter) {
        self.union.union_with(&bf);
        self.tuples.push((face, bf));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsEntry {
    pub data: DataObject,
    /// Clients this object has already been forwarded to.
    pub sent: BloomFilter,
}

impl CsEntry {
    pub fn new(data: DataObject, mode: BloomMode) -> Self {
        Self { data, sent: mode.empty() }
    }

    fn serves(&self, u: u32) -> bool {
        self.data.bf.contains(u) && !self.sent.contains(u)
    }
}

/// Outgoing faces and their remaining Interest budgets for one name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FibEntry {
    /// `(link, remaining counter)`; removed from the table once every
    /// counter is zero.
    pub faces: Vec<(usize, u32)>,
}

impl FibEntry {
    pub fn exhausted(&self) -> bool {
        self.faces.iter().all(|&(_, c)| c == 0)
    }
}

/// First pending Interest (in insertion order) whose aggregated filter
/// holds none of the incoming Interest's clients.
pub fn pit_lookup_interest(bf: &BloomFilter, pending: &[PitEntry], roster: &[u32]) -> Option<usize> {
    let clients: Vec<u32> = bf.members(roster).collect();
    pending.iter().position(|p| clients.iter().all(|&u| !p.union.contains(u)))
}

/// Searches the cached objects for one unsent object per client of `bf`.
///
/// Returns the serving pairs `(entry index, client)` when every client is
/// covered. A filter naming no known client matches nothing: there would
/// be no object to combine and no one to deliver to.
pub fn cs_lookup(bf: &BloomFilter, entries: &[CsEntry], roster: &[u32]) -> Option<Vec<(usize, u32)>> {
    let mut remaining: Vec<u32> = bf.members(roster).collect();
    if remaining.is_empty() {
        return None;
    }
    let mut serving = Vec::new();
    for (i, d) in entries.iter().enumerate() {
        if remaining.is_empty() {
            break;
        }
        remaining.retain(|&u| {
            if d.serves(u) {
                serving.push((i, u));
                false
            } else {
                true
            }
        });
    }
    remaining.is_empty().then_some(serving)
}

/// Distinct entry indices of a serving set, in CS order.
pub fn serving_entries(serving: &[(usize, u32)]) -> Vec<usize> {
    let mut v: Vec<usize> = serving.iter().map(|&(i, _)| i).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Marks each client of `bf` as sent in the first serving entry that
/// still owes it.
pub fn cs_update(bf: &BloomFilter, entries: &mut [CsEntry], serving: &[usize], roster: &[u32]) {
    for u in bf.members(roster) {
        if let Some(&i) = serving.iter().find(|&&i| entries[i].serves(u)) {
            entries[i].sent.insert(u);
        }
    }
}

/// First pending Interest the cached objects can satisfy, with its
/// serving pairs.
pub fn pit_lookup_data(
    pending: &[PitEntry],
    entries: &[CsEntry],
    roster: &[u32],
) -> Option<(usize, Vec<(usize, u32)>)> {
    pending.iter().enumerate().find_map(|(k, p)| cs_lookup(&p.union, entries, roster).map(|s| (k, s)))
}

/// Filter for the Interest forwarded with remaining counter `counter` on a
/// link whose per-generation actual count is `z` and whose conceptual
/// per-client counts are `r`. Client `u` lands in every `floor(z/r_u)`-th
/// Interest, at most `r_u` times.
pub fn build_bloom(counter: u32, z: u32, r: &[(u32, u32)], mode: BloomMode) -> BloomFilter {
    let mut bf = mode.empty();
    let p = (z + 1).saturating_sub(counter);
    for &(u, ru) in r {
        if ru == 0 {
            continue;
        }
        let t = z / ru;
        if t > 0 && p % t == 0 && p / t <= ru {
            bf.insert(u);
        }
    }
    bf
}
