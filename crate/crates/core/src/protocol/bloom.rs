use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::prlnc::splitmix64;

/// Hashed-filter parameters. The bit array is fixed at 128 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BloomParams {
    pub hashes: u32,
    pub seed: u64,
}

impl Default for BloomParams {
    fn default() -> Self {
        Self { hashes: 4, seed: 0x5EED_B100 }
    }
}

/// How a deployment represents client sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BloomMode {
    Hashed(BloomParams),
    /// Explicit set, no false positives.
    Exact,
}

impl BloomMode {
    pub fn empty(self) -> BloomFilter {
        match self {
            BloomMode::Hashed(params) => BloomFilter::Hashed { bits: 0, params },
            BloomMode::Exact => BloomFilter::Exact(BTreeSet::new()),
        }
    }

    pub fn of(self, ids: impl IntoIterator<Item = u32>) -> BloomFilter {
        let mut f = self.empty();
        for id in ids {
            f.insert(id);
        }
        f
    }
}

/// Client-id set carried by Interests, Data objects and table entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BloomFilter {
    Hashed { bits: u128, params: BloomParams },
    Exact(BTreeSet<u32>),
}

pub const BLOOM_BITS: u32 = 128;

/// Bit mask of `id` under double hashing: `h1 + i*h2 mod m`.
fn mask(params: BloomParams, id: u32) -> u128 {
    let h1 = splitmix64(params.seed ^ u64::from(id));
    let h2 = splitmix64(h1 ^ params.seed.rotate_left(32)) | 1;
    let mut m = 0u128;
    for i in 0..u64::from(params.hashes) {
        m |= 1u128 << (h1.wrapping_add(i.wrapping_mul(h2)) % u64::from(BLOOM_BITS));
    }
    m
}

impl BloomFilter {
    pub fn insert(&mut self, id: u32) {
        match self {
            BloomFilter::Hashed { bits, params } => *bits |= mask(*params, id),
            BloomFilter::Exact(set) => {
                set.insert(id);
            }
        }
    }

    pub fn contains(&self, id: u32) -> bool {
        match self {
            BloomFilter::Hashed { bits, params } => {
                let m = mask(*params, id);
                *bits & m == m
            }
            BloomFilter::Exact(set) => set.contains(&id),
        }
    }

    pub fn union_with(&mut self, other: &BloomFilter) {
        match (self, other) {
            (BloomFilter::Hashed { bits, .. }, BloomFilter::Hashed { bits: b, .. }) => *bits |= b,
            (BloomFilter::Exact(a), BloomFilter::Exact(b)) => a.extend(b.iter().copied()),
            _ => panic!("union of Bloom filters in different modes"),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            BloomFilter::Hashed { bits, .. } => *bits == 0,
            BloomFilter::Exact(set) => set.is_empty(),
        }
    }

    /// Members of `roster` the filter reports, in roster order.
    pub fn members<'a>(&'a self, roster: &'a [u32]) -> impl Iterator<Item = u32> + 'a {
        roster.iter().copied().filter(|&u| self.contains(u))
    }
}

/// Hex bit array for hashed filters, `+`-joined ids for exact ones
/// (`-` when empty).
impl fmt::Display for BloomFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BloomFilter::Hashed { bits, .. } => write!(f, "{bits:032x}"),
            BloomFilter::Exact(set) if set.is_empty() => f.write_str("-"),
            BloomFilter::Exact(set) => {
                for (i, id) in set.iter().enumerate() {
                    if i > 0 {
                        f.write_str("+")?;
                    }
                    write!(f, "{id}")?;
                }
                Ok(())
            }
        }
    }
}
