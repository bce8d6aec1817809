use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize};

use super::types::{ItemId, ReplicaId};

/// Highest contiguously-applied counter per replica. On the wire it is a
/// JSON object keyed by the replica id in decimal.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct VersionVector {
    heads: BTreeMap<ReplicaId, u64>,
}

// Keys arrive as strings, and buffered (flattened) content will not turn
// them back into integers on its own.
impl<'de> Deserialize<'de> for VersionVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, u64>::deserialize(d)?;
        let mut vv = VersionVector::new();
        for (k, c) in raw {
            let r = k
                .parse::<ReplicaId>()
                .map_err(|_| serde::de::Error::custom(format!("replica id {k:?} is not a number")))?;
            vv.set(r, c);
        }
        Ok(vv)
    }
}

impl VersionVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, replica: ReplicaId) -> u64 {
        self.heads.get(&replica).copied().unwrap_or(0)
    }

    pub fn set(&mut self, replica: ReplicaId, counter: u64) {
        if counter == 0 {
            self.heads.remove(&replica);
        } else {
            self.heads.insert(replica, counter);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn includes(&self, id: ItemId) -> bool {
        id.counter <= self.get(id.replica)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ReplicaId, u64)> + '_ {
        self.heads.iter().map(|(r, c)| (*r, *c))
    }

    /// True if every component of `self` is at least the matching one in
    /// `other`.
    pub fn dominates(&self, other: &VersionVector) -> bool {
        other.iter().all(|(r, c)| self.get(r) >= c)
    }
}

impl FromIterator<(ReplicaId, u64)> for VersionVector {
    fn from_iter<T: IntoIterator<Item = (ReplicaId, u64)>>(iter: T) -> Self {
        let mut vv = VersionVector::new();
        for (r, c) in iter {
            vv.set(r, c);
        }
        vv
    }
}

/// Tracks applied op ids so the contiguous prefix can advance when gaps fill.
#[derive(Debug, Clone, Default)]
pub(crate) struct AppliedSet {
    prefix: VersionVector,
    above: BTreeMap<ReplicaId, BTreeSet<u64>>,
}

impl AppliedSet {
    pub fn contains(&self, id: ItemId) -> bool {
        self.prefix.includes(id)
            || self
                .above
                .get(&id.replica)
                .is_some_and(|s| s.contains(&id.counter))
    }

    pub fn insert(&mut self, id: ItemId) {
        let head = self.prefix.get(id.replica);
        if id.counter <= head {
            return;
        }
        if id.counter != head + 1 {
            self.above.entry(id.replica).or_default().insert(id.counter);
            return;
        }
        let mut head = id.counter;
        if let Some(rest) = self.above.get_mut(&id.replica) {
            while rest.remove(&(head + 1)) {
                head += 1;
            }
            if rest.is_empty() {
                self.above.remove(&id.replica);
            }
        }
        self.prefix.set(id.replica, head);
    }

    pub fn prefix(&self) -> &VersionVector {
        &self.prefix
    }

    pub fn max_counter(&self, replica: ReplicaId) -> u64 {
        let above = self
            .above
            .get(&replica)
            .and_then(|s| s.iter().next_back().copied())
            .unwrap_or(0);
        above.max(self.prefix.get(replica))
    }
}
