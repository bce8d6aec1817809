use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifies one editing replica inside a trial. Replica 0 is reserved for
/// the server's dictation writer.
pub type ReplicaId = u32;

/// Globally unique identity of an operation (and, for inserts, of the
/// character it introduced).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemId {
    pub replica: ReplicaId,
    pub counter: u64,
}

impl ItemId {
    pub const fn new(replica: ReplicaId, counter: u64) -> Self {
        Self { replica, counter }
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.counter, self.replica)
    }
}

/// Lamport timestamp paired with the issuing replica. Compared
/// lexicographically, which gives a total order over all operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stamp {
    pub lamport: u64,
    pub replica: ReplicaId,
}

impl Stamp {
    pub const fn new(lamport: u64, replica: ReplicaId) -> Self {
        Self { lamport, replica }
    }
}

impl Ord for Stamp {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.lamport, self.replica).cmp(&(other.lamport, other.replica))
    }
}

impl PartialOrd for Stamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One character of the document, tombstoned or not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub id: ItemId,
    /// `None` is the document root.
    pub parent: Option<ItemId>,
    pub lamport: u64,
    pub content: char,
    pub tombstone: bool,
}

impl Item {
    pub fn stamp(&self) -> Stamp {
        Stamp::new(self.lamport, self.id.replica)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Bias {
    Before,
    After,
}

/// Edit-stable position: a character identity plus the side of it the
/// position sticks to. `item == None` is the document start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Anchor {
    pub item: Option<ItemId>,
    pub bias: Bias,
}

impl Anchor {
    pub const ROOT: Anchor = Anchor {
        item: None,
        bias: Bias::Before,
    };

    pub const fn new(item: ItemId, bias: Bias) -> Self {
        Self {
            item: Some(item),
            bias,
        }
    }

    pub fn is_root(&self) -> bool {
        self.item.is_none()
    }
}

/// A formatting key/value over an anchored range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkSpan {
    pub start: Anchor,
    pub end: Anchor,
    pub key: String,
    pub value: String,
    pub stamp: Stamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OpKind {
    Insert {
        parent: Option<ItemId>,
        content: char,
    },
    Delete {
        target: ItemId,
    },
    Mark {
        start: Anchor,
        end: Anchor,
        key: String,
        value: String,
    },
}

/// A replicated document operation. Every op consumes one counter value of
/// its replica, so version vectors cover deletes and marks too.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocOp {
    pub id: ItemId,
    pub lamport: u64,
    #[serde(flatten)]
    pub kind: OpKind,
}

impl DocOp {
    pub fn stamp(&self) -> Stamp {
        Stamp::new(self.lamport, self.id.replica)
    }

    pub fn is_insert(&self) -> bool {
        matches!(self.kind, OpKind::Insert { .. })
    }

    pub fn is_delete(&self) -> bool {
        matches!(self.kind, OpKind::Delete { .. })
    }

    pub fn is_mark(&self) -> bool {
        matches!(self.kind, OpKind::Mark { .. })
    }

    /// Item ids this op needs integrated before it can be applied.
    pub fn dependencies(&self) -> Vec<ItemId> {
        match &self.kind {
            OpKind::Insert { parent, .. } => parent.iter().copied().collect(),
            OpKind::Delete { target } => vec![*target],
            OpKind::Mark { start, end, .. } => {
                start.item.iter().chain(end.item.iter()).copied().collect()
            }
        }
    }
}

/// Result of feeding a batch of remote ops to a document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppliedReport {
    /// Ops integrated during this call, including previously buffered ones
    /// that became ready.
    pub applied: usize,
    /// Ops still waiting for a dependency after this call.
    pub deferred: usize,
    pub duplicates: usize,
    pub rejected: Vec<super::DocError>,
}
