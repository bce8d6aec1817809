use std::collections::{BTreeMap, HashMap};

use super::types::{
    Anchor, AppliedReport, Bias, DocOp, Item, ItemId, MarkSpan, OpKind, ReplicaId, Stamp,
};
use super::version::{AppliedSet, VersionVector};
use super::DocError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct MarkKey {
    start: Anchor,
    end: Anchor,
    key: String,
}

/// A mark projected onto the current text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedMark {
    pub start: usize,
    pub end: usize,
    pub key: String,
    pub value: String,
}

/// Causal-tree character sequence.
///
/// Every character remembers the visible character it was typed after (its
/// parent). Document order is a depth-first walk of that tree in which the
/// children of a node are visited newest first, ordered by descending
/// `(lamport, replica)`. Deleted characters stay in the tree as tombstones so
/// that concurrent operations and anchors referencing them keep resolving.
#[derive(Debug, Clone)]
pub struct Doc {
    replica: ReplicaId,
    counter: u64,
    lamport: u64,
    items: HashMap<ItemId, Item>,
    /// Document order, tombstones included.
    order: Vec<ItemId>,
    visible: usize,
    applied: AppliedSet,
    /// Integrated ops in integration order; always causally valid.
    log: Vec<DocOp>,
    pending: Vec<DocOp>,
    marks: BTreeMap<MarkKey, (String, Stamp)>,
}

impl Doc {
    pub fn new(replica: ReplicaId) -> Self {
        Self {
            replica,
            counter: 0,
            lamport: 0,
            items: HashMap::new(),
            order: Vec::new(),
            visible: 0,
            applied: AppliedSet::default(),
            log: Vec::new(),
            pending: Vec::new(),
            marks: BTreeMap::new(),
        }
    }

    pub fn replica(&self) -> ReplicaId {
        self.replica
    }

    pub fn lamport(&self) -> u64 {
        self.lamport
    }

    pub fn len(&self) -> usize {
        self.visible
    }

    pub fn is_empty(&self) -> bool {
        self.visible == 0
    }

    pub fn text(&self) -> String {
        self.order
            .iter()
            .map(|id| &self.items[id])
            .filter(|item| !item.tombstone)
            .map(|item| item.content)
            .collect()
    }

    pub fn version_vector(&self) -> VersionVector {
        self.applied.prefix().clone()
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.items.contains_key(&id)
    }

    pub fn item(&self, id: ItemId) -> Option<&Item> {
        self.items.get(&id)
    }

    pub fn has_applied(&self, id: ItemId) -> bool {
        self.applied.contains(id)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// All integrated ops, in an order where dependencies precede dependents.
    pub fn ops(&self) -> &[DocOp] {
        &self.log
    }

    /// Advances the Lamport clock and returns a stamp for a non-document
    /// record (annotations, label definitions) that must order with edits.
    pub fn next_stamp(&mut self) -> Stamp {
        self.lamport += 1;
        Stamp::new(self.lamport, self.replica)
    }

    pub fn observe_lamport(&mut self, lamport: u64) {
        self.lamport = self.lamport.max(lamport);
    }

    fn next_id(&mut self) -> (ItemId, u64) {
        self.counter += 1;
        self.lamport += 1;
        (ItemId::new(self.replica, self.counter), self.lamport)
    }

    /// Position in `order` of the `index`-th visible item.
    fn visible_position(&self, index: usize) -> Option<usize> {
        self.order
            .iter()
            .enumerate()
            .filter(|(_, id)| !self.items[*id].tombstone)
            .nth(index)
            .map(|(pos, _)| pos)
    }

    fn position_of(&self, id: ItemId) -> Option<usize> {
        self.order.iter().position(|x| *x == id)
    }

    pub fn local_insert(&mut self, index: usize, text: &str) -> Result<Vec<DocOp>, DocError> {
        if index > self.visible {
            return Err(DocError::IndexOutOfRange {
                index,
                len: self.visible,
            });
        }
        let (mut parent, mut pos) = if index == 0 {
            (None, None)
        } else {
            let p = self
                .visible_position(index - 1)
                .expect("index checked against visible length");
            (Some(self.order[p]), Some(p))
        };
        let mut ops = Vec::with_capacity(text.len());
        for content in text.chars() {
            let (id, lamport) = self.next_id();
            let op = DocOp {
                id,
                lamport,
                kind: OpKind::Insert { parent, content },
            };
            // A fresh local item outranks every existing sibling, so it lands
            // directly after its parent.
            let at = pos.map_or(0, |p| p + 1);
            self.place_item(id, parent, lamport, content, at);
            self.record(op.clone());
            parent = Some(id);
            pos = Some(at);
            ops.push(op);
        }
        Ok(ops)
    }

    pub fn local_delete(&mut self, index: usize, len: usize) -> Result<Vec<DocOp>, DocError> {
        if index.checked_add(len).is_none_or(|end| end > self.visible) {
            return Err(DocError::IndexOutOfRange {
                index: index.saturating_add(len),
                len: self.visible,
            });
        }
        let targets: Vec<ItemId> = self
            .order
            .iter()
            .filter(|id| !self.items[*id].tombstone)
            .skip(index)
            .take(len)
            .copied()
            .collect();
        let mut ops = Vec::with_capacity(len);
        for target in targets {
            let (id, lamport) = self.next_id();
            let op = DocOp {
                id,
                lamport,
                kind: OpKind::Delete { target },
            };
            self.tombstone(target);
            self.record(op.clone());
            ops.push(op);
        }
        Ok(ops)
    }

    pub fn set_mark(
        &mut self,
        start: Anchor,
        end: Anchor,
        key: &str,
        value: &str,
    ) -> Result<DocOp, DocError> {
        let s = self.resolve_index(start)?;
        let e = self.resolve_index(end)?;
        if s > e {
            return Err(DocError::RangeInverted { start: s, end: e });
        }
        if key.is_empty() {
            return Err(DocError::MalformedOp {
                id: ItemId::new(self.replica, self.counter + 1),
                reason: "mark key is empty".into(),
            });
        }
        let (id, lamport) = self.next_id();
        let op = DocOp {
            id,
            lamport,
            kind: OpKind::Mark {
                start,
                end,
                key: key.to_owned(),
                value: value.to_owned(),
            },
        };
        self.integrate(&op);
        Ok(op)
    }

    /// Integrates remote ops in any order. Ops whose dependencies are
    /// missing are buffered until those arrive; duplicates are ignored.
    pub fn apply_remote<I>(&mut self, ops: I) -> AppliedReport
    where
        I: IntoIterator<Item = DocOp>,
    {
        let mut report = AppliedReport::default();
        for op in ops {
            if let Err(e) = self.check_structure(&op) {
                report.rejected.push(e);
                continue;
            }
            if self.applied.contains(op.id) || self.pending.iter().any(|p| p.id == op.id) {
                if let Some(e) = self.conflicting_duplicate(&op) {
                    report.rejected.push(e);
                } else {
                    report.duplicates += 1;
                }
                continue;
            }
            if !self.is_ready(&op) {
                self.pending.push(op);
                continue;
            }
            match self.integrate_checked(&op) {
                Ok(()) => {
                    report.applied += 1;
                    report.applied += self.drain_pending(&mut report.rejected);
                }
                Err(e) => report.rejected.push(e),
            }
        }
        report.deferred = self.pending.len();
        report
    }

    fn drain_pending(&mut self, rejected: &mut Vec<DocError>) -> usize {
        let mut applied = 0;
        loop {
            let Some(i) = self.pending.iter().position(|op| self.is_ready(op)) else {
                return applied;
            };
            let op = self.pending.remove(i);
            match self.integrate_checked(&op) {
                Ok(()) => applied += 1,
                Err(e) => rejected.push(e),
            }
        }
    }

    fn conflicting_duplicate(&self, op: &DocOp) -> Option<DocError> {
        let existing = self
            .log
            .iter()
            .chain(self.pending.iter())
            .find(|p| p.id == op.id)?;
        (existing != op).then(|| DocError::MalformedOp {
            id: op.id,
            reason: "id reused with a different payload".into(),
        })
    }

    fn check_structure(&self, op: &DocOp) -> Result<(), DocError> {
        let malformed = |reason: &str| {
            Err(DocError::MalformedOp {
                id: op.id,
                reason: reason.into(),
            })
        };
        if op.id.counter == 0 {
            return malformed("counter must be positive");
        }
        if op.lamport == 0 {
            return malformed("lamport must be positive");
        }
        match &op.kind {
            OpKind::Insert { parent, .. } => {
                if *parent == Some(op.id) {
                    return malformed("item is its own parent");
                }
                if parent.is_some_and(|p| p.counter == 0) {
                    return malformed("parent counter must be positive");
                }
            }
            OpKind::Delete { target } => {
                if *target == op.id {
                    return malformed("delete targets itself");
                }
            }
            OpKind::Mark { key, .. } => {
                if key.is_empty() {
                    return malformed("mark key is empty");
                }
            }
        }
        Ok(())
    }

    fn is_ready(&self, op: &DocOp) -> bool {
        op.dependencies().iter().all(|d| self.items.contains_key(d))
    }

    /// Returns the first op in `ops` whose dependencies are neither in the
    /// document nor introduced earlier in the same batch.
    pub fn first_unready(&self, ops: &[DocOp]) -> Option<ItemId> {
        let mut introduced = std::collections::HashSet::new();
        for op in ops {
            let ready = op
                .dependencies()
                .iter()
                .all(|d| self.items.contains_key(d) || introduced.contains(d));
            if !ready {
                return Some(op.id);
            }
            if op.is_insert() {
                introduced.insert(op.id);
            }
        }
        None
    }

    fn integrate_checked(&mut self, op: &DocOp) -> Result<(), DocError> {
        if let OpKind::Insert {
            parent: Some(parent),
            ..
        } = &op.kind
        {
            if self.items[parent].lamport >= op.lamport {
                return Err(DocError::MalformedOp {
                    id: op.id,
                    reason: "insert lamport does not exceed its parent's".into(),
                });
            }
        }
        if let OpKind::Delete { target } = &op.kind {
            if target.replica == op.id.replica && target.counter >= op.id.counter {
                return Err(DocError::MalformedOp {
                    id: op.id,
                    reason: "delete precedes its target".into(),
                });
            }
        }
        self.integrate(op);
        Ok(())
    }

    fn integrate(&mut self, op: &DocOp) {
        self.observe_lamport(op.lamport);
        match &op.kind {
            OpKind::Insert { parent, content } => {
                let mut at = match parent {
                    None => 0,
                    Some(p) => self.position_of(*p).expect("parent checked ready") + 1,
                };
                let stamp = op.stamp();
                // Skip higher-ranked siblings together with their subtrees;
                // descendants always carry a larger lamport than their
                // ancestor, so the first smaller stamp ends the run.
                while at < self.order.len() && self.items[&self.order[at]].stamp() > stamp {
                    at += 1;
                }
                self.place_item(op.id, *parent, op.lamport, *content, at);
            }
            OpKind::Delete { target } => self.tombstone(*target),
            OpKind::Mark {
                start,
                end,
                key,
                value,
            } => {
                let k = MarkKey {
                    start: *start,
                    end: *end,
                    key: key.clone(),
                };
                let stamp = op.stamp();
                match self.marks.get(&k) {
                    Some((_, current)) if *current >= stamp => {}
                    _ => {
                        self.marks.insert(k, (value.clone(), stamp));
                    }
                }
            }
        }
        self.record(op.clone());
    }

    fn place_item(
        &mut self,
        id: ItemId,
        parent: Option<ItemId>,
        lamport: u64,
        content: char,
        at: usize,
    ) {
        self.items.insert(
            id,
            Item {
                id,
                parent,
                lamport,
                content,
                tombstone: false,
            },
        );
        self.order.insert(at, id);
        self.visible += 1;
    }

    fn tombstone(&mut self, id: ItemId) {
        let item = self.items.get_mut(&id).expect("delete target checked ready");
        if !item.tombstone {
            item.tombstone = true;
            self.visible -= 1;
        }
    }

    fn record(&mut self, op: DocOp) {
        self.applied.insert(op.id);
        if op.id.replica == self.replica {
            self.counter = self.counter.max(self.applied.max_counter(self.replica));
        }
        self.log.push(op);
    }

    pub fn create_anchor(&self, index: usize, bias: Bias) -> Result<Anchor, DocError> {
        if index > self.visible {
            return Err(DocError::IndexOutOfRange {
                index,
                len: self.visible,
            });
        }
        let anchor = match bias {
            Bias::Before if index == 0 => Anchor::ROOT,
            Bias::Before if index == self.visible => {
                let pos = self.visible_position(index - 1).expect("index in range");
                Anchor::new(self.order[pos], Bias::After)
            }
            Bias::Before => {
                let pos = self.visible_position(index).expect("index in range");
                Anchor::new(self.order[pos], Bias::Before)
            }
            Bias::After if index == 0 => Anchor {
                item: None,
                bias: Bias::After,
            },
            Bias::After => {
                let pos = self.visible_position(index - 1).expect("index in range");
                Anchor::new(self.order[pos], Bias::After)
            }
        };
        Ok(anchor)
    }

    /// Visible index the anchor currently denotes. A tombstoned anchor item
    /// resolves to the gap it left behind, which is the same place whichever
    /// direction one scans for a visible neighbour.
    pub fn resolve_index(&self, anchor: Anchor) -> Result<usize, DocError> {
        let Some(id) = anchor.item else {
            return Ok(0);
        };
        let item = self.items.get(&id).ok_or(DocError::UnknownItem(id))?;
        let before = self
            .order
            .iter()
            .take_while(|x| **x != id)
            .filter(|x| !self.items[*x].tombstone)
            .count();
        Ok(match (item.tombstone, anchor.bias) {
            (false, Bias::After) => before + 1,
            _ => before,
        })
    }

    pub fn marks(&self) -> Vec<MarkSpan> {
        self.marks
            .iter()
            .map(|(k, (value, stamp))| MarkSpan {
                start: k.start,
                end: k.end,
                key: k.key.clone(),
                value: value.clone(),
                stamp: *stamp,
            })
            .collect()
    }

    pub fn resolved_marks(&self) -> Vec<ResolvedMark> {
        let mut out: Vec<ResolvedMark> = self
            .marks
            .iter()
            .map(|(k, (value, _))| ResolvedMark {
                start: self.resolve_index(k.start).unwrap_or(0),
                end: self.resolve_index(k.end).unwrap_or(0),
                key: k.key.clone(),
                value: value.clone(),
            })
            .collect();
        out.sort_by(|a, b| {
            (a.start, a.end, &a.key, &a.value).cmp(&(b.start, b.end, &b.key, &b.value))
        });
        out
    }

    /// Ops the holder of `vv` has not seen, dependencies first.
    pub fn ops_since(&self, vv: &VersionVector) -> Vec<DocOp> {
        self.log
            .iter()
            .filter(|op| !vv.includes(op.id))
            .cloned()
            .collect()
    }

    /// Re-derives document order from the parent tree and checks it against
    /// the incrementally maintained order, along with the sibling ordering
    /// rule and the visible count.
    #[doc(hidden)]
    pub fn assert_invariants(&self) {
        let mut children: HashMap<Option<ItemId>, Vec<&Item>> = HashMap::new();
        for item in self.items.values() {
            children.entry(item.parent).or_default().push(item);
        }
        for list in children.values_mut() {
            list.sort_by(|a, b| b.stamp().cmp(&a.stamp()));
            for pair in list.windows(2) {
                assert!(pair[0].stamp() > pair[1].stamp(), "siblings not strictly descending");
            }
        }
        let mut expected = Vec::with_capacity(self.items.len());
        let mut stack: Vec<ItemId> = children
            .get(&None)
            .map(|c| c.iter().rev().map(|i| i.id).collect())
            .unwrap_or_default();
        while let Some(id) = stack.pop() {
            expected.push(id);
            if let Some(c) = children.get(&Some(id)) {
                stack.extend(c.iter().rev().map(|i| i.id));
            }
        }
        assert_eq!(expected, self.order, "document order diverged from tree walk");
        let visible = self.items.values().filter(|i| !i.tombstone).count();
        assert_eq!(visible, self.visible);
    }
}
