//! Replica simulations for the convergence suites.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wizundry_core::crdt::{Anchor, Bias, Doc, DocOp, ResolvedMark};

/// One local action in the exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    InsertStart(usize),
    InsertEnd(usize),
    DeleteFirst(usize),
    MarkAll(usize),
    /// Deliver everything the other replica has produced so far.
    Pull(usize),
}

pub const TWO_REPLICA_STEPS: [Step; 10] = [
    Step::InsertStart(0),
    Step::InsertEnd(0),
    Step::DeleteFirst(0),
    Step::MarkAll(0),
    Step::Pull(0),
    Step::InsertStart(1),
    Step::InsertEnd(1),
    Step::DeleteFirst(1),
    Step::MarkAll(1),
    Step::Pull(1),
];

/// What every replica must agree on once all ops are delivered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observed {
    pub text: String,
    pub marks: Vec<ResolvedMark>,
    pub anchors: Vec<usize>,
}

pub fn observe(doc: &Doc, anchors: &[Anchor]) -> Observed {
    Observed {
        text: doc.text(),
        marks: doc.resolved_marks(),
        anchors: anchors
            .iter()
            .map(|a| doc.resolve_index(*a).expect("anchor known after full delivery"))
            .collect(),
    }
}

#[derive(Clone)]
pub struct Sim {
    pub docs: Vec<Doc>,
    /// Every op each replica produced, in production order.
    pub produced: Vec<Vec<DocOp>>,
    /// How far replica r has pulled from replica s.
    pub cursor: Vec<Vec<usize>>,
    pub anchors: Vec<Anchor>,
    /// Ops counted towards the size bound.
    pub ops: usize,
}

impl Sim {
    pub fn new(replicas: usize) -> Self {
        Self {
            docs: (1..=replicas as u32).map(Doc::new).collect(),
            produced: vec![Vec::new(); replicas],
            cursor: vec![vec![0; replicas]; replicas],
            anchors: Vec::new(),
            ops: 0,
        }
    }

    fn remember_anchors(&mut self, r: usize) {
        let d = &self.docs[r];
        let len = d.len();
        for (i, b) in [(0, Bias::After), (len, Bias::Before), (len / 2, Bias::Before)] {
            self.anchors.push(d.create_anchor(i, b).unwrap());
        }
    }

    fn local(&mut self, r: usize, ops: Vec<DocOp>) {
        if !ops.is_empty() {
            self.ops += 1;
        }
        self.produced[r].extend(ops);
        self.remember_anchors(r);
    }

    pub fn insert(&mut self, r: usize, index: usize, text: &str) {
        let ops = self.docs[r].local_insert(index, text).unwrap();
        self.local(r, ops);
    }

    pub fn delete(&mut self, r: usize, index: usize, len: usize) {
        let len = len.min(self.docs[r].len().saturating_sub(index));
        if len == 0 {
            return;
        }
        let ops = self.docs[r].local_delete(index, len).unwrap();
        self.local(r, ops);
    }

    pub fn mark(&mut self, r: usize, start: usize, end: usize, value: &str) {
        let d = &mut self.docs[r];
        let s = d.create_anchor(start, Bias::Before).unwrap();
        let e = d.create_anchor(end, Bias::Before).unwrap();
        let op = d.set_mark(s, e, "highlight", value).unwrap();
        self.local(r, vec![op]);
    }

    /// Replica `to` receives whatever `from` produced since the last pull.
    pub fn pull(&mut self, to: usize, from: usize) {
        let start = self.cursor[to][from];
        let ops = self.produced[from][start..].to_vec();
        self.cursor[to][from] = self.produced[from].len();
        let report = self.docs[to].apply_remote(ops);
        assert!(report.rejected.is_empty(), "{:?}", report.rejected);
    }

    /// Applies one step; false if it would not change anything.
    pub fn step(&mut self, step: Step) -> bool {
        let other = |r: usize| 1 - r;
        match step {
            Step::DeleteFirst(r) if self.docs[r].is_empty() => return false,
            Step::Pull(r) if self.cursor[r][other(r)] == self.produced[other(r)].len() => {
                return false
            }
            _ => {}
        }
        match step {
            Step::InsertStart(r) => self.insert(r, 0, ["a", "b"][r]),
            Step::InsertEnd(r) => {
                let len = self.docs[r].len();
                self.insert(r, len, ["xy", "uv"][r])
            }
            Step::DeleteFirst(r) => self.delete(r, 0, 1),
            Step::MarkAll(r) => {
                let len = self.docs[r].len();
                self.mark(r, 0, len, ["pink", "blue"][r])
            }
            Step::Pull(r) => self.pull(r, other(r)),
        }
        true
    }

    /// Full delivery to every replica, each pulling sources in a different
    /// order, then the agreement check.
    pub fn settle(mut self) -> Result<Observed, String> {
        let n = self.docs.len();
        for to in 0..n {
            for k in 0..n {
                let from = (to + k + 1) % n;
                if from != to {
                    self.pull(to, from);
                }
            }
        }
        let first = observe(&self.docs[0], &self.anchors);
        for (r, d) in self.docs.iter().enumerate() {
            d.assert_invariants();
            let o = observe(d, &self.anchors);
            if o != first {
                return Err(format!("replica {r} diverged: {o:?} vs {first:?}"));
            }
        }
        // A late joiner fed everything in reverse must agree too, which
        // exercises buffering of ops that arrive before their parents.
        let mut late = Doc::new(99);
        let mut all: Vec<DocOp> = self.produced.iter().flatten().cloned().collect();
        all.reverse();
        let report = late.apply_remote(all);
        if !report.rejected.is_empty() || late.pending_len() != 0 {
            return Err(format!("late joiner: {report:?}"));
        }
        let o = observe(&late, &self.anchors);
        if o != first {
            return Err(format!("late joiner diverged: {o:?} vs {first:?}"));
        }
        Ok(first)
    }
}

/// Runs one scripted two-replica scenario.
pub fn run_script(script: &[Step]) -> Result<Observed, String> {
    let mut sim = Sim::new(2);
    for s in script {
        sim.step(*s);
    }
    sim.settle()
}

/// Enumerates every script of at most `max_ops` edits and `max_steps`
/// steps in total, skipping steps that change nothing (a pull with nothing
/// new, a delete on an empty document). Returns (scripts run, failures).
pub fn exhaustive_two_replicas(max_ops: usize, max_steps: usize) -> (usize, Vec<String>) {
    struct Walk {
        max_ops: usize,
        max_steps: usize,
        count: usize,
        failures: Vec<String>,
        script: Vec<Step>,
    }
    fn rec(w: &mut Walk, sim: &Sim, edits: usize) {
        w.count += 1;
        if let Err(e) = sim.clone().settle() {
            w.failures.push(format!("{:?}: {e}", w.script));
        }
        if w.script.len() == w.max_steps {
            return;
        }
        for s in TWO_REPLICA_STEPS {
            let is_edit = !matches!(s, Step::Pull(_));
            if is_edit && edits == w.max_ops {
                continue;
            }
            let mut next = sim.clone();
            if !next.step(s) {
                continue;
            }
            w.script.push(s);
            rec(w, &next, edits + usize::from(is_edit));
            w.script.pop();
        }
    }
    let mut w = Walk {
        max_ops,
        max_steps,
        count: 0,
        failures: Vec::new(),
        script: Vec::new(),
    };
    rec(&mut w, &Sim::new(2), 0);
    (w.count, w.failures)
}

/// Three replicas, `total_ops` random edits with random partial delivery.
pub fn seeded_three_replicas(seed: u64, total_ops: usize) -> Result<Observed, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sim = Sim::new(3);
    let alphabet: Vec<char> = "abcdefghij .\n".chars().collect();
    while sim.ops < total_ops {
        let r = rng.gen_range(0..3);
        let len = sim.docs[r].len();
        match rng.gen_range(0..10) {
            0..=4 => {
                let at = rng.gen_range(0..=len);
                let n = rng.gen_range(1..=3);
                let s: String = (0..n).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();
                sim.insert(r, at, &s);
            }
            5..=6 if len > 0 => {
                let at = rng.gen_range(0..len);
                sim.delete(r, at, rng.gen_range(1..=2));
            }
            7 => {
                let a = rng.gen_range(0..=len);
                let b = rng.gen_range(a..=len);
                let v = *["yellow", "green", "pink"].choose(&mut rng).unwrap();
                sim.mark(r, a, b, v);
            }
            _ => {
                let from = (r + rng.gen_range(1..3)) % 3;
                sim.pull(r, from);
            }
        }
    }
    // Catch up one replica through version vectors, as a reconnecting
    // client does, before the general settle.
    let vv = sim.docs[2].version_vector();
    for from in 0..2 {
        let missing = sim.docs[from].ops_since(&vv);
        let report = sim.docs[2].apply_remote(missing);
        if !report.rejected.is_empty() {
            return Err(format!("seed {seed}: catch-up rejected {:?}", report.rejected));
        }
    }
    sim.settle().map_err(|e| format!("seed {seed}: {e}"))
}
