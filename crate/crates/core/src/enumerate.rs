//! Best-first enumeration of circuits in non-increasing prior probability.
//!
//! The search walks the prefix tree of placements. Every placement lowers the
//! log-probability by a fixed `ln θ_g + ln χ_g`, so a uniform-cost search with
//! lazily generated siblings pops circuits in probability order: a heap entry
//! is "child number `pos` of node `parent`", and popping it pushes child
//! `pos + 1` of the same parent and the first child of the new node.
//!
//! Prefixes whose unitary was already reached (up to global phase) by an
//! earlier, hence at least as probable, prefix of no greater depth are
//! neither emitted nor extended. If the earlier prefix was deeper, the new one
//! is extended but not emitted, so a depth cap never hides a unitary.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, ConnectivityConstraint, Placement};
use crate::error::{Error, Result};
use crate::gates::GateRef;
use crate::library::{valid_assignments, GateCosts, Library};
use crate::matrix::{
    apply_left, key_of_entries, KeyMap, phase_aligned_distance_slices, row_groups, ComplexMatrix, UnitaryKey, C64,
    EQUALITY_TOLERANCE,
};

/// How long a search may run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Visited-node count. Deterministic.
    Nodes(u64),
    /// Wall clock, checked every 1024 visits.
    Seconds(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnumConfig {
    pub budget: Budget,
    /// Solutions kept per task.
    pub k: usize,
    pub max_placements: usize,
    pub workers: usize,
    /// Phase-aligned distance accepted as a match.
    pub tolerance: f64,
    /// Observational-equivalence pruning; only disabled by oracles.
    pub prune: bool,
    /// Byte cap of the per-shard prefix matrix cache.
    pub matrix_cache_bytes: usize,
}

impl Default for EnumConfig {
    fn default() -> Self {
        EnumConfig {
            budget: Budget::Seconds(150.0),
            k: 2,
            max_placements: 64,
            workers: 1,
            tolerance: EQUALITY_TOLERANCE,
            prune: true,
            matrix_cache_bytes: 256 << 20,
        }
    }
}

impl EnumConfig {
    pub fn with_nodes(nodes: u64) -> Self {
        EnumConfig {
            budget: Budget::Nodes(nodes),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if let Budget::Seconds(s) = self.budget {
            if !(s > 0.0) {
                return Err(Error::Config(format!("timeout must be positive, got {s}")));
            }
        }
        if self.max_placements > u16::MAX as usize {
            return Err(Error::Config("max_placements is too large".into()));
        }
        Ok(())
    }
}

struct Slot {
    gate: GateRef,
    qubits: Vec<usize>,
    groups: Vec<usize>,
    delta: f64,
}

/// Every `(gate, qubit tuple)` placement of a library on a register, with its
/// log-probability decrement. Placement `i` precedes `j` when its gate comes
/// first in the library, or the gates agree and its qubit tuple is
/// lexicographically smaller.
pub struct SearchSpace {
    n_qubits: usize,
    dim: usize,
    slots: Vec<Slot>,
    order: Vec<u32>,
    root_lp: f64,
}

impl SearchSpace {
    pub fn new(lib: &Library, n_qubits: usize, constraint: &ConnectivityConstraint) -> Result<Self> {
        if !(1..=12).contains(&n_qubits) {
            return Err(Error::BadDimension(1usize << n_qubits.min(63)));
        }
        let costs = GateCosts::new(lib, n_qubits, constraint)?;
        let mut slots = Vec::new();
        for (g, gate) in lib.gates().iter().enumerate() {
            for qubits in valid_assignments(gate, n_qubits, constraint) {
                slots.push(Slot {
                    gate: gate.clone(),
                    groups: row_groups(&qubits, n_qubits),
                    qubits,
                    delta: costs.per_gate[g],
                });
            }
        }
        let mut order: Vec<u32> = (0..slots.len() as u32).collect();
        order.sort_by(|&a, &b| {
            slots[b as usize]
                .delta
                .total_cmp(&slots[a as usize].delta)
                .then(a.cmp(&b))
        });
        Ok(SearchSpace {
            n_qubits,
            dim: 1 << n_qubits,
            slots,
            order,
            root_lp: costs.log_end,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_placements(&self) -> usize {
        self.slots.len()
    }

    pub fn placement(&self, i: usize) -> (&GateRef, &[usize]) {
        (&self.slots[i].gate, &self.slots[i].qubits)
    }

    /// Log-probability of the empty circuit.
    pub fn root_log_prob(&self) -> f64 {
        self.root_lp
    }

    fn circuit_of_path(&self, path: &[u32]) -> Circuit {
        let placements = path
            .iter()
            .map(|&p| {
                let s = &self.slots[p as usize];
                Placement {
                    gate: s.gate.clone(),
                    qubits: s.qubits.clone(),
                }
            })
            .collect();
        Circuit::from_placements(self.n_qubits, placements).expect("search placements are valid")
    }

    fn apply(&self, slot: u32, target: &mut [C64], scratch: &mut Vec<C64>) {
        let s = &self.slots[slot as usize];
        let m = s.gate.matrix();
        apply_left(m.entries(), m.dim(), &s.groups, target, self.dim, scratch);
    }
}

/// One worker's part of the search space: circuits whose length-`level`
/// prefix has lexicographic index `≡ index (mod count)`. Shorter circuits are
/// shared by all shards and reported by shard 0 only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shard {
    pub index: usize,
    pub count: usize,
    pub level: usize,
}

impl Shard {
    pub fn whole() -> Self {
        Shard {
            index: 0,
            count: 1,
            level: 0,
        }
    }

    pub fn owns_prefix(&self, prefix_index: u64) -> bool {
        self.count == 1 || prefix_index % self.count as u64 == self.index as u64
    }

    fn reports_shared(&self) -> bool {
        self.index == 0
    }
}

/// Partition of `space` among `workers`. The split level is the shallowest
/// at which the number of prefixes reaches the worker count.
pub fn shard_space(space: &SearchSpace, workers: usize) -> Vec<Shard> {
    let b = space.n_placements() as u64;
    if workers <= 1 || b == 0 {
        return vec![Shard::whole()];
    }
    let mut level = 1;
    let mut prefixes = b;
    while prefixes < workers as u64 {
        prefixes = prefixes.saturating_mul(b);
        level += 1;
    }
    (0..workers)
        .map(|index| Shard {
            index,
            count: workers,
            level,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Exhausted,
    Budget,
    Sink,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardReport {
    pub shard: usize,
    pub visited: u64,
    pub pruned: u64,
    pub emitted: u64,
    /// Same-unitary prefixes extended (not emitted) because the earlier one
    /// sat deeper.
    pub reopened: u64,
    pub elapsed_s: f64,
    pub stopped_by: StopReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExhaustionReport {
    pub visited: u64,
    pub pruned: u64,
    pub emitted: u64,
    pub elapsed_s: f64,
    pub stopped_by: StopReason,
    pub per_shard: Vec<ShardReport>,
}

impl ExhaustionReport {
    fn merge(per_shard: Vec<ShardReport>, elapsed_s: f64) -> Self {
        let stopped_by = if per_shard.iter().any(|r| r.stopped_by == StopReason::Budget) {
            StopReason::Budget
        } else if per_shard.iter().any(|r| r.stopped_by == StopReason::Sink) {
            StopReason::Sink
        } else {
            StopReason::Exhausted
        };
        ExhaustionReport {
            visited: per_shard.iter().map(|r| r.visited).sum(),
            pruned: per_shard.iter().map(|r| r.pruned).sum(),
            emitted: per_shard.iter().map(|r| r.emitted).sum(),
            elapsed_s,
            stopped_by,
            per_shard,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// A circuit popped from the search, valid only during the callback.
pub struct Emission<'a> {
    space: &'a SearchSpace,
    arena: &'a [Node],
    parent: Option<u32>,
    slot: u32,
    log_prob: f64,
    depth: usize,
    key: UnitaryKey,
    matrix: &'a [C64],
}

impl Emission<'_> {
    pub fn log_prob(&self) -> f64 {
        self.log_prob
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn key(&self) -> UnitaryKey {
        self.key
    }

    /// Row-major entries of the circuit's unitary.
    pub fn matrix(&self) -> &[C64] {
        self.matrix
    }

    pub fn unitary(&self) -> ComplexMatrix {
        ComplexMatrix::from_entries(self.space.dim, self.matrix.to_vec()).expect("search dimension is valid")
    }

    /// Placement indices into the search space, in application order.
    pub fn path(&self) -> Vec<u32> {
        let mut path = Vec::with_capacity(self.depth);
        if let Some(parent) = self.parent {
            path.push(self.slot);
            let mut cur = parent;
            while cur != 0 {
                let n = &self.arena[cur as usize];
                path.push(n.slot);
                cur = n.parent;
            }
        }
        path.reverse();
        path
    }

    pub fn circuit(&self) -> Circuit {
        self.space.circuit_of_path(&self.path())
    }
}

/// Receives the search's output for one shard.
pub trait Visitor {
    /// A circuit with a unitary not seen before in this shard.
    fn emit(&mut self, e: &Emission<'_>) -> Control;

    /// A circuit whose unitary was already emitted with at least its
    /// probability.
    fn duplicate(&mut self, _e: &Emission<'_>) -> Control {
        Control::Continue
    }
}

impl<F: FnMut(&Emission<'_>) -> Control> Visitor for F {
    fn emit(&mut self, e: &Emission<'_>) -> Control {
        self(e)
    }
}

struct Node {
    parent: u32,
    slot: u32,
    depth: u16,
    lp: f64,
    /// Index of the prefix up to the shard level (the full path above it).
    prefix: u64,
}

struct Entry {
    lp: f64,
    depth: u16,
    parent: u32,
    pos: u32,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // Max-heap: higher probability first, then shorter, then earlier parent,
    // then earlier child.
    fn cmp(&self, other: &Self) -> Ordering {
        self.lp
            .total_cmp(&other.lp)
            .then(other.depth.cmp(&self.depth))
            .then(other.parent.cmp(&self.parent))
            .then(other.pos.cmp(&self.pos))
    }
}

struct ShardSearch<'s> {
    space: &'s SearchSpace,
    shard: Shard,
    nodes: Vec<Node>,
    cache: Vec<Option<Box<[C64]>>>,
    cache_left: usize,
    /// Child orders restricted to the shard, keyed by `prefix·B mod count`.
    filtered: HashMap<u64, Vec<u32>>,
    memo_id: Option<u32>,
    memo: Vec<C64>,
    scratch: Vec<C64>,
}

impl<'s> ShardSearch<'s> {
    fn children(&mut self, node: u32) -> &[u32] {
        let n = &self.nodes[node as usize];
        if self.shard.count == 1 || n.depth as usize + 1 != self.shard.level {
            return &self.space.order;
        }
        let b = self.space.n_placements() as u64;
        let residue = (n.prefix % self.shard.count as u64) * (b % self.shard.count as u64) % self.shard.count as u64;
        let shard = self.shard;
        let order = &self.space.order;
        self.filtered.entry(residue).or_insert_with(|| {
            order
                .iter()
                .copied()
                .filter(|&p| shard.owns_prefix(residue + p as u64))
                .collect()
        })
    }

    /// Load the unitary of `node` into the memo buffer.
    fn load(&mut self, node: u32) {
        if self.memo_id == Some(node) {
            return;
        }
        let mut path = Vec::new();
        let mut cur = node;
        while self.cache[cur as usize].is_none() {
            path.push(self.nodes[cur as usize].slot);
            cur = self.nodes[cur as usize].parent;
        }
        self.memo.clear();
        self.memo.extend_from_slice(self.cache[cur as usize].as_deref().unwrap());
        for &slot in path.iter().rev() {
            self.space.apply(slot, &mut self.memo, &mut self.scratch);
        }
        self.memo_id = Some(node);
    }

    fn store(&mut self, id: u32, m: &[C64]) {
        let bytes = std::mem::size_of_val(m);
        if bytes <= self.cache_left {
            self.cache_left -= bytes;
            self.cache.push(Some(m.into()));
        } else {
            self.cache.push(None);
        }
        debug_assert_eq!(self.cache.len(), id as usize + 1);
    }
}

/// Run one shard to completion, budget exhaustion, or a visitor stop.
pub fn run_shard<V: Visitor + ?Sized>(
    space: &SearchSpace,
    shard: Shard,
    cfg: &EnumConfig,
    visitor: &mut V,
) -> ShardReport {
    let start = Instant::now();
    let budget_nodes = match cfg.budget {
        Budget::Nodes(n) => Some(n.div_ceil(shard.count as u64)),
        Budget::Seconds(_) => None,
    };
    let deadline = match cfg.budget {
        Budget::Seconds(s) => Some(s),
        Budget::Nodes(_) => None,
    };
    let mut report = ShardReport {
        shard: shard.index,
        visited: 0,
        pruned: 0,
        emitted: 0,
        reopened: 0,
        elapsed_s: 0.0,
        stopped_by: StopReason::Exhausted,
    };
    let b = space.n_placements() as u64;
    let mut s = ShardSearch {
        space,
        shard,
        nodes: Vec::new(),
        cache: Vec::new(),
        cache_left: cfg.matrix_cache_bytes,
        filtered: HashMap::new(),
        memo_id: None,
        memo: Vec::new(),
        scratch: Vec::new(),
    };
    let mut seen: KeyMap<u16> = KeyMap::default();
    let mut heap = BinaryHeap::new();

    let identity = ComplexMatrix::identity(space.dim);
    let root_key = key_of_entries(identity.entries());
    s.nodes.push(Node {
        parent: 0,
        slot: 0,
        depth: 0,
        lp: space.root_lp,
        prefix: 0,
    });
    s.cache.push(Some(identity.entries().into()));
    seen.insert(root_key, 0);
    report.visited += 1;
    if shard.reports_shared() || shard.level == 0 {
        report.emitted += 1;
        let e = Emission {
            space,
            arena: &s.nodes,
            parent: None,
            slot: 0,
            log_prob: space.root_lp,
            depth: 0,
            key: root_key,
            matrix: identity.entries(),
        };
        if visitor.emit(&e) == Control::Stop {
            report.stopped_by = StopReason::Sink;
            report.elapsed_s = start.elapsed().as_secs_f64();
            return report;
        }
    }
    let push_first_child = |s: &mut ShardSearch, heap: &mut BinaryHeap<Entry>, id: u32| {
        let n = &s.nodes[id as usize];
        if n.depth as usize >= cfg.max_placements {
            return;
        }
        let (lp, depth) = (n.lp, n.depth + 1);
        if let Some(first) = s.children(id).first().copied() {
            heap.push(Entry {
                lp: lp + space.slots[first as usize].delta,
                depth,
                parent: id,
                pos: 0,
            });
        }
    };
    push_first_child(&mut s, &mut heap, 0);

    let mut child = Vec::new();
    while let Some(entry) = heap.pop() {
        if budget_nodes.is_some_and(|n| report.visited >= n) {
            report.stopped_by = StopReason::Budget;
            break;
        }
        if report.visited % 1024 == 0
            && deadline.is_some_and(|d| start.elapsed().as_secs_f64() >= d)
        {
            report.stopped_by = StopReason::Budget;
            break;
        }
        report.visited += 1;

        let parent = entry.parent;
        let (slot, next) = {
            let siblings = s.children(parent);
            (siblings[entry.pos as usize], siblings.get(entry.pos as usize + 1).copied())
        };
        if let Some(next) = next {
            heap.push(Entry {
                lp: s.nodes[parent as usize].lp + space.slots[next as usize].delta,
                depth: entry.depth,
                parent,
                pos: entry.pos + 1,
            });
        }

        s.load(parent);
        child.clear();
        child.extend_from_slice(&s.memo);
        space.apply(slot, &mut child, &mut s.scratch);
        let key = key_of_entries(&child);
        let depth = entry.depth;
        let visible = shard.reports_shared() || depth as usize >= shard.level;

        let mut reopen = false;
        if cfg.prune {
            if let Some(best) = seen.get_mut(&key) {
                if *best <= depth {
                    report.pruned += 1;
                    if visible {
                        let e = Emission {
                            space,
                            arena: &s.nodes,
                            parent: Some(parent),
                            slot,
                            log_prob: entry.lp,
                            depth: depth as usize,
                            key,
                            matrix: &child,
                        };
                        if visitor.duplicate(&e) == Control::Stop {
                            report.stopped_by = StopReason::Sink;
                            break;
                        }
                    }
                    continue;
                }
                *best = depth;
                reopen = true;
            } else {
                seen.insert(key, depth);
            }
        }

        let parent_node = &s.nodes[parent as usize];
        let prefix = if (depth as usize) <= shard.level {
            parent_node.prefix * b + slot as u64
        } else {
            parent_node.prefix
        };
        let id = s.nodes.len() as u32;
        s.nodes.push(Node {
            parent,
            slot,
            depth,
            lp: entry.lp,
            prefix,
        });
        s.store(id, &child);

        if visible {
            let e = Emission {
                space,
                arena: &s.nodes,
                parent: Some(parent),
                slot,
                log_prob: entry.lp,
                depth: depth as usize,
                key,
                matrix: &child,
            };
            let control = if reopen {
                report.reopened += 1;
                visitor.duplicate(&e)
            } else {
                report.emitted += 1;
                visitor.emit(&e)
            };
            if control == Control::Stop {
                report.stopped_by = StopReason::Sink;
                break;
            }
        }
        push_first_child(&mut s, &mut heap, id);
    }
    report.elapsed_s = start.elapsed().as_secs_f64();
    report
}

/// Run every shard of `space` (in parallel when `cfg.workers > 1`), each
/// with its own visitor from `make`. Visitors are returned in shard order.
pub fn enumerate_shards<V, F>(space: &SearchSpace, cfg: &EnumConfig, make: F) -> Result<(Vec<V>, ExhaustionReport)>
where
    V: Visitor + Send,
    F: Fn(&Shard) -> V + Sync,
{
    cfg.validate()?;
    let start = Instant::now();
    let shards = shard_space(space, cfg.workers);
    let results: Vec<(V, ShardReport)> = if shards.len() == 1 {
        let mut v = make(&shards[0]);
        let r = run_shard(space, shards[0], cfg, &mut v);
        vec![(v, r)]
    } else {
        shards
            .par_iter()
            .map(|shard| {
                let mut v = make(shard);
                let r = run_shard(space, *shard, cfg, &mut v);
                (v, r)
            })
            .collect()
    };
    let (visitors, reports): (Vec<V>, Vec<ShardReport>) = results.into_iter().unzip();
    Ok((visitors, ExhaustionReport::merge(reports, start.elapsed().as_secs_f64())))
}

#[derive(Clone, Debug)]
pub struct ScoredCircuit {
    pub circuit: Circuit,
    pub log_prob: f64,
}

/// Enumerate circuits of `lib` on `n_qubits`, passing each new-unitary circuit
/// to `sink` in non-increasing log-probability order. With several workers the
/// shards' outputs are merged, re-sorted and deduplicated by unitary before
/// reaching the sink, so the whole output is held in memory.
pub fn enumerate(
    lib: &Library,
    n_qubits: usize,
    constraint: &ConnectivityConstraint,
    cfg: &EnumConfig,
    mut sink: impl FnMut(ScoredCircuit) -> Control,
) -> Result<ExhaustionReport> {
    cfg.validate()?;
    let space = SearchSpace::new(lib, n_qubits, constraint)?;
    if cfg.workers <= 1 {
        let start = Instant::now();
        let mut visitor = |e: &Emission<'_>| {
            sink(ScoredCircuit {
                circuit: e.circuit(),
                log_prob: e.log_prob(),
            })
        };
        let r = run_shard(&space, Shard::whole(), cfg, &mut visitor);
        return Ok(ExhaustionReport::merge(vec![r], start.elapsed().as_secs_f64()));
    }
    let (collectors, report) = enumerate_shards(&space, cfg, |_| Collector::default())?;
    let mut rows: Vec<Row> = collectors.into_iter().flat_map(|c| c.rows).collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then_with(|| a.2.cmp(&b.2)));
    let mut seen = std::collections::HashSet::new();
    for (lp, _, path, key) in rows {
        if seen.insert(key) {
            let sc = ScoredCircuit {
                circuit: space.circuit_of_path(&path),
                log_prob: lp,
            };
            if sink(sc) == Control::Stop {
                break;
            }
        }
    }
    Ok(report)
}

type Row = (f64, usize, Vec<u32>, UnitaryKey);

#[derive(Default)]
struct Collector {
    rows: Vec<Row>,
}

impl Visitor for Collector {
    fn emit(&mut self, e: &Emission<'_>) -> Control {
        self.rows.push((e.log_prob(), e.depth(), e.path(), e.key()));
        Control::Continue
    }
}

/// Top-`k` circuits implementing one task, most probable first.
#[derive(Clone, Debug)]
pub struct SolutionSet {
    pub task_id: String,
    k: usize,
    circuits: Vec<ScoredCircuit>,
}

fn solution_order(a: &ScoredCircuit, b: &ScoredCircuit) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then_with(|| a.circuit.signature().cmp(&b.circuit.signature()))
}

impl SolutionSet {
    pub fn new(task_id: impl Into<String>, k: usize) -> Self {
        SolutionSet {
            task_id: task_id.into(),
            k: k.max(1),
            circuits: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn circuits(&self) -> &[ScoredCircuit] {
        &self.circuits
    }

    pub fn is_empty(&self) -> bool {
        self.circuits.is_empty()
    }

    pub fn len(&self) -> usize {
        self.circuits.len()
    }

    pub fn best(&self) -> Option<&ScoredCircuit> {
        self.circuits.first()
    }

    /// Add a circuit unless an identical placement sequence is present; keeps
    /// the `k` most probable.
    pub fn insert(&mut self, sc: ScoredCircuit) {
        if self.circuits.iter().any(|c| c.circuit == sc.circuit) {
            return;
        }
        self.circuits.push(sc);
        self.circuits.sort_by(solution_order);
        self.circuits.truncate(self.k);
    }

    pub fn merge(&mut self, other: SolutionSet) {
        for c in other.circuits {
            self.insert(c);
        }
    }

    /// Replace every circuit, recompute scores and re-sort.
    pub fn replace_circuits(&mut self, circuits: Vec<ScoredCircuit>) {
        self.circuits.clear();
        for c in circuits {
            self.insert(c);
        }
    }

    /// Recompute log-probabilities under `lib`.
    pub fn rescore(&mut self, lib: &Library, constraint: &ConnectivityConstraint) -> Result<()> {
        for c in &mut self.circuits {
            c.log_prob = crate::library::circuit_log_prob(&c.circuit, lib, constraint)?;
        }
        self.circuits.sort_by(solution_order);
        Ok(())
    }
}

/// A synthesis target.
#[derive(Clone, Debug)]
pub struct Task {
    pub id: String,
    pub unitary: ComplexMatrix,
}

impl Task {
    pub fn new(id: impl Into<String>, unitary: ComplexMatrix) -> Self {
        Task {
            id: id.into(),
            unitary,
        }
    }
}

struct Matcher<'a> {
    index: &'a KeyMap<Vec<usize>>,
    tasks: &'a [Task],
    k: usize,
    tolerance: f64,
    hits: Vec<Vec<ScoredCircuit>>,
    unsatisfied: usize,
}

impl Matcher<'_> {
    fn check(&mut self, e: &Emission<'_>) -> Control {
        let Some(candidates) = self.index.get(&e.key()) else {
            return Control::Continue;
        };
        let mut circuit = None;
        for &t in candidates {
            if self.hits[t].len() >= self.k {
                continue;
            }
            if phase_aligned_distance_slices(e.matrix(), self.tasks[t].unitary.entries()) > self.tolerance {
                continue;
            }
            let c = circuit.get_or_insert_with(|| e.circuit()).clone();
            self.hits[t].push(ScoredCircuit {
                circuit: c,
                log_prob: e.log_prob(),
            });
            if self.hits[t].len() == self.k {
                self.unsatisfied -= 1;
            }
        }
        if self.unsatisfied == 0 {
            Control::Stop
        } else {
            Control::Continue
        }
    }
}

impl Visitor for Matcher<'_> {
    fn emit(&mut self, e: &Emission<'_>) -> Control {
        self.check(e)
    }

    fn duplicate(&mut self, e: &Emission<'_>) -> Control {
        self.check(e)
    }
}

pub struct BatchOutcome {
    pub sets: BTreeMap<String, SolutionSet>,
    pub report: ExhaustionReport,
}

/// Enumerate once and collect, for every task, the `k` most probable
/// circuits found whose unitary matches it. Stops early once every task has
/// `k` solutions. Tasks with no hit get empty sets.
pub fn synthesize_batch(
    tasks: &[Task],
    lib: &Library,
    constraint: &ConnectivityConstraint,
    cfg: &EnumConfig,
) -> Result<BatchOutcome> {
    cfg.validate()?;
    let Some(first) = tasks.first() else {
        return Ok(BatchOutcome {
            sets: BTreeMap::new(),
            report: ExhaustionReport::merge(Vec::new(), 0.0),
        });
    };
    let n_qubits = first.unitary.n_qubits();
    for t in tasks {
        if t.unitary.dim() != first.unitary.dim() {
            return Err(Error::DimensionMismatch {
                left: first.unitary.dim(),
                right: t.unitary.dim(),
            });
        }
    }
    let space = SearchSpace::new(lib, n_qubits, constraint)?;
    let mut index: KeyMap<Vec<usize>> = KeyMap::default();
    for (i, t) in tasks.iter().enumerate() {
        index.entry(key_of_entries(t.unitary.entries())).or_default().push(i);
    }
    let (matchers, report) = enumerate_shards(&space, cfg, |_| Matcher {
        index: &index,
        tasks,
        k: cfg.k,
        tolerance: cfg.tolerance,
        hits: vec![Vec::new(); tasks.len()],
        unsatisfied: tasks.len(),
    })?;
    let mut sets: BTreeMap<String, SolutionSet> = BTreeMap::new();
    for (i, t) in tasks.iter().enumerate() {
        let set = sets
            .entry(t.id.clone())
            .or_insert_with(|| SolutionSet::new(t.id.clone(), cfg.k));
        for m in &matchers {
            for c in &m.hits[i] {
                set.insert(c.clone());
            }
        }
    }
    Ok(BatchOutcome { sets, report })
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::*;
    use crate::circuit::circuit_of;
    use crate::gates::{g0_gates, standard};
    use crate::library::circuit_log_prob;
    use crate::matrix::canonical_key;

    fn collect(
        lib: &Library,
        n: usize,
        constraint: &ConnectivityConstraint,
        cfg: &EnumConfig,
    ) -> (Vec<ScoredCircuit>, ExhaustionReport) {
        let mut out = Vec::new();
        let report = enumerate(lib, n, constraint, cfg, |sc| {
            out.push(sc);
            Control::Continue
        })
        .unwrap();
        (out, report)
    }

    /// Every circuit of at most `depth` placements, unpruned.
    fn brute_force(lib: &Library, n: usize, constraint: &ConnectivityConstraint, depth: usize) -> Vec<Circuit> {
        let placements: Vec<(GateRef, Vec<usize>)> = lib
            .gates()
            .iter()
            .flat_map(|g| valid_assignments(g, n, constraint).into_iter().map(move |q| (g.clone(), q)))
            .collect();
        let mut all = vec![Circuit::new(n)];
        let mut frontier = vec![Circuit::new(n)];
        for _ in 0..depth {
            let mut next = Vec::new();
            for c in &frontier {
                for (g, q) in &placements {
                    next.push(c.clone().with(g, q).unwrap());
                }
            }
            all.extend(next.iter().cloned());
            frontier = next;
        }
        all
    }

    fn capped(depth: usize) -> EnumConfig {
        EnumConfig {
            budget: Budget::Nodes(u64::MAX),
            max_placements: depth,
            ..EnumConfig::default()
        }
    }

    #[test]
    fn shortest_circuits_come_first() {
        let lib = Library::g0();
        let (out, _) = collect(&lib, 2, &ConnectivityConstraint::Full, &EnumConfig::with_nodes(200));
        assert!(out[0].circuit.is_empty());
        let lens: Vec<usize> = out.iter().map(|s| s.circuit.len()).collect();
        assert!(lens.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(lens.iter().filter(|&&l| l == 1).count(), 8);
    }

    #[test]
    fn hh_is_pruned() {
        let g = g0_gates();
        let lib = Library::uniform(g[..3].to_vec()).unwrap();
        let space = SearchSpace::new(&lib, 1, &ConnectivityConstraint::Full).unwrap();
        struct Split(Vec<Circuit>, Vec<Circuit>);
        impl Visitor for Split {
            fn emit(&mut self, e: &Emission<'_>) -> Control {
                self.0.push(e.circuit());
                Control::Continue
            }
            fn duplicate(&mut self, e: &Emission<'_>) -> Control {
                self.1.push(e.circuit());
                Control::Continue
            }
        }
        let mut v = Split(Vec::new(), Vec::new());
        run_shard(&space, Shard::whole(), &capped(2), &mut v);
        let hh = circuit_of(1, &[(&g[0], &[0]), (&g[0], &[0])]).unwrap();
        let ttdg = circuit_of(1, &[(&g[1], &[0]), (&g[2], &[0])]).unwrap();
        assert!(v.1.contains(&hh) && !v.0.contains(&hh));
        assert!(v.1.contains(&ttdg));
    }

    #[test]
    fn emitted_count_matches_distinct_reachable_unitaries() {
        let lib = Library::g0();
        let full = ConnectivityConstraint::Full;
        let oracle: HashSet<UnitaryKey> = brute_force(&lib, 2, &full, 4)
            .iter()
            .map(|c| canonical_key(&c.eval_unitary().unwrap()))
            .collect();
        let (out, report) = collect(&lib, 2, &full, &capped(4));
        assert_eq!(out.len(), oracle.len());
        assert_eq!(report.emitted as usize, oracle.len());
        assert_eq!(report.stopped_by, StopReason::Exhausted);
        let emitted: HashSet<UnitaryKey> =
            out.iter().map(|s| canonical_key(&s.circuit.eval_unitary().unwrap())).collect();
        assert_eq!(emitted, oracle);

        let unpruned = EnumConfig {
            prune: false,
            ..capped(4)
        };
        let (raw, _) = collect(&lib, 2, &full, &unpruned);
        assert_eq!(raw.len(), brute_force(&lib, 2, &full, 4).len());
        let raw_keys: HashSet<UnitaryKey> =
            raw.iter().map(|s| canonical_key(&s.circuit.eval_unitary().unwrap())).collect();
        assert_eq!(raw_keys, oracle);
    }

    #[test]
    fn pruning_is_complete_at_every_probability_level() {
        let lib = Library::g0().reweighted(vec![0.3, 0.25, 0.1, 0.15], 0.2).unwrap();
        let full = ConnectivityConstraint::Full;
        let (out, _) = collect(&lib, 2, &full, &capped(3));
        let best: HashMap<UnitaryKey, f64> = out
            .iter()
            .map(|s| (canonical_key(&s.circuit.eval_unitary().unwrap()), s.log_prob))
            .collect();
        for c in brute_force(&lib, 2, &full, 3) {
            let lp = circuit_log_prob(&c, &lib, &full).unwrap();
            let key = canonical_key(&c.eval_unitary().unwrap());
            assert!(best[&key] >= lp - 1e-12, "{c:?}");
        }
    }

    #[test]
    fn emitted_log_probs_match_the_model() {
        let lib = Library::g0().reweighted(vec![0.4, 0.2, 0.1, 0.1], 0.2).unwrap();
        let nn = ConnectivityConstraint::NearestNeighbor;
        let (out, _) = collect(&lib, 3, &nn, &EnumConfig::with_nodes(3000));
        for s in &out {
            assert!(s.circuit.validate(&nn));
            let lp = circuit_log_prob(&s.circuit, &lib, &nn).unwrap();
            assert!((lp - s.log_prob).abs() < 1e-9);
        }
    }

    #[test]
    fn order_is_non_increasing_for_ten_thousand_emissions() {
        let lib = Library::g0();
        let (out, report) = collect(&lib, 3, &ConnectivityConstraint::Full, &EnumConfig::with_nodes(40_000));
        assert!(out.len() >= 10_000, "{}", out.len());
        assert!(out[..10_000].windows(2).all(|w| w[0].log_prob >= w[1].log_prob));
        assert!(report.pruned > 0);
    }

    #[test]
    fn zero_budget_emits_only_the_empty_circuit() {
        let (out, report) = collect(&Library::g0(), 2, &ConnectivityConstraint::Full, &EnumConfig::with_nodes(0));
        assert_eq!(out.len(), 1);
        assert!(out[0].circuit.is_empty());
        assert_eq!(report.stopped_by, StopReason::Budget);
    }

    #[test]
    fn shards_split_first_placements_round_robin() {
        let lib = Library::g0();
        let space = SearchSpace::new(&lib, 3, &ConnectivityConstraint::Full).unwrap();
        assert_eq!(space.n_placements(), 15);
        assert_eq!(shard_space(&space, 1), vec![Shard::whole()]);
        let shards = shard_space(&space, 2);
        let counts: Vec<usize> = shards
            .iter()
            .map(|s| (0..15u64).filter(|&p| s.owns_prefix(p)).count())
            .collect();
        assert_eq!(counts, vec![8, 7]);
        let depth_one: Vec<usize> = shards
            .iter()
            .map(|s| {
                let mut n = 0;
                let mut v = |e: &Emission<'_>| {
                    n += (e.depth() == 1) as usize;
                    Control::Continue
                };
                run_shard(&space, *s, &capped(1), &mut v);
                n
            })
            .collect();
        assert_eq!(depth_one, vec![8, 7]);
        assert_eq!(shard_space(&space, 16)[0].level, 2);
    }

    #[test]
    fn sharded_run_reaches_the_same_unitaries() {
        let lib = Library::g0();
        let full = ConnectivityConstraint::Full;
        let keys = |cfg: &EnumConfig| -> HashSet<UnitaryKey> {
            collect(&lib, 3, &full, cfg)
                .0
                .iter()
                .map(|s| canonical_key(&s.circuit.eval_unitary().unwrap()))
                .collect()
        };
        let single = keys(&capped(3));
        for workers in [2, 3, 20] {
            let sharded = keys(&EnumConfig {
                workers,
                ..capped(3)
            });
            assert_eq!(single, sharded, "workers = {workers}");
        }
        let (merged, _) = collect(&lib, 3, &full, &EnumConfig { workers: 4, ..capped(3) });
        assert!(merged.windows(2).all(|w| w[0].log_prob >= w[1].log_prob));
    }

    #[test]
    fn runs_are_deterministic() {
        let lib = Library::g0();
        let cfg = EnumConfig {
            workers: 3,
            ..EnumConfig::with_nodes(5000)
        };
        let a = collect(&lib, 3, &ConnectivityConstraint::Full, &cfg).0;
        let b = collect(&lib, 3, &ConnectivityConstraint::Full, &cfg).0;
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(x, y)| x.circuit == y.circuit));
    }

    #[test]
    fn tiny_matrix_cache_changes_nothing() {
        let lib = Library::g0();
        let small = EnumConfig {
            matrix_cache_bytes: 4096,
            ..EnumConfig::with_nodes(3000)
        };
        let a = collect(&lib, 3, &ConnectivityConstraint::Full, &small).0;
        let b = collect(&lib, 3, &ConnectivityConstraint::Full, &EnumConfig::with_nodes(3000)).0;
        assert!(a.iter().zip(&b).all(|(x, y)| x.circuit == y.circuit));
    }

    #[test]
    fn batch_solves_identity_and_swap() {
        let lib = Library::g0();
        let full = ConnectivityConstraint::Full;
        let tasks = vec![
            Task::new("id", ComplexMatrix::identity(4)),
            Task::new("swap", standard::swap()),
        ];
        let out = synthesize_batch(&tasks, &lib, &full, &EnumConfig::with_nodes(100_000)).unwrap();
        assert!(out.sets["id"].best().unwrap().circuit.is_empty());
        let swap = &out.sets["swap"];
        assert_eq!(swap.len(), 2);

        // oracle: every ≤3-placement circuit implementing SWAP
        let mut minimal: Vec<Circuit> = brute_force(&lib, 2, &full, 3)
            .into_iter()
            .filter(|c| {
                crate::matrix::phase_aligned_distance(&c.eval_unitary().unwrap(), &standard::swap()).unwrap() < 1e-9
            })
            .collect();
        minimal.sort_by(|a, b| a.signature().cmp(&b.signature()));
        assert_eq!(minimal.len(), 2);
        let mut found: Vec<Circuit> = swap.circuits().iter().map(|s| s.circuit.clone()).collect();
        found.sort_by(|a, b| a.signature().cmp(&b.signature()));
        assert_eq!(found, minimal);
        assert_eq!(out.report.stopped_by, StopReason::Sink);
    }

    #[test]
    fn unreachable_task_gets_an_empty_set() {
        let lib = Library::g0();
        let tasks = vec![Task::new("cz", standard::cz())];
        let cfg = EnumConfig {
            max_placements: 2,
            ..EnumConfig::with_nodes(10_000)
        };
        let out = synthesize_batch(&tasks, &lib, &ConnectivityConstraint::Full, &cfg).unwrap();
        assert!(out.sets["cz"].is_empty());
        assert_eq!(out.report.stopped_by, StopReason::Exhausted);
    }

    #[test]
    fn batch_rejects_mixed_register_sizes() {
        let tasks = vec![Task::new("a", standard::h()), Task::new("b", standard::swap())];
        let r = synthesize_batch(&tasks, &Library::g0(), &ConnectivityConstraint::Full, &EnumConfig::with_nodes(10));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn solution_sets_keep_top_k_distinct() {
        let g = g0_gates();
        let mut set = SolutionSet::new("t", 2);
        let c = |gate: usize| circuit_of(1, &[(&g[gate], &[0])]).unwrap();
        set.insert(ScoredCircuit { circuit: c(0), log_prob: -3.0 });
        set.insert(ScoredCircuit { circuit: c(0), log_prob: -1.0 });
        assert_eq!(set.len(), 1);
        set.insert(ScoredCircuit { circuit: c(1), log_prob: -2.0 });
        set.insert(ScoredCircuit { circuit: c(2), log_prob: -0.5 });
        let lps: Vec<f64> = set.circuits().iter().map(|s| s.log_prob).collect();
        assert_eq!(lps, vec![-0.5, -2.0]);
    }

    #[test]
    fn config_validation() {
        assert!(EnumConfig { k: 0, ..EnumConfig::default() }.validate().is_err());
        assert!(EnumConfig { workers: 0, ..EnumConfig::default() }.validate().is_err());
        assert!(EnumConfig { budget: Budget::Seconds(0.0), ..EnumConfig::default() }.validate().is_err());
        let json = serde_json::to_value(EnumConfig::with_nodes(5)).unwrap();
        assert_eq!(json["budget"], serde_json::json!({"nodes": 5}));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn order_holds_for_random_weights(w in proptest::collection::vec(0.05f64..1.0, 5)) {
            let total: f64 = w.iter().sum();
            let lib = Library::g0().reweighted(w[..4].iter().map(|x| x / total).collect(), w[4] / total).unwrap();
            let (out, _) = collect(&lib, 2, &ConnectivityConstraint::Full, &EnumConfig::with_nodes(2000));
            prop_assert!(out.windows(2).all(|p| p[0].log_prob >= p[1].log_prob));
        }
    }
}
