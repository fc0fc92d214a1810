//! Task sets: every distinct unitary reached by enumerating a high-level gate
//! set, tagged with the fewest gates that produced it, split into a training
//! set drawn uniformly over gate counts and a test set.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, CircuitJson, ConnectivityConstraint, GateLookup};
use crate::enumerate::{enumerate_shards, Budget, Control, EnumConfig, Emission, SearchSpace, Task, Visitor};
use crate::error::{Error, Result};
use crate::gates::task_gates;
use crate::io;
use crate::library::Library;
use crate::matrix::{ComplexMatrix, KeyMap, UnitaryKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug)]
pub struct TaskRecord {
    pub id: String,
    pub unitary: ComplexMatrix,
    /// Generating circuit; provenance only, never shown to the learner.
    pub source_circuit: Circuit,
    pub gate_count: usize,
    pub split: Option<Split>,
}

impl TaskRecord {
    pub fn n_qubits(&self) -> usize {
        self.unitary.n_qubits()
    }

    /// What the learner may see.
    pub fn task(&self) -> Task {
        Task::new(self.id.clone(), self.unitary.clone())
    }

    pub fn to_json(&self) -> TaskRecordJson {
        TaskRecordJson {
            id: self.id.clone(),
            n_qubits: self.n_qubits(),
            unitary: self.unitary.clone(),
            source_circuit: self.source_circuit.to_json(),
            gate_count: self.gate_count,
            split: self.split,
        }
    }

    pub fn from_json(json: &TaskRecordJson, gates: &dyn GateLookup) -> Result<Self> {
        let source_circuit = Circuit::from_json(&json.source_circuit, gates)?;
        if json.unitary.n_qubits() != json.n_qubits || source_circuit.n_qubits() != json.n_qubits {
            return Err(Error::Format(format!("task {} has inconsistent register sizes", json.id)));
        }
        Ok(TaskRecord {
            id: json.id.clone(),
            unitary: json.unitary.clone(),
            source_circuit,
            gate_count: json.gate_count,
            split: json.split,
        })
    }
}

/// Full dataset line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TaskRecordJson {
    pub id: String,
    pub n_qubits: usize,
    pub unitary: ComplexMatrix,
    pub source_circuit: CircuitJson,
    pub gate_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// Learner-facing dataset line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PublicTask {
    pub id: String,
    pub n_qubits: usize,
    pub unitary: ComplexMatrix,
}

impl PublicTask {
    pub fn task(&self) -> Result<Task> {
        if self.unitary.n_qubits() != self.n_qubits {
            return Err(Error::Format(format!("task {} has inconsistent register sizes", self.id)));
        }
        Ok(Task::new(self.id.clone(), self.unitary.clone()))
    }
}

impl From<&TaskRecord> for PublicTask {
    fn from(r: &TaskRecord) -> Self {
        PublicTask {
            id: r.id.clone(),
            n_qubits: r.n_qubits(),
            unitary: r.unitary.clone(),
        }
    }
}

struct Found {
    depth: usize,
    path: Vec<u32>,
}

#[derive(Default)]
struct PoolCollector {
    best: KeyMap<Found>,
}

impl PoolCollector {
    fn offer(&mut self, e: &Emission<'_>) {
        if self.best.get(&e.key()).is_some_and(|f| f.depth <= e.depth()) {
            return;
        }
        self.best.insert(
            e.key(),
            Found {
                depth: e.depth(),
                path: e.path(),
            },
        );
    }
}

impl Visitor for PoolCollector {
    fn emit(&mut self, e: &Emission<'_>) -> Control {
        self.offer(e);
        Control::Continue
    }

    fn duplicate(&mut self, e: &Emission<'_>) -> Control {
        self.offer(e);
        Control::Continue
    }
}

/// Enumerate `g_tasks` (with uniform weights) for the budget in `cfg` and
/// keep one record per distinct unitary, with the shortest generator seen.
/// Records are ordered by gate count, then by generator, and numbered in
/// that order.
pub fn generate_pool(
    g_tasks: &[crate::gates::GateRef],
    n_qubits: usize,
    constraint: &ConnectivityConstraint,
    cfg: &EnumConfig,
) -> Result<Vec<TaskRecord>> {
    let lib = Library::uniform(g_tasks.to_vec())?;
    let space = SearchSpace::new(&lib, n_qubits, constraint)?;
    let (collectors, report) = enumerate_shards(&space, cfg, |_| PoolCollector::default())?;
    log::info!(
        "task pool: visited {} nodes, {} distinct unitaries before merge",
        report.visited,
        report.emitted
    );
    let mut merged: KeyMap<Found> = KeyMap::default();
    for c in collectors {
        for (key, f) in c.best {
            match merged.get(&key) {
                Some(old) if (old.depth, &old.path) <= (f.depth, &f.path) => {}
                _ => {
                    merged.insert(key, f);
                }
            }
        }
    }
    let mut found: Vec<(UnitaryKey, Found)> = merged.into_iter().collect();
    found.sort_by(|a, b| a.1.depth.cmp(&b.1.depth).then_with(|| a.1.path.cmp(&b.1.path)));
    let width = found.len().max(1).to_string().len().max(5);
    found
        .into_iter()
        .enumerate()
        .map(|(i, (_, f))| {
            let circuit = path_circuit(&space, &f.path)?;
            Ok(TaskRecord {
                id: format!("t{i:0width$}"),
                unitary: circuit.eval_unitary()?,
                gate_count: f.depth,
                source_circuit: circuit,
                split: None,
            })
        })
        .collect()
}

fn path_circuit(space: &SearchSpace, path: &[u32]) -> Result<Circuit> {
    let mut c = Circuit::new(space.n_qubits());
    for &p in path {
        let (g, q) = space.placement(p as usize);
        c.push(g.clone(), q.to_vec())?;
    }
    Ok(c)
}

/// Draw `n_train` tasks without replacement: each draw picks a gate-count
/// stratum uniformly among the non-empty ones, then a task uniformly within
/// it. Both halves keep pool order.
pub fn split_pool(pool: &[TaskRecord], n_train: usize, seed: u64) -> Result<(Vec<TaskRecord>, Vec<TaskRecord>)> {
    if n_train > pool.len() {
        return Err(Error::Config(format!(
            "cannot draw {n_train} training tasks from a pool of {}",
            pool.len()
        )));
    }
    let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in pool.iter().enumerate() {
        strata.entry(r.gate_count).or_default().push(i);
    }
    let mut strata: Vec<Vec<usize>> = strata.into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; pool.len()];
    for _ in 0..n_train {
        let s = rng.random_range(0..strata.len());
        let j = rng.random_range(0..strata[s].len());
        chosen[strata[s].remove(j)] = true;
        if strata[s].is_empty() {
            strata.remove(s);
        }
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(pool.len() - n_train);
    for (r, c) in pool.iter().zip(chosen) {
        let mut r = r.clone();
        if c {
            r.split = Some(Split::Train);
            train.push(r);
        } else {
            r.split = Some(Split::Test);
            test.push(r);
        }
    }
    Ok((train, test))
}

/// Settings of `gen-tasks`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskGenConfig {
    pub n_qubits: usize,
    pub constraint: ConnectivityConstraint,
    pub enumeration: EnumConfig,
    pub n_train: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for TaskGenConfig {
    fn default() -> Self {
        TaskGenConfig {
            n_qubits: 3,
            constraint: ConnectivityConstraint::Full,
            enumeration: EnumConfig {
                budget: Budget::Seconds(50.0),
                ..EnumConfig::default()
            },
            n_train: 1000,
            seed: 0,
            out: PathBuf::from("data"),
        }
    }
}

/// Generate the pool from the high-level gate set, split it and, when
/// `write` is set, store it under `cfg.out`.
pub fn generate_dataset(cfg: &TaskGenConfig, write: bool) -> Result<(Vec<TaskRecord>, Vec<TaskRecord>)> {
    cfg.enumeration.validate()?;
    let gates: Vec<_> = task_gates()
        .into_iter()
        .filter(|g| g.arity() <= cfg.n_qubits)
        .collect();
    let pool = generate_pool(&gates, cfg.n_qubits, &cfg.constraint, &cfg.enumeration)?;
    let (train, test) = split_pool(&pool, cfg.n_train, cfg.seed)?;
    if write {
        write_dataset(&cfg.out, &train, &test)?;
    }
    Ok((train, test))
}

/// File names inside a dataset directory.
pub const POOL_FILE: &str = "pool.jsonl";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";

/// Write `pool.jsonl` (full records) and the provenance-free `train.jsonl`
/// and `test.jsonl`.
pub fn write_dataset(dir: &Path, train: &[TaskRecord], test: &[TaskRecord]) -> Result<()> {
    let mut all: Vec<&TaskRecord> = train.iter().chain(test).collect();
    all.sort_by(|a, b| a.id.cmp(&b.id));
    io::write_jsonl(&dir.join(POOL_FILE), all.iter().map(|r| r.to_json()))?;
    io::write_jsonl(&dir.join(TRAIN_FILE), train.iter().map(PublicTask::from))?;
    io::write_jsonl(&dir.join(TEST_FILE), test.iter().map(PublicTask::from))?;
    Ok(())
}

pub fn read_public(path: &Path) -> Result<Vec<Task>> {
    io::read_jsonl::<PublicTask>(path)?.iter().map(PublicTask::task).collect()
}

pub fn read_pool(path: &Path, gates: &dyn GateLookup) -> Result<Vec<TaskRecord>> {
    io::read_jsonl::<TaskRecordJson>(path)?
        .iter()
        .map(|j| TaskRecord::from_json(j, gates))
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::gates::{standard, Gate};
    use crate::matrix::{canonical_key, phase_aligned_distance};

    const FULL: ConnectivityConstraint = ConnectivityConstraint::Full;

    fn exhaustive(depth: usize) -> EnumConfig {
        EnumConfig {
            budget: Budget::Nodes(u64::MAX),
            max_placements: depth,
            ..EnumConfig::default()
        }
    }

    #[test]
    fn hadamard_pool() {
        let h = Gate::elementary("h", standard::h()).unwrap();
        let pool = generate_pool(&[h], 1, &FULL, &exhaustive(6)).unwrap();
        assert_eq!(pool.len(), 2);
        assert_eq!(pool[0].gate_count, 0);
        assert_eq!(pool[1].gate_count, 1);
    }

    #[test]
    fn cnot_pool_is_the_generated_group() {
        let cx = Gate::elementary("cnot", standard::cnot()).unwrap();
        let pool = generate_pool(std::slice::from_ref(&cx), 2, &FULL, &exhaustive(6)).unwrap();
        // oracle: closure of {CNOT(0,1), CNOT(1,0)} under multiplication
        let gens = [
            crate::matrix::embed(&standard::cnot(), &[0, 1], 2).unwrap(),
            crate::matrix::embed(&standard::cnot(), &[1, 0], 2).unwrap(),
        ];
        let mut group = vec![ComplexMatrix::identity(4)];
        let mut keys: HashSet<UnitaryKey> = group.iter().map(canonical_key).collect();
        let mut i = 0;
        while i < group.len() {
            for g in &gens {
                let m = g.multiply(&group[i]).unwrap();
                if keys.insert(canonical_key(&m)) {
                    group.push(m);
                }
            }
            i += 1;
        }
        assert_eq!(group.len(), 6);
        assert_eq!(pool.len(), group.len());
        let pool_keys: HashSet<UnitaryKey> = pool.iter().map(|r| canonical_key(&r.unitary)).collect();
        assert_eq!(pool_keys, keys);
        let counts: Vec<usize> = pool.iter().map(|r| r.gate_count).collect();
        assert_eq!(counts, vec![0, 1, 1, 2, 2, 3]);
    }

    #[test]
    fn keeps_the_shortest_generator() {
        let gates: Vec<_> = task_gates().into_iter().filter(|g| g.arity() == 1).collect();
        let pool = generate_pool(&gates, 1, &FULL, &EnumConfig::with_nodes(3000)).unwrap();
        let z = pool
            .iter()
            .find(|r| phase_aligned_distance(&r.unitary, &standard::z()).unwrap() < 1e-9)
            .unwrap();
        assert_eq!(z.gate_count, 1);
        let keys: HashSet<UnitaryKey> = pool.iter().map(|r| canonical_key(&r.unitary)).collect();
        assert_eq!(keys.len(), pool.len());
        for r in &pool {
            assert_eq!(r.gate_count, r.source_circuit.len());
            let d = r.unitary.frobenius_distance(&r.source_circuit.eval_unitary().unwrap()).unwrap();
            assert!(d <= 1e-10);
        }
    }

    #[test]
    fn sharded_pool_matches_single_worker() {
        let gates = crate::gates::g0_gates();
        let one = generate_pool(&gates, 2, &FULL, &exhaustive(3)).unwrap();
        let four = generate_pool(&gates, 2, &FULL, &EnumConfig { workers: 4, ..exhaustive(3) }).unwrap();
        let ids = |p: &[TaskRecord]| p.iter().map(|r| (r.id.clone(), r.gate_count, canonical_key(&r.unitary))).collect::<Vec<_>>();
        assert_eq!(ids(&one), ids(&four));
    }

    fn synthetic_pool(strata: &[(usize, usize)]) -> Vec<TaskRecord> {
        let mut out = Vec::new();
        for &(gate_count, size) in strata {
            for _ in 0..size {
                out.push(TaskRecord {
                    id: format!("t{:05}", out.len()),
                    unitary: ComplexMatrix::identity(2),
                    source_circuit: Circuit::new(1),
                    gate_count,
                    split: None,
                });
            }
        }
        out
    }

    #[test]
    fn split_edge_cases() {
        let pool = synthetic_pool(&[(1, 5), (2, 5)]);
        let (train, test) = split_pool(&pool, 10, 1).unwrap();
        assert_eq!(train.len(), 10);
        assert!(test.is_empty());
        assert!(split_pool(&pool, 11, 1).is_err());
        let a = split_pool(&pool, 4, 7).unwrap();
        let b = split_pool(&pool, 4, 7).unwrap();
        let ids = |v: &[TaskRecord]| v.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a.0), ids(&b.0));
        let mut all: Vec<String> = ids(&a.0).into_iter().chain(ids(&a.1)).collect();
        all.sort();
        assert_eq!(all, ids(&pool));
        assert!(a.0.iter().all(|r| r.split == Some(Split::Train)));
        assert!(a.1.iter().all(|r| r.split == Some(Split::Test)));
    }

    #[test]
    fn split_is_uniform_over_strata() {
        let pool = synthetic_pool(&[(1, 100), (5, 10)]);
        // While the small stratum lasts every draw lands in it with
        // probability 1/2, so its count is min(X, 10) with X ~ Bin(20, 1/2).
        let pmf: Vec<f64> = (0..=20u64)
            .map(|x| {
                let binom = (0..x).fold(1.0, |acc, i| acc * (20 - i) as f64 / (i + 1) as f64);
                binom / 2f64.powi(20)
            })
            .collect();
        let mean: f64 = pmf.iter().enumerate().map(|(x, p)| p * x.min(10) as f64).sum();
        let var: f64 = pmf
            .iter()
            .enumerate()
            .map(|(x, p)| p * (x.min(10) as f64 - mean).powi(2))
            .sum();
        let runs = 1000;
        let observed: f64 = (0..runs)
            .map(|seed| {
                let (train, _) = split_pool(&pool, 20, seed).unwrap();
                train.iter().filter(|r| r.gate_count == 5).count() as f64
            })
            .sum::<f64>()
            / runs as f64;
        let sigma = (var / runs as f64).sqrt();
        assert!((observed - mean).abs() <= 3.0 * sigma, "{observed} vs {mean} ± {sigma}");
        assert!(mean > 8.0 && mean < 10.0);
    }

    #[test]
    fn public_files_hide_provenance() {
        let gates = task_gates();
        let pool = generate_pool(&gates, 2, &FULL, &EnumConfig::with_nodes(300)).unwrap();
        let (train, test) = split_pool(&pool, 20, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &train, &test).unwrap();
        let public = std::fs::read_to_string(dir.path().join(TRAIN_FILE)).unwrap();
        assert!(!public.contains("source_circuit"));
        assert!(!public.contains("placements"));
        assert!(!public.contains("gate_count"));
        let back = read_public(&dir.path().join(TRAIN_FILE)).unwrap();
        assert_eq!(back.len(), 20);
        assert_eq!(back[0].unitary, train[0].unitary);
        let full = read_pool(&dir.path().join(POOL_FILE), &gates).unwrap();
        assert_eq!(full.len(), pool.len());
        assert!(full.iter().all(|r| r.split.is_some()));
        assert_eq!(full[3].source_circuit, pool[3].source_circuit);
    }
}
