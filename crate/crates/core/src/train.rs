//! The outer training loop: sample a batch, enumerate under the current
//! library, store the batch's solutions, learn, checkpoint.
//!
//! A run directory holds `config.json`, `library_<i>.json`,
//! `solutions_<i>.jsonl`, `metrics.csv` and `timing.csv`. Iteration 0 is the
//! initial library. `metrics.csv` is rewritten last, so its final row names
//! the newest complete checkpoint.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitJson, ConnectivityConstraint};
use crate::enumerate::{synthesize_batch, Budget, EnumConfig, ExhaustionReport, ScoredCircuit, SolutionSet, Task};
use crate::error::{Error, Result};
use crate::io;
use crate::learn::{learn_step, AdoptionReport, LearnConfig};
use crate::library::{log_sum_exp, Library, LibraryJson};
use crate::matrix::phase_aligned_distance;
use crate::program::Program;
use crate::taskgen::{read_public, TEST_FILE, TRAIN_FILE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub n_qubits: usize,
    pub constraint: ConnectivityConstraint,
    pub seed: u64,
    pub enumeration: EnumConfig,
    pub learn: LearnConfig,
    /// Directory with `train.jsonl` and `test.jsonl`.
    pub dataset: PathBuf,
    pub run_dir: PathBuf,
    /// Starting library checkpoint; the elementary set when absent.
    pub initial_library: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 100,
            batch_size: 25,
            n_qubits: 3,
            constraint: ConnectivityConstraint::Full,
            seed: 0,
            enumeration: EnumConfig::default(),
            learn: LearnConfig::default(),
            dataset: PathBuf::from("data"),
            run_dir: PathBuf::from("run"),
            initial_library: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.n_qubits == 0 {
            return Err(Error::Config("n_qubits must be at least 1".into()));
        }
        self.enumeration.validate()?;
        self.learn.validate()
    }

    /// Equal up to the iteration count, which a resumed run may extend.
    fn compatible_with(&self, other: &TrainConfig) -> bool {
        TrainConfig { iterations: 0, ..self.clone() } == TrainConfig { iterations: 0, ..other.clone() }
    }
}

pub const METRICS_HEADER: [&str; 8] = [
    "iteration",
    "seen_train_solved_frac",
    "train_solved_frac",
    "test_solved_frac",
    "library_size",
    "mean_task_log_likelihood",
    "new_gates_this_iter",
    "elapsed_s",
];

/// One line of `metrics.csv`.
///
/// `seen_train_solved_frac` counts training tasks with stored solutions,
/// which only batch tasks receive. `train_solved_frac` also counts training
/// tasks matched anywhere in this iteration's enumeration, so it is never
/// smaller. `mean_task_log_likelihood` averages over tasks with stored
/// solutions under the updated library (NaN when there are none).
/// `elapsed_s` is wall time since the run started, or 0 under node budgets
/// so that reruns are byte-identical; `timing.csv` always has wall times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub seen_train_solved_frac: f64,
    pub train_solved_frac: f64,
    pub test_solved_frac: f64,
    pub library_size: usize,
    pub mean_task_log_likelihood: f64,
    pub new_gates_this_iter: usize,
    pub elapsed_s: f64,
}

/// One line of `timing.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub iteration: usize,
    pub enumerate_s: f64,
    pub learn_s: f64,
    pub total_s: f64,
    pub visited: u64,
    pub emitted: u64,
}

fn csv_bytes<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.serialize(r).map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    io::write_atomic(path, &csv_bytes(&METRICS_HEADER, rows)?)
}

/// Parse `metrics.csv`, rejecting any header other than [`METRICS_HEADER`].
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::Format(format!("{}: unexpected metrics header", path.display())));
    }
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(format!("reading {}", path.display()), source),
        other => Error::Format(format!("{}:{line}: {other:?}", path.display())),
    }
}

const TIMING_HEADER: [&str; 6] = ["iteration", "enumerate_s", "learn_s", "total_s", "visited", "emitted"];

pub fn library_path(run_dir: &Path, iteration: usize) -> PathBuf {
    run_dir.join(format!("library_{iteration}.json"))
}

pub fn solutions_path(run_dir: &Path, iteration: usize) -> PathBuf {
    run_dir.join(format!("solutions_{iteration}.jsonl"))
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoredCircuit {
    pub program: String,
    pub circuit: CircuitJson,
    pub log_prob: f64,
}

/// One line of `solutions_<i>.jsonl`: a task's stored solutions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionsLine {
    pub task_id: String,
    pub k: usize,
    pub log_likelihood: f64,
    pub circuits: Vec<StoredCircuit>,
}

impl SolutionsLine {
    pub fn from_set(set: &SolutionSet) -> Self {
        let lps: Vec<f64> = set.circuits().iter().map(|c| c.log_prob).collect();
        SolutionsLine {
            task_id: set.task_id.clone(),
            k: set.k(),
            log_likelihood: log_sum_exp(&lps),
            circuits: set
                .circuits()
                .iter()
                .map(|c| StoredCircuit {
                    program: Program::from_circuit(&c.circuit).to_string(),
                    circuit: c.circuit.to_json(),
                    log_prob: c.log_prob,
                })
                .collect(),
        }
    }

    pub fn to_set(&self, lib: &Library) -> Result<SolutionSet> {
        let mut set = SolutionSet::new(self.task_id.clone(), self.k);
        for c in &self.circuits {
            set.insert(ScoredCircuit {
                circuit: crate::circuit::Circuit::from_json(&c.circuit, lib)?,
                log_prob: c.log_prob,
            });
        }
        Ok(set)
    }
}

/// Learner-visible train and test tasks.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<Task>,
    pub test: Vec<Task>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Dataset {
            train: read_public(&dir.join(TRAIN_FILE))?,
            test: read_public(&dir.join(TEST_FILE))?,
        })
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        let mut ids = HashSet::new();
        for t in self.train.iter().chain(&self.test) {
            if t.unitary.n_qubits() != n_qubits {
                return Err(Error::Config(format!(
                    "task {} acts on {} qubits, the run uses {n_qubits}",
                    t.id,
                    t.unitary.n_qubits()
                )));
            }
            if !ids.insert(t.id.as_str()) {
                return Err(Error::Config(format!("task id {} appears twice", t.id)));
            }
        }
        Ok(())
    }
}

/// Indices of the batch for `iteration`: distinct within the batch, drawn
/// independently across iterations from a stream fixed by `(seed,
/// iteration)`.
pub fn sample_batch(seed: u64, iteration: usize, n_train: usize, batch_size: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    rand::seq::index::sample(&mut rng, n_train, batch_size.min(n_train)).into_vec()
}

/// What one iteration did.
#[derive(Clone, Debug)]
pub struct IterationSummary {
    pub metrics: MetricsRow,
    pub timing: TimingRow,
    pub batch: Vec<String>,
    pub adoptions: Vec<AdoptionReport>,
    pub report: ExhaustionReport,
}

pub struct Trainer {
    cfg: TrainConfig,
    data: Dataset,
    all_tasks: Vec<Task>,
    run_dir: Option<PathBuf>,
    library: Library,
    store: BTreeMap<String, SolutionSet>,
    metrics: Vec<MetricsRow>,
    timing: Vec<TimingRow>,
    iteration: usize,
    /// Wall time spent by earlier processes of a resumed run.
    elapsed_offset: f64,
    started: Instant,
}

impl Trainer {
    /// A fresh run. With a run directory, writes `config.json` and the
    /// iteration-0 checkpoint, replacing earlier metrics.
    pub fn new(cfg: TrainConfig, data: Dataset, initial: Library, run_dir: Option<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        data.validate(cfg.n_qubits)?;
        if cfg.batch_size > data.train.len() {
            return Err(Error::Config(format!(
                "batch_size {} exceeds the {} training tasks",
                cfg.batch_size,
                data.train.len()
            )));
        }
        let all_tasks = data.train.iter().chain(&data.test).cloned().collect();
        let t = Trainer {
            cfg,
            data,
            all_tasks,
            run_dir,
            library: initial,
            store: BTreeMap::new(),
            metrics: Vec::new(),
            timing: Vec::new(),
            iteration: 0,
            elapsed_offset: 0.0,
            started: Instant::now(),
        };
        if let Some(dir) = &t.run_dir {
            io::write_json(&dir.join(CONFIG_FILE), &t.cfg)?;
            t.checkpoint(dir)?;
        }
        Ok(t)
    }

    /// Continue from the newest complete checkpoint in `run_dir`. The stored
    /// config must match `cfg` except for `iterations`.
    pub fn resume(cfg: TrainConfig, data: Dataset, run_dir: PathBuf) -> Result<Self> {
        let saved: TrainConfig = io::read_json(&run_dir.join(CONFIG_FILE))?;
        if !saved.compatible_with(&cfg) {
            return Err(Error::Config(format!(
                "{} was written with a different configuration",
                run_dir.display()
            )));
        }
        let metrics = read_metrics(&run_dir.join(METRICS_FILE))?;
        let iteration = metrics.last().map_or(0, |m| m.iteration);
        let library = Library::from_json(&io::read_json::<LibraryJson>(&library_path(&run_dir, iteration))?)?;
        let mut store = BTreeMap::new();
        for line in io::read_jsonl::<SolutionsLine>(&solutions_path(&run_dir, iteration))? {
            store.insert(line.task_id.clone(), line.to_set(&library)?);
        }
        let timing = read_timing(&run_dir.join(TIMING_FILE))?
            .into_iter()
            .filter(|t| t.iteration <= iteration)
            .collect();
        let elapsed_offset = metrics.last().map_or(0.0, |m| m.elapsed_s);
        let mut t = Trainer::new(cfg, data, library, None)?;
        t.run_dir = Some(run_dir);
        t.store = store;
        t.metrics = metrics;
        t.timing = timing;
        t.iteration = iteration;
        t.elapsed_offset = elapsed_offset;
        t.revalidate()?;
        log::info!("resuming after iteration {iteration}");
        Ok(t)
    }

    pub fn library(&self) -> &Library {
        &self.library
    }

    pub fn metrics(&self) -> &[MetricsRow] {
        &self.metrics
    }

    pub fn timing(&self) -> &[TimingRow] {
        &self.timing
    }

    /// Stored solutions of every training task solved so far.
    pub fn solutions(&self) -> &BTreeMap<String, SolutionSet> {
        &self.store
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    /// Run until `cfg.iterations` iterations are complete.
    pub fn run(&mut self) -> Result<()> {
        while self.iteration < self.cfg.iterations {
            self.step()?;
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<IterationSummary> {
        let iteration = self.iteration + 1;
        let t0 = Instant::now();
        let batch: Vec<String> = sample_batch(self.cfg.seed, iteration, self.data.train.len(), self.cfg.batch_size)
            .into_iter()
            .map(|i| self.data.train[i].id.clone())
            .collect();

        let mut found = synthesize_batch(&self.all_tasks, &self.library, &self.cfg.constraint, &self.cfg.enumeration)?;
        let enumerate_s = t0.elapsed().as_secs_f64();
        let hit = |id: &str, found: &BTreeMap<String, SolutionSet>| found.get(id).is_some_and(|s| !s.is_empty());
        let test_solved = self.data.test.iter().filter(|t| hit(&t.id, &found.sets)).count();

        let mut batch_hits = 0;
        for id in &batch {
            let Some(set) = found.sets.remove(id) else { continue };
            if set.is_empty() {
                continue;
            }
            batch_hits += 1;
            self.store
                .entry(id.clone())
                .or_insert_with(|| SolutionSet::new(id.clone(), self.cfg.enumeration.k))
                .merge(set);
        }
        if batch_hits == 0 {
            log::warn!("iteration {iteration}: no batch task was solved; consider a larger enumeration budget");
        }
        let seen = self.store.values().filter(|s| !s.is_empty()).count();
        let train_solved = self
            .data
            .train
            .iter()
            .filter(|t| self.store.get(&t.id).is_some_and(|s| !s.is_empty()) || hit(&t.id, &found.sets))
            .count();

        let t1 = Instant::now();
        let sets: Vec<SolutionSet> = self.store.values().filter(|s| !s.is_empty()).cloned().collect();
        let outcome = learn_step(&self.library, &sets, self.cfg.n_qubits, &self.cfg.constraint, &self.cfg.learn)?;
        let learn_s = t1.elapsed().as_secs_f64();
        for set in outcome.sets {
            self.store.insert(set.task_id.clone(), set);
        }
        self.library = outcome.library.with_version(iteration as u64);
        self.revalidate()?;

        let likelihoods: Vec<f64> = self
            .store
            .values()
            .filter(|s| !s.is_empty())
            .map(|s| log_sum_exp(&s.circuits().iter().map(|c| c.log_prob).collect::<Vec<_>>()))
            .collect();
        let mean_ll = if likelihoods.is_empty() {
            f64::NAN
        } else {
            likelihoods.iter().sum::<f64>() / likelihoods.len() as f64
        };
        let frac = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let elapsed_s = match self.cfg.enumeration.budget {
            Budget::Nodes(_) => 0.0,
            Budget::Seconds(_) => self.elapsed_offset + self.started.elapsed().as_secs_f64(),
        };
        let metrics = MetricsRow {
            iteration,
            seen_train_solved_frac: frac(seen, self.data.train.len()),
            train_solved_frac: frac(train_solved, self.data.train.len()),
            test_solved_frac: frac(test_solved, self.data.test.len()),
            library_size: self.library.len(),
            mean_task_log_likelihood: mean_ll,
            new_gates_this_iter: outcome.adoptions.len(),
            elapsed_s,
        };
        let timing = TimingRow {
            iteration,
            enumerate_s,
            learn_s,
            total_s: t0.elapsed().as_secs_f64(),
            visited: found.report.visited,
            emitted: found.report.emitted,
        };
        log::info!(
            "iteration {iteration}: train {:.3} (seen {:.3}) test {:.3}, |G| = {}, +{} gates, {:.1}s",
            metrics.train_solved_frac,
            metrics.seen_train_solved_frac,
            metrics.test_solved_frac,
            metrics.library_size,
            metrics.new_gates_this_iter,
            timing.total_s
        );
        self.metrics.push(metrics.clone());
        self.timing.push(timing.clone());
        self.iteration = iteration;
        if let Some(dir) = &self.run_dir {
            self.checkpoint(dir)?;
        }
        Ok(IterationSummary {
            metrics,
            timing,
            batch,
            adoptions: outcome.adoptions,
            report: found.report,
        })
    }

    /// Every stored circuit must still implement its task.
    fn revalidate(&self) -> Result<()> {
        let tol = self.cfg.enumeration.tolerance;
        for t in &self.data.train {
            let Some(set) = self.store.get(&t.id) else { continue };
            for c in set.circuits() {
                let d = phase_aligned_distance(&c.circuit.eval_unitary()?, &t.unitary)?;
                if !(d <= tol) {
                    return Err(Error::CorruptSolution {
                        task: t.id.clone(),
                        distance: d,
                    });
                }
            }
        }
        if let Some(id) = self.store.keys().find(|id| !self.data.train.iter().any(|t| &t.id == *id)) {
            return Err(Error::Format(format!("stored solutions for unknown task {id}")));
        }
        Ok(())
    }

    fn checkpoint(&self, dir: &Path) -> Result<()> {
        io::write_json(&library_path(dir, self.iteration), &self.library.to_json())?;
        io::write_jsonl(
            &solutions_path(dir, self.iteration),
            self.store.values().filter(|s| !s.is_empty()).map(SolutionsLine::from_set),
        )?;
        io::write_atomic(&dir.join(TIMING_FILE), &csv_bytes(&TIMING_HEADER, &self.timing)?)?;
        write_metrics(&dir.join(METRICS_FILE), &self.metrics)
    }
}

fn read_timing(path: &Path) -> Result<Vec<TimingRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub fn initial_library(cfg: &TrainConfig) -> Result<Library> {
    match &cfg.initial_library {
        Some(p) => Library::from_json(&io::read_json::<LibraryJson>(p)?),
        None => Ok(Library::g0()),
    }
}

/// Train from `cfg.dataset` into `cfg.run_dir`. With `resume`, continue an
/// existing run instead of starting over.
pub fn run_training(cfg: &TrainConfig, resume: bool) -> Result<Trainer> {
    let data = Dataset::load(&cfg.dataset)?;
    let mut t = if resume {
        Trainer::resume(cfg.clone(), data, cfg.run_dir.clone())?
    } else {
        Trainer::new(cfg.clone(), data, initial_library(cfg)?, Some(cfg.run_dir.clone()))?
    };
    t.run()?;
    Ok(t)
}

#[derive(Clone, Debug)]
pub struct TaskEval {
    pub id: String,
    /// Most probable matching circuit found, if any.
    pub best: Option<ScoredCircuit>,
}

impl TaskEval {
    pub fn solved(&self) -> bool {
        self.best.is_some()
    }
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    /// Solved tasks over all tasks; 0 for an empty task list.
    pub solved_fraction: f64,
    pub tasks: Vec<TaskEval>,
    pub report: ExhaustionReport,
}

/// Fresh enumeration under `lib`; a task is solved if any emitted circuit
/// matches it.
pub fn evaluate(
    lib: &Library,
    tasks: &[Task],
    constraint: &ConnectivityConstraint,
    cfg: &EnumConfig,
) -> Result<EvalReport> {
    let mut out = synthesize_batch(tasks, lib, constraint, cfg)?;
    let tasks: Vec<TaskEval> = tasks
        .iter()
        .map(|t| TaskEval {
            id: t.id.clone(),
            best: out.sets.remove(&t.id).and_then(|s| s.best().cloned()),
        })
        .collect();
    let solved = tasks.iter().filter(|t| t.solved()).count();
    Ok(EvalReport {
        solved_fraction: if tasks.is_empty() { 0.0 } else { solved as f64 / tasks.len() as f64 },
        tasks,
        report: out.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Circuit;
    use crate::gates::{g0_gates, standard};
    use crate::matrix::{embed, ComplexMatrix};

    /// Every distinct single-placement unitary of the elementary set on two
    /// qubits; the identity is excluded.
    fn depth_one_tasks() -> Vec<Task> {
        let mut out: Vec<Task> = Vec::new();
        for g in g0_gates() {
            let assignments: Vec<Vec<usize>> = if g.arity() == 1 {
                vec![vec![0], vec![1]]
            } else {
                vec![vec![0, 1], vec![1, 0]]
            };
            for q in assignments {
                let u = embed(g.matrix(), &q, 2).unwrap();
                out.push(Task::new(format!("{}{:?}", g.name(), q), u));
            }
        }
        out
    }

    fn toy_config(iterations: usize) -> TrainConfig {
        TrainConfig {
            iterations,
            batch_size: 4,
            n_qubits: 2,
            seed: 11,
            enumeration: EnumConfig::with_nodes(2_000),
            ..TrainConfig::default()
        }
    }

    fn toy_data() -> Dataset {
        let mut tasks = depth_one_tasks();
        let test = tasks.split_off(6);
        Dataset { train: tasks, test }
    }

    #[test]
    fn toy_run_solves_every_depth_one_task() {
        let tasks = depth_one_tasks();
        assert_eq!(tasks.len(), 8);
        let mut t = Trainer::new(toy_config(3), toy_data(), Library::g0(), None).unwrap();
        t.run().unwrap();
        let m = t.metrics();
        assert_eq!(m.len(), 3);
        assert_eq!(m.last().unwrap().train_solved_frac, 1.0);
        assert_eq!(m.last().unwrap().test_solved_frac, 1.0);
        for (i, row) in m.iter().enumerate() {
            assert_eq!(row.iteration, i + 1);
            assert!(row.train_solved_frac >= row.seen_train_solved_frac);
            assert!(row.library_size >= 4);
        }
        for w in m.windows(2) {
            assert!(w[1].library_size >= w[0].library_size);
            assert!(w[1].seen_train_solved_frac >= w[0].seen_train_solved_frac);
        }
        // each stored solution is the single gate (or a learned rewrite of it)
        for set in t.solutions().values() {
            assert_eq!(set.best().unwrap().circuit.expand().len(), 1);
        }
    }

    #[test]
    fn zero_iterations_is_a_noop() {
        let dir = tempfile::tempdir().unwrap();
        let t = Trainer::new(toy_config(0), toy_data(), Library::g0(), Some(dir.path().to_path_buf())).unwrap();
        assert_eq!(t.library().len(), 4);
        let text = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(text.trim_end(), METRICS_HEADER.join(","));
        assert!(read_metrics(&dir.path().join(METRICS_FILE)).unwrap().is_empty());
        let lib: LibraryJson = io::read_json(&library_path(dir.path(), 0)).unwrap();
        let lib = Library::from_json(&lib).unwrap();
        assert_eq!(lib.gates(), Library::g0().gates());
        assert_eq!(lib.theta(), Library::g0().theta());
    }

    #[test]
    fn reruns_are_byte_identical() {
        let run = || {
            let dir = tempfile::tempdir().unwrap();
            let mut t = Trainer::new(toy_config(3), toy_data(), Library::g0(), Some(dir.path().to_path_buf())).unwrap();
            t.run().unwrap();
            (
                std::fs::read(dir.path().join(METRICS_FILE)).unwrap(),
                std::fs::read(library_path(dir.path(), 3)).unwrap(),
                std::fs::read(solutions_path(dir.path(), 3)).unwrap(),
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resume_matches_an_uninterrupted_run() {
        let full = tempfile::tempdir().unwrap();
        let mut t = Trainer::new(toy_config(3), toy_data(), Library::g0(), Some(full.path().to_path_buf())).unwrap();
        t.run().unwrap();

        let split = tempfile::tempdir().unwrap();
        let mut t = Trainer::new(toy_config(1), toy_data(), Library::g0(), Some(split.path().to_path_buf())).unwrap();
        t.run().unwrap();
        drop(t);
        let mut t = Trainer::resume(toy_config(3), toy_data(), split.path().to_path_buf()).unwrap();
        assert_eq!(t.iteration(), 1);
        t.run().unwrap();
        for f in [METRICS_FILE, "library_3.json", "solutions_3.jsonl"] {
            assert_eq!(
                std::fs::read(full.path().join(f)).unwrap(),
                std::fs::read(split.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let other = TrainConfig { seed: 12, ..toy_config(3) };
        assert!(matches!(
            Trainer::resume(other, toy_data(), split.path().to_path_buf()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn batches_are_distinct_and_seeded() {
        for it in 1..20 {
            let b = sample_batch(5, it, 30, 25);
            let distinct: HashSet<usize> = b.iter().copied().collect();
            assert_eq!(distinct.len(), 25);
            assert!(b.iter().all(|&i| i < 30));
            assert_eq!(b, sample_batch(5, it, 30, 25));
        }
        assert_ne!(sample_batch(5, 1, 30, 5), sample_batch(5, 2, 30, 5));
    }

    #[test]
    fn config_errors() {
        let big = TrainConfig { batch_size: 7, ..toy_config(1) };
        assert!(matches!(Trainer::new(big, toy_data(), Library::g0(), None), Err(Error::Config(_))));
        let wrong = TrainConfig { n_qubits: 3, ..toy_config(1) };
        assert!(matches!(Trainer::new(wrong, toy_data(), Library::g0(), None), Err(Error::Config(_))));
        let err = serde_json::from_str::<TrainConfig>(r#"{"iterationz": 3}"#);
        assert!(err.is_err());
        let cfg: TrainConfig = serde_json::from_str(r#"{"iterations": 3, "enumeration": {"budget": {"nodes": 10}}}"#).unwrap();
        assert_eq!(cfg.enumeration.budget, Budget::Nodes(10));
        assert_eq!(cfg.batch_size, 25);
    }

    #[test]
    fn metrics_csv_round_trip_and_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![MetricsRow {
            iteration: 1,
            seen_train_solved_frac: 0.25,
            train_solved_frac: 0.5,
            test_solved_frac: 0.125,
            library_size: 5,
            mean_task_log_likelihood: -12.5,
            new_gates_this_iter: 1,
            elapsed_s: 0.0,
        }];
        let p = dir.path().join(METRICS_FILE);
        write_metrics(&p, &rows).unwrap();
        assert_eq!(read_metrics(&p).unwrap(), rows);
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "1,0.25,0.5,0.125,5,-12.5,1,0.0");
        std::fs::write(&p, text.replace("elapsed_s", "elapsed")).unwrap();
        assert!(matches!(read_metrics(&p), Err(Error::Format(_))));
    }

    #[test]
    fn evaluate_examples() {
        let id = Task::new("id", ComplexMatrix::identity(4));
        let swap = Task::new("swap", standard::swap());
        let zero = EnumConfig::with_nodes(0);
        let r = evaluate(&Library::g0(), &[id.clone(), swap.clone()], &ConnectivityConstraint::Full, &zero).unwrap();
        assert_eq!(r.solved_fraction, 0.5);
        assert!(r.tasks[0].solved() && !r.tasks[1].solved());
        let r = evaluate(&Library::g0(), &[id, swap], &ConnectivityConstraint::Full, &EnumConfig::with_nodes(5_000)).unwrap();
        assert_eq!(r.solved_fraction, 1.0);
        assert_eq!(r.tasks[1].best.as_ref().unwrap().circuit.len(), 3);
        let empty = evaluate(&Library::g0(), &[], &ConnectivityConstraint::Full, &zero).unwrap();
        assert_eq!(empty.solved_fraction, 0.0);
    }

    #[test]
    fn corrupt_stored_solution_is_rejected() {
        let mut t = Trainer::new(toy_config(1), toy_data(), Library::g0(), None).unwrap();
        t.run().unwrap();
        let (id, _) = t.store.iter().next().map(|(k, v)| (k.clone(), v.clone())).unwrap();
        let mut bad = SolutionSet::new(id.clone(), 2);
        bad.insert(ScoredCircuit {
            circuit: Circuit::new(2),
            log_prob: 0.0,
        });
        t.store.insert(id, bad);
        assert!(matches!(t.revalidate(), Err(Error::CorruptSolution { .. })));
    }
}
