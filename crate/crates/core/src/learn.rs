//! Library learning: propose gates from repeated solution fragments, refit
//! the weights by EM, and keep the extension that most improves
//!
//! ```text
//! score(G, θ) = ln P(G) + ln P(θ | G) + Σ_u ln Σ_{c ∈ B_u} P(c | G, θ)
//! ```
//!
//! Circuits are scored through per-gate use counts, so a candidate only needs
//! the number of greedy matches of its body in each solution.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, ConnectivityConstraint, Placement};
use crate::enumerate::{ScoredCircuit, SolutionSet};
use crate::error::{Error, Result};
use crate::gates::{Gate, GateRef};
use crate::library::{
    chi, library_log_prior, weights_log_prior, log_sum_exp, Library, PriorConfig,
};
use crate::program::Program;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub max_fragment_size: usize,
    /// Highest-support fragments scored per adoption round.
    pub max_candidates: usize,
    /// Added to every expected count in the M-step. EM is exact MAP-EM for
    /// the weight prior when this equals `dirichlet_alpha - 1`.
    pub pseudocount: f64,
    pub em_max_iters: usize,
    pub em_tolerance: f64,
    /// Required score gain for adopting a gate.
    pub min_gain: f64,
    /// Cap on adoptions within one `learn_step`.
    pub max_adoptions: usize,
    pub prior: PriorConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            max_fragment_size: 4,
            max_candidates: 200,
            pseudocount: 1.0,
            em_max_iters: 100,
            em_tolerance: 1e-9,
            min_gain: 1e-9,
            max_adoptions: 64,
            prior: PriorConfig::default(),
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_fragment_size < 2 {
            return Err(Error::Config("max_fragment_size must be at least 2".into()));
        }
        if !(self.pseudocount > 0.0) {
            return Err(Error::Config("pseudocount must be positive".into()));
        }
        if !(self.prior.lambda_struct > 0.0) || !(self.prior.dirichlet_alpha > 0.0) {
            return Err(Error::Config("lambda_struct and dirichlet_alpha must be positive".into()));
        }
        Ok(())
    }
}

/// A placement with the gate replaced by an integer id.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Op {
    gate: u32,
    qubits: Vec<u8>,
}

/// Gate ids by name, in first-seen order.
#[derive(Default)]
struct Interner {
    ids: HashMap<String, u32>,
}

impl Interner {
    fn from_library(lib: &Library) -> Self {
        let mut i = Interner::default();
        for g in lib.gates() {
            i.id(g.name());
        }
        i
    }

    fn id(&mut self, name: &str) -> u32 {
        let next = self.ids.len() as u32;
        *self.ids.entry(name.to_string()).or_insert(next)
    }

    fn encode(&mut self, c: &Circuit) -> Vec<Op> {
        c.placements()
            .iter()
            .map(|p| Op {
                gate: self.id(p.gate.name()),
                qubits: p.qubits.iter().map(|&q| q as u8).collect(),
            })
            .collect()
    }
}

/// Rename qubits by order of first appearance.
fn abstract_window(window: &[Op]) -> Vec<Op> {
    let mut map: Vec<(u8, u8)> = Vec::new();
    window
        .iter()
        .map(|op| Op {
            gate: op.gate,
            qubits: op
                .qubits
                .iter()
                .map(|&q| match map.iter().find(|(from, _)| *from == q) {
                    Some(&(_, to)) => to,
                    None => {
                        let to = map.len() as u8;
                        map.push((q, to));
                        to
                    }
                })
                .collect(),
        })
        .collect()
}

/// Injective parameter assignment under which `pattern` equals `window`.
fn match_at(pattern: &[Op], arity: usize, window: &[Op]) -> Option<Vec<u8>> {
    let mut map = vec![u8::MAX; arity];
    for (p, w) in pattern.iter().zip(window) {
        if p.gate != w.gate || p.qubits.len() != w.qubits.len() {
            return None;
        }
        for (&param, &q) in p.qubits.iter().zip(&w.qubits) {
            let bound = map[param as usize];
            if bound == u8::MAX {
                if map.contains(&q) {
                    return None;
                }
                map[param as usize] = q;
            } else if bound != q {
                return None;
            }
        }
    }
    Some(map)
}

fn pattern_arity(pattern: &[Op]) -> usize {
    pattern
        .iter()
        .flat_map(|op| op.qubits.iter())
        .map(|&q| q as usize + 1)
        .max()
        .unwrap_or(0)
}

/// Leftmost non-overlapping matches of `pattern` in `ops`, as
/// `(position, parameter map)`.
fn greedy_matches(pattern: &[Op], arity: usize, ops: &[Op]) -> Vec<(usize, Vec<u8>)> {
    let mut out = Vec::new();
    let len = pattern.len();
    let mut i = 0;
    while len > 0 && i + len <= ops.len() {
        if let Some(map) = match_at(pattern, arity, &ops[i..i + len]) {
            out.push((i, map));
            i += len;
        } else {
            i += 1;
        }
    }
    out
}

/// Replace the leftmost non-overlapping occurrences of `g`'s body in `c` by
/// single placements of `g`. Elementary `g` leaves `c` unchanged.
pub fn rewrite_with(g: &GateRef, c: &Circuit) -> Circuit {
    let Some(body) = g.body() else {
        return c.clone();
    };
    let mut interner = Interner::default();
    let pattern = interner.encode(body);
    let ops = interner.encode(c);
    let matches = greedy_matches(&pattern, g.arity(), &ops);
    if matches.is_empty() {
        return c.clone();
    }
    let mut out = Vec::with_capacity(c.len());
    let mut next = matches.iter().peekable();
    let mut i = 0;
    while i < c.len() {
        match next.peek() {
            Some((pos, map)) if *pos == i => {
                out.push(Placement {
                    gate: g.clone(),
                    qubits: map.iter().map(|&q| q as usize).collect(),
                });
                i += pattern.len();
                next.next();
            }
            _ => {
                out.push(c.placements()[i].clone());
                i += 1;
            }
        }
    }
    Circuit::from_placements(c.n_qubits(), out).expect("rewriting preserves validity")
}

/// Where a fragment occurs: solution set, circuit within it, start position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub task: usize,
    pub solution: usize,
    pub position: usize,
}

/// A contiguous placement pattern seen at least twice among the solutions.
#[derive(Clone, Debug)]
pub struct Fragment {
    /// Body over `arity` qubit parameters numbered by first appearance.
    pub body: Circuit,
    pub support: Vec<Occurrence>,
    pattern: Vec<Op>,
}

impl Fragment {
    pub fn size(&self) -> usize {
        self.body.len()
    }

    pub fn arity(&self) -> usize {
        self.body.n_qubits()
    }

    pub fn program(&self) -> Program {
        Program::from_circuit(&self.body)
    }
}

/// All contiguous subsequences of 2..=`max_size` placements, abstracted over
/// qubit identity, that occur at least twice (overlaps included). Sorted by
/// support, most frequent first; ties by size and pattern.
pub fn extract_fragments(lib: &Library, sets: &[SolutionSet], max_size: usize) -> Result<Vec<Fragment>> {
    let mut interner = Interner::from_library(lib);
    let mut table: HashMap<Vec<Op>, Vec<Occurrence>> = HashMap::new();
    for (t, set) in sets.iter().enumerate() {
        for (s, sc) in set.circuits().iter().enumerate() {
            let ops = interner.encode(&sc.circuit);
            for start in 0..ops.len() {
                for len in 2..=max_size.min(ops.len() - start) {
                    let pattern = abstract_window(&ops[start..start + len]);
                    table.entry(pattern).or_default().push(Occurrence {
                        task: t,
                        solution: s,
                        position: start,
                    });
                }
            }
        }
    }
    let mut fragments: Vec<(Vec<Op>, Vec<Occurrence>)> =
        table.into_iter().filter(|(_, occ)| occ.len() >= 2).collect();
    fragments.sort_by(|a, b| {
        b.1.len()
            .cmp(&a.1.len())
            .then(a.0.len().cmp(&b.0.len()))
            .then_with(|| a.0.cmp(&b.0))
    });
    let by_id: HashMap<u32, &GateRef> = lib
        .gates()
        .iter()
        .map(|g| (interner.ids[g.name()], g))
        .collect();
    fragments
        .into_iter()
        .map(|(pattern, support)| {
            let arity = pattern_arity(&pattern);
            let mut body = Circuit::new(arity);
            for op in &pattern {
                let gate = by_id.get(&op.gate).ok_or_else(|| {
                    let name = interner.ids.iter().find(|(_, &v)| v == op.gate).map(|(k, _)| k.clone());
                    Error::UnknownGate(name.unwrap_or_default())
                })?;
                body.push((*gate).clone(), op.qubits.iter().map(|&q| q as usize).collect())?;
            }
            Ok(Fragment { body, support, pattern })
        })
        .collect()
}

/// Gate-use counts of every circuit, indexed like the library.
struct Corpus {
    /// task -> circuit -> counts (length = number of gates)
    counts: Vec<Vec<Vec<f64>>>,
    /// task -> circuit -> encoded placements
    ops: Vec<Vec<Vec<Op>>>,
}

impl Corpus {
    fn new(lib: &Library, sets: &[SolutionSet]) -> Result<Self> {
        let mut interner = Interner::from_library(lib);
        let k = lib.len();
        let mut counts = Vec::new();
        let mut ops = Vec::new();
        for set in sets.iter().filter(|s| !s.is_empty()) {
            let mut task_counts = Vec::new();
            let mut task_ops = Vec::new();
            for sc in set.circuits() {
                let encoded = interner.encode(&sc.circuit);
                let mut n = vec![0.0; k];
                for op in &encoded {
                    let g = op.gate as usize;
                    if g >= k {
                        let name = sc.circuit.placements().iter().find(|p| lib.index_of(p.gate.name()).is_none());
                        return Err(Error::UnknownGate(
                            name.map(|p| p.gate.name().to_string()).unwrap_or_default(),
                        ));
                    }
                    n[g] += 1.0;
                }
                task_counts.push(n);
                task_ops.push(encoded);
            }
            counts.push(task_counts);
            ops.push(task_ops);
        }
        Ok(Corpus { counts, ops })
    }

    fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

fn log_chis(lib: &Library, n_qubits: usize, constraint: &ConnectivityConstraint) -> Result<Vec<f64>> {
    lib.gates()
        .iter()
        .map(|g| chi(g, n_qubits, constraint).map(f64::ln))
        .collect()
}

/// `ln P(θ | G) + Σ_u ln Σ_c P(c)` on a count corpus.
fn weight_objective(counts: &[Vec<Vec<f64>>], log_chi: &[f64], theta: &[f64], end: f64, prior: &PriorConfig) -> f64 {
    let cost: Vec<f64> = theta.iter().zip(log_chi).map(|(t, c)| t.ln() + c).collect();
    let log_end = end.ln();
    let mut total = weights_log_prior(theta, end, prior);
    let mut lps = Vec::new();
    for task in counts {
        lps.clear();
        lps.extend(
            task.iter()
                .map(|n| log_end + n.iter().zip(&cost).map(|(a, b)| a * b).sum::<f64>()),
        );
        total += log_sum_exp(&lps);
    }
    total
}

/// Result of fitting the weights of a fixed gate set.
#[derive(Clone, Debug)]
pub struct EmFit {
    pub theta: Vec<f64>,
    pub theta_end: f64,
    /// `ln P(θ | G) + Σ_u ln Σ_c P(c)` after each iteration, starting with
    /// the initial weights.
    pub trace: Vec<f64>,
}

impl EmFit {
    pub fn objective(&self) -> f64 {
        *self.trace.last().expect("trace starts with the initial objective")
    }
}

fn em(counts: &[Vec<Vec<f64>>], log_chi: &[f64], theta0: &[f64], end0: f64, cfg: &LearnConfig) -> EmFit {
    let k = theta0.len();
    if counts.is_empty() {
        let p = 1.0 / (k + 1) as f64;
        let theta = vec![p; k];
        let obj = weights_log_prior(&theta, p, &cfg.prior);
        return EmFit {
            theta,
            theta_end: p,
            trace: vec![obj],
        };
    }
    let mut theta = theta0.to_vec();
    let mut end = end0;
    let mut obj = weight_objective(counts, log_chi, &theta, end, &cfg.prior);
    let mut trace = vec![obj];
    let mut expected = vec![0.0; k];
    let mut lps = Vec::new();
    for _ in 0..cfg.em_max_iters {
        let cost: Vec<f64> = theta.iter().zip(log_chi).map(|(t, c)| t.ln() + c).collect();
        expected.iter_mut().for_each(|e| *e = 0.0);
        let mut expected_end = 0.0;
        for task in counts {
            lps.clear();
            lps.extend(
                task.iter()
                    .map(|n| n.iter().zip(&cost).map(|(a, b)| a * b).sum::<f64>()),
            );
            let norm = log_sum_exp(&lps);
            for (n, lp) in task.iter().zip(&lps) {
                let r = (lp - norm).exp();
                expected_end += r;
                for (e, x) in expected.iter_mut().zip(n) {
                    *e += r * x;
                }
            }
        }
        let pc = cfg.pseudocount;
        let end_pc = if cfg.prior.theta_end_in_prior { pc } else { 0.0 };
        let total = expected.iter().sum::<f64>() + expected_end + pc * k as f64 + end_pc;
        let new_theta: Vec<f64> = expected.iter().map(|e| (e + pc) / total).collect();
        let new_end = (expected_end + end_pc) / total;
        let new_obj = weight_objective(counts, log_chi, &new_theta, new_end, &cfg.prior);
        let gain = new_obj - obj;
        theta = new_theta;
        end = new_end;
        obj = new_obj;
        trace.push(obj);
        if gain < cfg.em_tolerance {
            break;
        }
    }
    // keep the weights exactly normalized
    let total: f64 = theta.iter().sum::<f64>() + end;
    theta.iter_mut().for_each(|t| *t /= total);
    end /= total;
    EmFit {
        theta,
        theta_end: end,
        trace,
    }
}

/// Fit `θ, θ_end` for `lib`'s gate set by EM, starting from `lib`'s weights.
/// With no solutions the weights are uniform.
pub fn em_fit_theta(
    lib: &Library,
    sets: &[SolutionSet],
    n_qubits: usize,
    constraint: &ConnectivityConstraint,
    cfg: &LearnConfig,
) -> Result<EmFit> {
    let corpus = Corpus::new(lib, sets)?;
    let log_chi = if corpus.is_empty() {
        vec![0.0; lib.len()]
    } else {
        log_chis(lib, n_qubits, constraint)?
    };
    Ok(em(&corpus.counts, &log_chi, lib.theta(), lib.theta_end(), cfg))
}

/// The learning objective of `lib` with its current weights. Tasks with no
/// solutions contribute nothing.
pub fn score(
    lib: &Library,
    sets: &[SolutionSet],
    n_qubits: usize,
    constraint: &ConnectivityConstraint,
    prior: &PriorConfig,
) -> Result<f64> {
    let corpus = Corpus::new(lib, sets)?;
    let log_chi = if corpus.is_empty() {
        vec![0.0; lib.len()]
    } else {
        log_chis(lib, n_qubits, constraint)?
    };
    Ok(library_log_prior(lib, prior) + weight_objective(&corpus.counts, &log_chi, lib.theta(), lib.theta_end(), prior))
}

/// The extension of a library by one gate, with refit weights.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub library: Library,
    pub score: f64,
    /// Greedy matches of the gate's body over all solutions.
    pub uses: usize,
}

/// Score `lib ∪ {gate}` after rewriting every solution with `gate` and
/// refitting the weights.
pub fn evaluate_candidate(
    lib: &Library,
    sets: &[SolutionSet],
    gate: GateRef,
    n_qubits: usize,
    constraint: &ConnectivityConstraint,
    cfg: &LearnConfig,
) -> Result<Candidate> {
    let corpus = Corpus::new(lib, sets)?;
    let base_chi = log_chis(lib, n_qubits, constraint)?;
    let body = gate
        .body()
        .ok_or_else(|| Error::InvalidLibrary(format!("candidate `{}` is not composite", gate.name())))?;
    let mut interner = Interner::from_library(lib);
    let pattern = interner.encode(body);
    if pattern.iter().any(|op| op.gate as usize >= lib.len()) {
        return Err(Error::InvalidLibrary(format!(
            "body of `{}` uses gates outside the library",
            gate.name()
        )));
    }
    candidate_on_corpus(lib, &corpus, &base_chi, &pattern, gate, n_qubits, constraint, cfg)
}

#[allow(clippy::too_many_arguments)]
fn candidate_on_corpus(
    lib: &Library,
    corpus: &Corpus,
    base_chi: &[f64],
    pattern: &[Op],
    gate: GateRef,
    n_qubits: usize,
    constraint: &ConnectivityConstraint,
    cfg: &LearnConfig,
) -> Result<Candidate> {
    let k = lib.len();
    let mut body_counts = vec![0.0; k];
    for op in pattern {
        body_counts[op.gate as usize] += 1.0;
    }
    let arity = gate.arity();
    let mut uses = 0;
    let counts: Vec<Vec<Vec<f64>>> = corpus
        .counts
        .iter()
        .zip(&corpus.ops)
        .map(|(task_counts, task_ops)| {
            task_counts
                .iter()
                .zip(task_ops)
                .map(|(n, ops)| {
                    let m = greedy_matches(pattern, arity, ops).len();
                    uses += m;
                    let m = m as f64;
                    let mut out: Vec<f64> = n.iter().zip(&body_counts).map(|(a, b)| a - m * b).collect();
                    out.push(m);
                    out
                })
                .collect()
        })
        .collect();
    let extended = lib.extended(gate.clone())?;
    let mut log_chi = base_chi.to_vec();
    log_chi.push(chi(&gate, n_qubits, constraint)?.ln());
    let fit = em(&counts, &log_chi, extended.theta(), extended.theta_end(), cfg);
    let library = extended.reweighted(fit.theta.clone(), fit.theta_end)?;
    let score = library_log_prior(&library, &cfg.prior) + fit.objective();
    Ok(Candidate { library, score, uses })
}

/// Emitted whenever a gate is adopted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdoptionReport {
    pub name: String,
    pub body: String,
    pub arity: usize,
    pub support: usize,
    pub score_before: f64,
    pub score_after: f64,
}

#[derive(Clone, Debug)]
pub struct LearnOutcome {
    pub library: Library,
    /// Input solutions rewritten with every adopted gate, rescored under the
    /// final library.
    pub sets: Vec<SolutionSet>,
    pub adoptions: Vec<AdoptionReport>,
    pub score_before: f64,
    pub score: f64,
}

fn rewrite_sets(
    sets: &[SolutionSet],
    gate: &GateRef,
    lib: &Library,
    constraint: &ConnectivityConstraint,
) -> Result<Vec<SolutionSet>> {
    sets.iter()
        .map(|set| {
            let mut out = SolutionSet::new(set.task_id.clone(), set.k());
            let circuits = set
                .circuits()
                .iter()
                .map(|sc| {
                    let circuit = rewrite_with(gate, &sc.circuit);
                    let log_prob = crate::library::circuit_log_prob(&circuit, lib, constraint)?;
                    Ok(ScoredCircuit { circuit, log_prob })
                })
                .collect::<Result<Vec<_>>>()?;
            out.replace_circuits(circuits);
            Ok(out)
        })
        .collect()
}

/// Refit the weights, then repeatedly adopt the single fragment whose gate
/// most improves the score, until none improves it by more than
/// `cfg.min_gain`.
pub fn learn_step(
    lib: &Library,
    sets: &[SolutionSet],
    n_qubits: usize,
    constraint: &ConnectivityConstraint,
    cfg: &LearnConfig,
) -> Result<LearnOutcome> {
    cfg.validate()?;
    let score_before = score(lib, sets, n_qubits, constraint, &cfg.prior)?;
    let fit = em_fit_theta(lib, sets, n_qubits, constraint, cfg)?;
    let mut current = lib.reweighted(fit.theta, fit.theta_end)?;
    let mut current_score = library_log_prior(&current, &cfg.prior) + *fit.trace.last().unwrap();
    let mut sets: Vec<SolutionSet> = sets.to_vec();
    let mut adoptions = Vec::new();

    while adoptions.len() < cfg.max_adoptions {
        let mut fragments = extract_fragments(&current, &sets, cfg.max_fragment_size)?;
        fragments.truncate(cfg.max_candidates);
        if fragments.is_empty() {
            break;
        }
        let corpus = Corpus::new(&current, &sets)?;
        let base_chi = log_chis(&current, n_qubits, constraint)?;
        let name = current.next_gate_name();
        let candidates: Vec<Result<Candidate>> = fragments
            .par_iter()
            .map(|f| {
                let gate = Gate::composite(name.clone(), f.body.clone())?;
                candidate_on_corpus(&current, &corpus, &base_chi, &f.pattern, gate, n_qubits, constraint, cfg)
            })
            .collect();
        let mut best: Option<(usize, Candidate)> = None;
        for (i, c) in candidates.into_iter().enumerate() {
            let c = c?;
            if best.as_ref().is_none_or(|(_, b)| c.score > b.score) {
                best = Some((i, c));
            }
        }
        let Some((i, best)) = best else { break };
        if !(best.score > current_score + cfg.min_gain) {
            break;
        }
        let gate = best.library.gates().last().unwrap().clone();
        log::info!(
            "adopt {} = {} (support {}, score {:.3} -> {:.3})",
            gate.name(),
            fragments[i].program(),
            fragments[i].support.len(),
            current_score,
            best.score
        );
        adoptions.push(AdoptionReport {
            name: gate.name().to_string(),
            body: fragments[i].program().to_string(),
            arity: gate.arity(),
            support: fragments[i].support.len(),
            score_before: current_score,
            score_after: best.score,
        });
        sets = rewrite_sets(&sets, &gate, &best.library, constraint)?;
        current = best.library;
        current_score = best.score;
    }
    for set in &mut sets {
        set.rescore(&current, constraint)?;
    }
    Ok(LearnOutcome {
        library: current,
        sets,
        adoptions,
        score_before,
        score: current_score,
    })
}
