//! The gate library `(G, θ, θ_end)` and the generative distribution over
//! circuits it defines.
//!
//! A circuit is sampled by repeatedly drawing either a gate `g` (probability
//! `θ_g`) or the terminating symbol (probability `θ_end`); each drawn gate is
//! wired to an ordered qubit tuple chosen uniformly among the assignments
//! that are valid under the connectivity constraint. All quantities are kept
//! in the log domain.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::circuit::{is_valid_placement, Circuit, ConnectivityConstraint, GateLookup};
use crate::error::{Error, Result};
use crate::gates::{Gate, GateKind, GateRef};
use crate::matrix::{phase_aligned_distance, ComplexMatrix};
use crate::program::{parse_program, Program};

/// Tolerance on `θ_end + Σ θ_g = 1`.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Library {
    gates: Vec<GateRef>,
    theta: Vec<f64>,
    theta_end: f64,
    version: u64,
    next_fragment: usize,
    index: HashMap<String, usize>,
}

impl Library {
    /// Uniform weights over `gates ∪ {end}`.
    pub fn uniform(gates: Vec<GateRef>) -> Result<Self> {
        let p = 1.0 / (gates.len() + 1) as f64;
        let theta = vec![p; gates.len()];
        Self::with_weights(gates, theta, p, 0)
    }

    /// The elementary `{H, T, T†, CNOT}` library with uniform weights.
    pub fn g0() -> Self {
        Self::uniform(crate::gates::g0_gates()).expect("g0 is a valid library")
    }

    pub fn with_weights(gates: Vec<GateRef>, theta: Vec<f64>, theta_end: f64, version: u64) -> Result<Self> {
        if theta.len() != gates.len() {
            return Err(Error::InvalidLibrary(format!(
                "{} gates but {} weights",
                gates.len(),
                theta.len()
            )));
        }
        let mut index = HashMap::new();
        for (i, g) in gates.iter().enumerate() {
            if index.insert(g.name().to_string(), i).is_some() {
                return Err(Error::DuplicateGate(g.name().to_string()));
            }
        }
        let next_fragment = gates
            .iter()
            .filter_map(|g| g.name().strip_prefix('f').and_then(|k| k.parse::<usize>().ok()))
            .map(|k| k + 1)
            .max()
            .unwrap_or(0);
        let lib = Library {
            gates,
            theta,
            theta_end,
            version,
            next_fragment,
            index,
        };
        lib.check_weights()?;
        Ok(lib)
    }

    fn check_weights(&self) -> Result<()> {
        let total: f64 = self.theta.iter().sum::<f64>() + self.theta_end;
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidLibrary(format!("weights sum to {total}")));
        }
        if self.theta_end <= 0.0 || self.theta.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidLibrary("every weight must be strictly positive".into()));
        }
        Ok(())
    }

    pub fn gates(&self) -> &[GateRef] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_end(&self) -> f64 {
        self.theta_end
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn gate(&self, name: &str) -> Option<&GateRef> {
        self.index_of(name).map(|i| &self.gates[i])
    }

    /// Learned (composite) gates, in adoption order.
    pub fn learned(&self) -> impl Iterator<Item = &GateRef> {
        self.gates.iter().filter(|g| !g.is_elementary())
    }

    /// Name the next adopted gate would receive (`f0`, `f1`, ...).
    pub fn next_gate_name(&self) -> String {
        format!("f{}", self.next_fragment)
    }

    /// Same library stamped with an explicit version (the trainer uses the
    /// iteration number).
    pub fn with_version(mut self, version: u64) -> Library {
        self.version = version;
        self
    }

    /// Same gates, new normalized weights; bumps the version.
    pub fn reweighted(&self, theta: Vec<f64>, theta_end: f64) -> Result<Library> {
        Library::with_weights(self.gates.clone(), theta, theta_end, self.version + 1)
    }

    /// Append a gate. Existing weights are scaled so the new gate receives
    /// `1 / (|G| + 2)` of the mass; bumps the version.
    pub fn extended(&self, gate: GateRef) -> Result<Library> {
        let share = 1.0 / (self.gates.len() + 2) as f64;
        let mut theta: Vec<f64> = self.theta.iter().map(|t| t * (1.0 - share)).collect();
        theta.push(share);
        let end = 1.0 - theta.iter().sum::<f64>();
        let mut gates = self.gates.clone();
        gates.push(gate);
        Library::with_weights(gates, theta, end, self.version + 1)
    }

    /// Human-readable listing: weight, program, elementary expansion and
    /// diagram of every gate.
    pub fn describe(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "library v{}: {} gates, theta_end {:.6}", self.version, self.len(), self.theta_end);
        for (g, t) in self.gates.iter().zip(&self.theta) {
            let _ = writeln!(out, "\n{} (arity {}, theta {:.6})", g.name(), g.arity(), t);
            let Some(body) = g.body() else {
                let _ = writeln!(out, "  elementary");
                continue;
            };
            let expanded = body.expand();
            let _ = writeln!(out, "  program:   {}", crate::program::Program::from_circuit(body));
            let _ = writeln!(out, "  expansion: {}", crate::program::Program::from_circuit(&expanded));
            for line in crate::circuit::render_text(&expanded).lines() {
                let _ = writeln!(out, "  {line}");
            }
        }
        out
    }

    pub fn to_json(&self) -> LibraryJson {
        LibraryJson {
            version: self.version,
            theta_end: self.theta_end,
            gates: self
                .gates
                .iter()
                .zip(&self.theta)
                .map(|(g, &theta)| match g.kind() {
                    GateKind::Elementary(m) => GateJson {
                        name: g.name().to_string(),
                        arity: g.arity(),
                        kind: GateJsonKind::Elementary,
                        matrix: Some(m.clone()),
                        body: None,
                        theta,
                    },
                    GateKind::Composite(body) => GateJson {
                        name: g.name().to_string(),
                        arity: g.arity(),
                        kind: GateJsonKind::Composite,
                        matrix: None,
                        body: Some(Program::from_circuit(body).to_string()),
                        theta,
                    },
                })
                .collect(),
        }
    }

    pub fn from_json(json: &LibraryJson) -> Result<Library> {
        let mut gates: Vec<GateRef> = Vec::new();
        for g in &json.gates {
            let gate = match g.kind {
                GateJsonKind::Elementary => {
                    let m = g.matrix.clone().ok_or_else(|| {
                        Error::InvalidLibrary(format!("elementary gate `{}` has no matrix", g.name))
                    })?;
                    Gate::elementary(g.name.clone(), m)?
                }
                GateJsonKind::Composite => {
                    let text = g.body.as_deref().ok_or_else(|| {
                        Error::InvalidLibrary(format!("composite gate `{}` has no body", g.name))
                    })?;
                    let body = parse_program(text, &gates)?.to_circuit()?;
                    Gate::composite(g.name.clone(), body)?
                }
            };
            if gate.arity() != g.arity {
                return Err(Error::InvalidLibrary(format!(
                    "gate `{}` declares arity {} but has {}",
                    g.name,
                    g.arity,
                    gate.arity()
                )));
            }
            gates.push(gate);
        }
        let theta = json.gates.iter().map(|g| g.theta).collect();
        Library::with_weights(gates, theta, json.theta_end, json.version)
    }
}

impl GateLookup for Library {
    fn lookup(&self, name: &str) -> Option<GateRef> {
        self.gate(name).cloned()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateJsonKind {
    Elementary,
    Composite,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GateJson {
    pub name: String,
    pub arity: usize,
    pub kind: GateJsonKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub matrix: Option<ComplexMatrix>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub body: Option<String>,
    pub theta: f64,
}

/// Checkpoint layout of a [`Library`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LibraryJson {
    pub version: u64,
    pub theta_end: f64,
    pub gates: Vec<GateJson>,
}

/// Ordered qubit tuples on which `gate` may be placed, in lexicographic order.
pub fn valid_assignments(gate: &GateRef, n_qubits: usize, constraint: &ConnectivityConstraint) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(gate.arity());
    fn rec(
        gate: &GateRef,
        n: usize,
        constraint: &ConnectivityConstraint,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if current.len() == gate.arity() {
            if is_valid_placement(gate, current, n, constraint) {
                out.push(current.clone());
            }
            return;
        }
        for q in 0..n {
            if !current.contains(&q) {
                current.push(q);
                rec(gate, n, constraint, current, out);
                current.pop();
            }
        }
    }
    if gate.arity() <= n_qubits {
        rec(gate, n_qubits, constraint, &mut current, &mut out);
    }
    out
}

/// Probability of wiring `gate` to one particular valid qubit tuple.
pub fn chi(gate: &GateRef, n_qubits: usize, constraint: &ConnectivityConstraint) -> Result<f64> {
    let count = valid_assignments(gate, n_qubits, constraint).len();
    if count == 0 {
        return Err(Error::NoValidAssignment {
            gate: gate.name().to_string(),
            n_qubits,
            constraint: constraint.to_string(),
        });
    }
    Ok(1.0 / count as f64)
}

/// Per-gate log costs `ln θ_g + ln χ_g` for one library, register size and
/// constraint.
#[derive(Clone, Debug)]
pub struct GateCosts {
    pub per_gate: Vec<f64>,
    pub log_chi: Vec<f64>,
    pub log_end: f64,
}

impl GateCosts {
    pub fn new(lib: &Library, n_qubits: usize, constraint: &ConnectivityConstraint) -> Result<Self> {
        let log_chi = lib
            .gates()
            .iter()
            .map(|g| chi(g, n_qubits, constraint).map(f64::ln))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_log_chi(lib, log_chi))
    }

    pub(crate) fn from_log_chi(lib: &Library, log_chi: Vec<f64>) -> Self {
        let per_gate = lib.theta().iter().zip(&log_chi).map(|(t, c)| t.ln() + c).collect();
        GateCosts {
            per_gate,
            log_chi,
            log_end: lib.theta_end().ln(),
        }
    }
}

/// `ln P(c | G, θ)`: one `ln θ_g + ln χ` term per placement plus `ln θ_end`.
pub fn circuit_log_prob(c: &Circuit, lib: &Library, constraint: &ConnectivityConstraint) -> Result<f64> {
    if !c.validate(constraint) {
        return Err(Error::InvalidCircuit(format!("{c:?} violates {constraint}")));
    }
    let mut chis: HashMap<usize, f64> = HashMap::new();
    let mut total = lib.theta_end().ln();
    for p in c.placements() {
        let i = lib
            .index_of(p.gate.name())
            .filter(|&i| lib.gates()[i].arity() == p.gate.arity())
            .ok_or_else(|| Error::UnknownGate(p.gate.name().to_string()))?;
        let log_chi = match chis.get(&i) {
            Some(v) => *v,
            None => {
                let v = chi(&lib.gates()[i], c.n_qubits(), constraint)?.ln();
                chis.insert(i, v);
                v
            }
        };
        total += lib.theta()[i].ln() + log_chi;
    }
    Ok(total)
}

/// Knobs of the library and weight priors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Log-prior cost per elementary leaf of every learned gate.
    pub lambda_struct: f64,
    /// Symmetric Dirichlet concentration over `(θ_end, θ_g...)`.
    pub dirichlet_alpha: f64,
    /// Keep the Dirichlet normalizing constant. Off by default: the constant
    /// depends only on `|G|` and distorts comparisons across library sizes.
    pub dirichlet_normalizer: bool,
    /// Whether `θ_end` is one of the Dirichlet's coordinates.
    pub theta_end_in_prior: bool,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            lambda_struct: 1.5,
            dirichlet_alpha: 2.0,
            dirichlet_normalizer: false,
            theta_end_in_prior: true,
        }
    }
}

/// `−λ_struct · Σ leaf_count` over learned gates.
pub fn library_log_prior(lib: &Library, cfg: &PriorConfig) -> f64 {
    -cfg.lambda_struct * lib.learned().map(|g| g.leaf_count() as f64).sum::<f64>()
}

/// Symmetric Dirichlet log-density of `(θ_end, θ_g...)`, or of `θ_g` alone
/// when `θ_end` is kept out of the prior.
pub fn theta_log_prior(lib: &Library, cfg: &PriorConfig) -> f64 {
    weights_log_prior(lib.theta(), lib.theta_end(), cfg)
}

pub(crate) fn weights_log_prior(theta: &[f64], theta_end: f64, cfg: &PriorConfig) -> f64 {
    let mut weights = Vec::with_capacity(theta.len() + 1);
    if cfg.theta_end_in_prior {
        weights.push(theta_end);
    }
    weights.extend_from_slice(theta);
    dirichlet_log_density(&weights, cfg.dirichlet_alpha, cfg.dirichlet_normalizer)
}

pub fn dirichlet_log_density(weights: &[f64], alpha: f64, normalized: bool) -> f64 {
    let k = weights.len() as f64;
    let kernel = (alpha - 1.0) * weights.iter().map(|w| w.ln()).sum::<f64>();
    if normalized {
        kernel + ln_gamma(k * alpha) - k * ln_gamma(alpha)
    } else {
        kernel
    }
}

/// Numerically stable `ln Σ exp(x_i)`; `−∞` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln Σ_{c ∈ B_u} P(c | G, θ)`, after checking every circuit implements `u`.
pub fn task_log_likelihood(
    u: &ComplexMatrix,
    solutions: &[Circuit],
    lib: &Library,
    constraint: &ConnectivityConstraint,
    tolerance: f64,
) -> Result<f64> {
    let mut lps = Vec::with_capacity(solutions.len());
    for c in solutions {
        let d = phase_aligned_distance(&c.eval_unitary()?, u)?;
        if !(d <= tolerance) {
            return Err(Error::CorruptSolution {
                task: format!("{}-qubit target", u.n_qubits()),
                distance: d,
            });
        }
        lps.push(circuit_log_prob(c, lib, constraint)?);
    }
    Ok(log_sum_exp(&lps))
}
