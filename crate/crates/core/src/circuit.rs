//! Circuits as flat placement sequences, connectivity constraints, expansion
//! of composite gates and a plain-text renderer.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::GateRef;
use crate::matrix::{self, ComplexMatrix};

/// One gate applied to an ordered list of qubits.
#[derive(Clone)]
pub struct Placement {
    pub gate: GateRef,
    pub qubits: Vec<usize>,
}

impl PartialEq for Placement {
    fn eq(&self, other: &Self) -> bool {
        self.gate.name() == other.gate.name() && self.qubits == other.qubits
    }
}

impl Eq for Placement {}

impl fmt::Debug for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:?}", self.gate.name(), self.qubits)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Circuit {
    n_qubits: usize,
    placements: Vec<Placement>,
}

impl fmt::Debug for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Circuit<{}>{:?}", self.n_qubits, self.placements)
    }
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit {
            n_qubits,
            placements: Vec::new(),
        }
    }

    pub fn from_placements(n_qubits: usize, placements: Vec<Placement>) -> Result<Self> {
        let mut c = Circuit::new(n_qubits);
        for p in placements {
            c.push(p.gate, p.qubits)?;
        }
        Ok(c)
    }

    /// Append a placement, checking arity, range and distinctness.
    pub fn push(&mut self, gate: GateRef, qubits: Vec<usize>) -> Result<()> {
        if qubits.len() != gate.arity() {
            return Err(Error::ArityMismatch {
                gate: gate.name().to_string(),
                expected: gate.arity(),
                got: qubits.len(),
            });
        }
        matrix::check_qubits(&qubits, self.n_qubits)?;
        self.placements.push(Placement { gate, qubits });
        Ok(())
    }

    pub fn with(mut self, gate: &GateRef, qubits: &[usize]) -> Result<Self> {
        self.push(gate.clone(), qubits.to_vec())?;
        Ok(self)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    /// Unitary of the circuit: identity, then each placement left-multiplied
    /// in application order. Composite gates evaluate through their bodies.
    pub fn eval_unitary(&self) -> Result<ComplexMatrix> {
        let dim = 1usize
            .checked_shl(self.n_qubits as u32)
            .filter(|d| *d >= 2)
            .ok_or(Error::BadDimension(1 << self.n_qubits.min(63)))?;
        let mut out = ComplexMatrix::identity(dim);
        let mut scratch = Vec::new();
        for p in &self.placements {
            if p.qubits.len() != p.gate.arity() {
                return Err(Error::InvalidCircuit(format!("{p:?} has the wrong arity")));
            }
            matrix::check_qubits(&p.qubits, self.n_qubits)?;
            let gm = p.gate.matrix();
            let groups = matrix::row_groups(&p.qubits, self.n_qubits);
            matrix::apply_left(gm.entries(), gm.dim(), &groups, out.entries_mut(), dim, &mut scratch);
        }
        Ok(out)
    }

    /// Recursively inline composite gates; the result contains only
    /// elementary placements.
    pub fn expand(&self) -> Circuit {
        let mut out = Circuit::new(self.n_qubits);
        for p in &self.placements {
            expand_into(&p.gate, &p.qubits, &mut out.placements);
        }
        out
    }

    pub fn is_elementary(&self) -> bool {
        self.placements.iter().all(|p| p.gate.is_elementary())
    }

    /// True iff every placement has distinct in-range qubits and every
    /// multi-qubit elementary placement of the expanded circuit respects the
    /// constraint.
    pub fn validate(&self, constraint: &ConnectivityConstraint) -> bool {
        self.placements
            .iter()
            .all(|p| placement_valid(&p.gate, &p.qubits, self.n_qubits, constraint))
    }

    pub fn to_json(&self) -> CircuitJson {
        CircuitJson {
            n_qubits: self.n_qubits,
            placements: self
                .placements
                .iter()
                .map(|p| PlacementJson {
                    gate: p.gate.name().to_string(),
                    qubits: p.qubits.clone(),
                })
                .collect(),
        }
    }

    pub fn from_json(json: &CircuitJson, gates: &dyn GateLookup) -> Result<Circuit> {
        let mut c = Circuit::new(json.n_qubits);
        for p in &json.placements {
            let gate = gates
                .lookup(&p.gate)
                .ok_or_else(|| Error::UnknownGate(p.gate.clone()))?;
            c.push(gate, p.qubits.clone())?;
        }
        Ok(c)
    }

    /// Placement sequence as `(gate name, qubits)` pairs; used for identity
    /// comparisons and deterministic ordering.
    pub fn signature(&self) -> Vec<(&str, &[usize])> {
        self.placements
            .iter()
            .map(|p| (p.gate.name(), p.qubits.as_slice()))
            .collect()
    }
}

fn expand_into(gate: &GateRef, qubits: &[usize], out: &mut Vec<Placement>) {
    match gate.body() {
        None => out.push(Placement {
            gate: gate.clone(),
            qubits: qubits.to_vec(),
        }),
        Some(body) => {
            for p in body.placements() {
                let mapped: Vec<usize> = p.qubits.iter().map(|&q| qubits[q]).collect();
                expand_into(&p.gate, &mapped, out);
            }
        }
    }
}

fn placement_valid(
    gate: &GateRef,
    qubits: &[usize],
    n_qubits: usize,
    constraint: &ConnectivityConstraint,
) -> bool {
    if qubits.len() != gate.arity() || matrix::check_qubits(qubits, n_qubits).is_err() {
        return false;
    }
    match gate.body() {
        None => {
            qubits.len() < 2
                || qubits.iter().enumerate().all(|(i, &a)| {
                    qubits[i + 1..].iter().all(|&b| constraint.allows(a, b, n_qubits))
                })
        }
        Some(body) => body.placements().iter().all(|p| {
            let mapped: Vec<usize> = p.qubits.iter().map(|&q| qubits[q]).collect();
            placement_valid(&p.gate, &mapped, n_qubits, constraint)
        }),
    }
}

/// Is a gate placement on these qubits valid under `constraint`?
pub fn is_valid_placement(
    gate: &GateRef,
    qubits: &[usize],
    n_qubits: usize,
    constraint: &ConnectivityConstraint,
) -> bool {
    placement_valid(gate, qubits, n_qubits, constraint)
}

/// Which qubit pairs a multi-qubit gate may couple.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode", content = "edges")]
pub enum ConnectivityConstraint {
    #[default]
    Full,
    NearestNeighbor,
    ExplicitEdges(BTreeSet<(usize, usize)>),
}

impl ConnectivityConstraint {
    /// Undirected pair check.
    pub fn allows(&self, a: usize, b: usize, _n_qubits: usize) -> bool {
        if a == b {
            return false;
        }
        match self {
            ConnectivityConstraint::Full => true,
            ConnectivityConstraint::NearestNeighbor => a.abs_diff(b) == 1,
            ConnectivityConstraint::ExplicitEdges(edges) => {
                edges.contains(&(a, b)) || edges.contains(&(b, a))
            }
        }
    }

    /// The explicit edge set equivalent to nearest-neighbor on `n` qubits.
    pub fn line_edges(n_qubits: usize) -> Self {
        ConnectivityConstraint::ExplicitEdges((1..n_qubits).map(|i| (i - 1, i)).collect())
    }
}

impl fmt::Display for ConnectivityConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConnectivityConstraint::Full => write!(f, "full connectivity"),
            ConnectivityConstraint::NearestNeighbor => write!(f, "nearest-neighbor connectivity"),
            ConnectivityConstraint::ExplicitEdges(e) => write!(f, "edges {e:?}"),
        }
    }
}

/// Resolve gate names while decoding circuits and programs.
pub trait GateLookup {
    fn lookup(&self, name: &str) -> Option<GateRef>;
}

impl GateLookup for [GateRef] {
    fn lookup(&self, name: &str) -> Option<GateRef> {
        self.iter().find(|g| g.name() == name).cloned()
    }
}

impl GateLookup for Vec<GateRef> {
    fn lookup(&self, name: &str) -> Option<GateRef> {
        self.as_slice().lookup(name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementJson {
    pub gate: String,
    pub qubits: Vec<usize>,
}

/// `{"n_qubits": n, "placements": [{"gate": name, "qubits": [..]}]}`
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitJson {
    pub n_qubits: usize,
    pub placements: Vec<PlacementJson>,
}

const CONTROLLED: &[(&str, &str)] = &[
    ("cnot", "X"),
    ("cy", "Y"),
    ("cz", "Z"),
    ("cs", "S"),
    ("ch", "H"),
];

/// Deterministic ASCII diagram, one line per qubit, one column per placement.
///
/// Single-qubit gates render as `[name]`, controlled gates as `*` on the
/// control and the target letter on the target, and other multi-qubit gates
/// as `[name:i]` where `i` is the gate's parameter position. Wires crossed by
/// a multi-qubit placement show `|`.
pub fn render_text(c: &Circuit) -> String {
    let n = c.n_qubits();
    let mut columns: Vec<Vec<String>> = Vec::new();
    for p in c.placements() {
        let mut cells = vec![String::new(); n];
        let name = p.gate.name();
        if p.qubits.len() == 1 {
            cells[p.qubits[0]] = format!("[{name}]");
        } else if let Some((_, target)) = CONTROLLED.iter().find(|(g, _)| *g == name) {
            cells[p.qubits[0]] = "*".to_string();
            cells[p.qubits[1]] = target.to_string();
        } else if name == "swap" {
            cells[p.qubits[0]] = "x".to_string();
            cells[p.qubits[1]] = "x".to_string();
        } else {
            for (i, &q) in p.qubits.iter().enumerate() {
                cells[q] = format!("[{name}:{i}]");
            }
        }
        if p.qubits.len() > 1 {
            let lo = *p.qubits.iter().min().unwrap();
            let hi = *p.qubits.iter().max().unwrap();
            for cell in cells.iter_mut().take(hi).skip(lo + 1) {
                if cell.is_empty() {
                    *cell = "|".to_string();
                }
            }
        }
        columns.push(cells);
    }
    let label_width = format!("q{}", n.saturating_sub(1)).len();
    let mut out = String::new();
    for q in 0..n {
        let label = format!("q{q}");
        out.push_str(&format!("{label:<label_width$}: -"));
        for col in &columns {
            let width = col.iter().map(|s| s.chars().count()).max().unwrap_or(1).max(1);
            let cell = &col[q];
            let len = cell.chars().count();
            let left = (width - len) / 2;
            let right = width - len - left;
            out.push_str(&"-".repeat(left));
            out.push_str(if cell.is_empty() { "" } else { cell });
            out.push_str(&"-".repeat(right));
            out.push('-');
        }
        out.push('\n');
    }
    out
}

/// Shorthand for building test and example circuits.
pub fn circuit_of(n_qubits: usize, steps: &[(&GateRef, &[usize])]) -> Result<Circuit> {
    let mut c = Circuit::new(n_qubits);
    for (g, q) in steps {
        c.push(Arc::clone(g), q.to_vec())?;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::{g0_gates, standard, task_gates, Gate};
    use crate::matrix::phase_aligned_distance;

    fn g0() -> (GateRef, GateRef, GateRef, GateRef) {
        let g = g0_gates();
        (g[0].clone(), g[1].clone(), g[2].clone(), g[3].clone())
    }

    #[test]
    fn empty_circuit_is_identity() {
        assert_eq!(Circuit::new(2).eval_unitary().unwrap(), ComplexMatrix::identity(4));
    }

    #[test]
    fn three_cnots_make_swap() {
        let (_, _, _, cx) = g0();
        let c = circuit_of(2, &[(&cx, &[0, 1]), (&cx, &[1, 0]), (&cx, &[0, 1])]).unwrap();
        let u = c.eval_unitary().unwrap();
        assert!(u.max_abs_diff(&standard::swap()).unwrap() < 1e-15);
    }

    #[test]
    fn x_then_cnot_by_hand() {
        let x = task_gates().into_iter().find(|g| g.name() == "x").unwrap();
        let (_, _, _, cx) = g0();
        let c = circuit_of(2, &[(&x, &[0]), (&cx, &[0, 1])]).unwrap();
        // X on qubit 0 sends |00> -> |10>, CNOT then flips qubit 1: |11>.
        let by_hand = ComplexMatrix::from_real_rows(&[
            &[0., 0., 1., 0.],
            &[0., 0., 0., 1.],
            &[0., 1., 0., 0.],
            &[1., 0., 0., 0.],
        ])
        .unwrap();
        assert!(c.eval_unitary().unwrap().max_abs_diff(&by_hand).unwrap() < 1e-15);
    }

    #[test]
    fn push_rejects_bad_placements() {
        let (h, _, _, cx) = g0();
        let mut c = Circuit::new(2);
        assert!(matches!(c.push(cx.clone(), vec![1, 1]), Err(Error::RepeatedQubit(1))));
        assert!(c.push(cx.clone(), vec![0]).is_err());
        assert!(c.push(h, vec![2]).is_err());
    }

    #[test]
    fn expand_elementary_is_fixed_point() {
        let (h, t, _, cx) = g0();
        let c = circuit_of(2, &[(&h, &[0]), (&cx, &[0, 1]), (&t, &[1])]).unwrap();
        assert_eq!(c.expand(), c);
    }

    #[test]
    fn expand_composite() {
        let (_, t, _, _) = g0();
        let f0 = Gate::composite("f0", circuit_of(1, &[(&t, &[0]), (&t, &[0])]).unwrap()).unwrap();
        let c = circuit_of(2, &[(&f0, &[1])]).unwrap();
        let e = c.expand();
        assert_eq!(e, circuit_of(2, &[(&t, &[1]), (&t, &[1])]).unwrap());
        assert!(c.eval_unitary().unwrap().max_abs_diff(&e.eval_unitary().unwrap()).unwrap() < 1e-10);
    }

    #[test]
    fn expand_nested_composite_counts_leaves() {
        let (h, t, _, cx) = g0();
        let f0 = Gate::composite("f0", circuit_of(1, &[(&t, &[0]), (&t, &[0])]).unwrap()).unwrap();
        // f1(a, b) = f0(b); cnot(a, b); h(a); f0(a)
        let f1 = Gate::composite(
            "f1",
            circuit_of(2, &[(&f0, &[1]), (&cx, &[0, 1]), (&h, &[0]), (&f0, &[0])]).unwrap(),
        )
        .unwrap();
        let c = circuit_of(3, &[(&f1, &[2, 0]), (&f0, &[1])]).unwrap();
        let e = c.expand();
        assert_eq!(e.len(), f1.leaf_count() + f0.leaf_count());
        assert_eq!(e.len(), 8);
        assert!(e.is_elementary());
        assert_eq!(e.placements()[2].qubits, vec![2, 0]);
        assert!(c.eval_unitary().unwrap().max_abs_diff(&e.eval_unitary().unwrap()).unwrap() < 1e-10);
    }

    #[test]
    fn validate_examples() {
        let (_, _, _, cx) = g0();
        let nn = ConnectivityConstraint::NearestNeighbor;
        assert!(!circuit_of(3, &[(&cx, &[0, 2])]).unwrap().validate(&nn));
        assert!(circuit_of(3, &[(&cx, &[0, 1])]).unwrap().validate(&nn));
        assert!(circuit_of(3, &[(&cx, &[0, 2])]).unwrap().validate(&ConnectivityConstraint::Full));
        // repeated input can only be built by bypassing push
        let bad = Circuit {
            n_qubits: 3,
            placements: vec![Placement {
                gate: cx,
                qubits: vec![1, 1],
            }],
        };
        for c in [
            ConnectivityConstraint::Full,
            nn,
            ConnectivityConstraint::line_edges(3),
        ] {
            assert!(!bad.validate(&c));
        }
    }

    #[test]
    fn composites_validate_through_expansion() {
        let (_, _, _, cx) = g0();
        // a "long" gate: cnot(p0, p1) then cnot(p1, p2); valid on the line
        // only when the middle parameter sits between the other two.
        let long = Gate::composite("f9", circuit_of(3, &[(&cx, &[0, 1]), (&cx, &[1, 2])]).unwrap()).unwrap();
        let nn = ConnectivityConstraint::NearestNeighbor;
        let ok = circuit_of(3, &[(&long, &[0, 1, 2])]).unwrap();
        let bad = circuit_of(3, &[(&long, &[0, 2, 1])]).unwrap();
        assert!(ok.validate(&nn));
        assert!(!bad.validate(&nn));
        assert_eq!(bad.validate(&nn), bad.expand().validate(&nn));
    }

    #[test]
    fn nearest_neighbor_equals_line_edges() {
        let nn = ConnectivityConstraint::NearestNeighbor;
        let edges = ConnectivityConstraint::line_edges(4);
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(nn.allows(a, b, 4), edges.allows(a, b, 4));
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let (h, _, _, cx) = g0();
        let c = circuit_of(2, &[(&h, &[0]), (&cx, &[1, 0])]).unwrap();
        let json = serde_json::to_string(&c.to_json()).unwrap();
        assert_eq!(
            json,
            r#"{"n_qubits":2,"placements":[{"gate":"h","qubits":[0]},{"gate":"cnot","qubits":[1,0]}]}"#
        );
        let back = Circuit::from_json(&serde_json::from_str(&json).unwrap(), &g0_gates()).unwrap();
        assert_eq!(back, c);
        let unknown: CircuitJson =
            serde_json::from_str(r#"{"n_qubits":1,"placements":[{"gate":"q","qubits":[0]}]}"#).unwrap();
        assert!(matches!(Circuit::from_json(&unknown, &g0_gates()), Err(Error::UnknownGate(_))));
    }

    #[test]
    fn render_examples() {
        let (h, _, _, cx) = g0();
        assert_eq!(render_text(&Circuit::new(2)), "q0: -\nq1: -\n");
        assert_eq!(
            render_text(&circuit_of(2, &[(&h, &[0])]).unwrap()),
            "q0: -[h]-\nq1: -----\n"
        );
        assert_eq!(
            render_text(&circuit_of(3, &[(&cx, &[0, 2])]).unwrap()),
            "q0: -*-\nq1: -|-\nq2: -X-\n"
        );
    }

    #[test]
    fn cz_identity() {
        let (h, _, _, cx) = g0();
        let c = circuit_of(2, &[(&h, &[1]), (&cx, &[0, 1]), (&h, &[1])]).unwrap();
        let d = phase_aligned_distance(&c.eval_unitary().unwrap(), &standard::cz()).unwrap();
        assert!(d < 1e-12);
    }
}
