//! Gate definitions: elementary gates carry a matrix, composite gates carry a
//! body circuit over earlier gates.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;

pub type GateRef = Arc<Gate>;

#[derive(Clone)]
pub enum GateKind {
    Elementary(ComplexMatrix),
    /// Body over `arity` qubit parameters; parameter `i` is body qubit `i`.
    Composite(Circuit),
}

pub struct Gate {
    name: String,
    arity: usize,
    kind: GateKind,
    cached: OnceLock<ComplexMatrix>,
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name != "lambda"
        && !name.starts_with('$')
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidLibrary(format!("bad gate name `{name}`")))
    }
}

impl Gate {
    pub fn elementary(name: impl Into<String>, matrix: ComplexMatrix) -> Result<GateRef> {
        let name = name.into();
        check_name(&name)?;
        if !matrix.is_unitary() {
            return Err(Error::InvalidLibrary(format!(
                "matrix of elementary gate `{name}` is not unitary"
            )));
        }
        Ok(Arc::new(Gate {
            arity: matrix.n_qubits(),
            name,
            kind: GateKind::Elementary(matrix),
            cached: OnceLock::new(),
        }))
    }

    /// A composite gate whose body must touch every one of its qubits and
    /// contain at least one placement.
    pub fn composite(name: impl Into<String>, body: Circuit) -> Result<GateRef> {
        let name = name.into();
        check_name(&name)?;
        let arity = body.n_qubits();
        if body.is_empty() {
            return Err(Error::InvalidLibrary(format!("composite `{name}` has an empty body")));
        }
        let mut used = vec![false; arity];
        for p in body.placements() {
            for &q in &p.qubits {
                used[q] = true;
            }
        }
        if let Some(unused) = used.iter().position(|u| !u) {
            return Err(Error::InvalidLibrary(format!(
                "composite `{name}` never uses its qubit parameter {unused}"
            )));
        }
        Ok(Arc::new(Gate {
            name,
            arity,
            kind: GateKind::Composite(body),
            cached: OnceLock::new(),
        }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn kind(&self) -> &GateKind {
        &self.kind
    }

    pub fn is_elementary(&self) -> bool {
        matches!(self.kind, GateKind::Elementary(_))
    }

    pub fn body(&self) -> Option<&Circuit> {
        match &self.kind {
            GateKind::Composite(body) => Some(body),
            GateKind::Elementary(_) => None,
        }
    }

    /// The gate's `2^arity` unitary. Composite matrices are evaluated from the
    /// body on first use and cached.
    pub fn matrix(&self) -> &ComplexMatrix {
        match &self.kind {
            GateKind::Elementary(m) => m,
            GateKind::Composite(body) => self.cached.get_or_init(|| {
                body.eval_unitary()
                    .expect("composite bodies are validated on construction")
            }),
        }
    }

    /// Number of elementary applications in the fully inlined body.
    pub fn leaf_count(&self) -> usize {
        match &self.kind {
            GateKind::Elementary(_) => 1,
            GateKind::Composite(body) => body.placements().iter().map(|p| p.gate.leaf_count()).sum(),
        }
    }
}

impl PartialEq for Gate {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.arity == other.arity
    }
}

impl Eq for Gate {}

impl fmt::Debug for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gate({}/{})", self.name, self.arity)
    }
}

/// Matrices of the standard discrete gates.
pub mod standard {
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

    use crate::matrix::{ComplexMatrix, C64, ONE, ZERO};

    const I: C64 = C64::new(0.0, 1.0);

    fn m2(a: C64, b: C64, c: C64, d: C64) -> ComplexMatrix {
        ComplexMatrix::from_entries(2, vec![a, b, c, d]).unwrap()
    }

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    /// Controlled version of a single-qubit gate, control on the first qubit.
    pub fn controlled(u: &ComplexMatrix) -> ComplexMatrix {
        let mut data = vec![ZERO; 16];
        data[0] = ONE;
        data[5] = ONE;
        data[10] = u.get(0, 0);
        data[11] = u.get(0, 1);
        data[14] = u.get(1, 0);
        data[15] = u.get(1, 1);
        ComplexMatrix::from_entries(4, data).unwrap()
    }

    pub fn h() -> ComplexMatrix {
        let s = r(FRAC_1_SQRT_2);
        m2(s, s, s, -s)
    }

    pub fn t() -> ComplexMatrix {
        m2(ONE, ZERO, ZERO, C64::from_polar(1.0, FRAC_PI_4))
    }

    pub fn tdg() -> ComplexMatrix {
        m2(ONE, ZERO, ZERO, C64::from_polar(1.0, -FRAC_PI_4))
    }

    pub fn s() -> ComplexMatrix {
        m2(ONE, ZERO, ZERO, I)
    }

    pub fn x() -> ComplexMatrix {
        m2(ZERO, ONE, ONE, ZERO)
    }

    pub fn y() -> ComplexMatrix {
        m2(ZERO, -I, I, ZERO)
    }

    pub fn z() -> ComplexMatrix {
        m2(ONE, ZERO, ZERO, r(-1.0))
    }

    pub fn sx() -> ComplexMatrix {
        let p = C64::new(0.5, 0.5);
        let m = C64::new(0.5, -0.5);
        m2(p, m, m, p)
    }

    pub fn sxdg() -> ComplexMatrix {
        sx().adjoint()
    }

    pub fn cnot() -> ComplexMatrix {
        controlled(&x())
    }

    pub fn cy() -> ComplexMatrix {
        controlled(&y())
    }

    pub fn cz() -> ComplexMatrix {
        controlled(&z())
    }

    pub fn cs() -> ComplexMatrix {
        controlled(&s())
    }

    pub fn ch() -> ComplexMatrix {
        controlled(&h())
    }

    pub fn swap() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[
            &[1., 0., 0., 0.],
            &[0., 0., 1., 0.],
            &[0., 1., 0., 0.],
            &[0., 0., 0., 1.],
        ])
        .unwrap()
    }

    pub fn iswap() -> ComplexMatrix {
        let mut data = vec![ZERO; 16];
        data[0] = ONE;
        data[6] = I;
        data[9] = I;
        data[15] = ONE;
        ComplexMatrix::from_entries(4, data).unwrap()
    }
}

fn named(list: &[(&str, fn() -> ComplexMatrix)]) -> Vec<GateRef> {
    list.iter()
        .map(|(name, m)| Gate::elementary(*name, m()).expect("standard gates are unitary"))
        .collect()
}

/// The elementary starting set `{H, T, T†, CNOT}`.
pub fn g0_gates() -> Vec<GateRef> {
    named(&[
        ("h", standard::h),
        ("t", standard::t),
        ("tdg", standard::tdg),
        ("cnot", standard::cnot),
    ])
}

/// The 16-gate high-level set used to generate tasks.
pub fn task_gates() -> Vec<GateRef> {
    named(&[
        ("h", standard::h),
        ("t", standard::t),
        ("tdg", standard::tdg),
        ("s", standard::s),
        ("x", standard::x),
        ("y", standard::y),
        ("z", standard::z),
        ("sx", standard::sx),
        ("sxdg", standard::sxdg),
        ("cnot", standard::cnot),
        ("cy", standard::cy),
        ("cz", standard::cz),
        ("cs", standard::cs),
        ("ch", standard::ch),
        ("swap", standard::swap),
        ("iswap", standard::iswap),
    ])
}
