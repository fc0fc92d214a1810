//! Dense complex matrices over `n` qubits.
//!
//! Qubit ordering is big-endian: qubit 0 is the most significant bit of the
//! basis index, so on two qubits `|q0 q1>` maps to row `2*q0 + q1`. Every gate
//! embedding, rendering and serialization in the crate follows this
//! convention.
//!
//! Circuits multiply in application order: a circuit `[g1, g2, g3]` evaluates
//! to `G3 · G2 · G1`, each later gate acting from the left.

use std::collections::HashMap;
use std::fmt;
use std::hash::{BuildHasherDefault, Hash, Hasher};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Modulus below which an entry is ignored when picking the canonical phase.
pub const PHASE_PIVOT_EPS: f64 = 1e-6;
/// Grid step used to quantize entries before hashing.
pub const QUANTIZATION_STEP: f64 = 1e-6;
/// Default tolerance on the phase-aligned Frobenius distance for "equal".
pub const EQUALITY_TOLERANCE: f64 = 1e-6;
/// Tolerance used by [`ComplexMatrix::is_unitary`].
pub const UNITARITY_TOLERANCE: f64 = 1e-9;

/// Square complex matrix of dimension `2^n`, stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn from_entries(dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::BadDimension(dim));
        }
        if data.len() != dim * dim {
            return Err(Error::Format(format!(
                "expected {} entries for dim {dim}, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(ComplexMatrix { dim, data })
    }

    /// Build from rows of real parts; handy for permutation matrices.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let data = rows
            .iter()
            .flat_map(|r| r.iter().map(|&x| C64::new(x, 0.0)))
            .collect();
        Self::from_entries(dim, data)
    }

    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 2 && dim.is_power_of_two(), "bad dimension {dim}");
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = ONE;
        }
        ComplexMatrix { dim, data }
    }

    pub fn diagonal(diag: &[C64]) -> Result<Self> {
        let dim = diag.len();
        let mut data = vec![ZERO; dim * dim];
        for (i, d) in diag.iter().enumerate() {
            data[i * dim + i] = *d;
        }
        Self::from_entries(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.data[row * self.dim + col]
    }

    pub fn scale(&self, factor: C64) -> Self {
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut data = vec![ZERO; d * d];
        for r in 0..d {
            for c in 0..d {
                data[c * d + r] = self.data[r * d + c].conj();
            }
        }
        ComplexMatrix { dim: d, data }
    }

    /// Standard product `self · other`.
    pub fn multiply(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        let d = self.dim;
        let mut data = vec![ZERO; d * d];
        for r in 0..d {
            let out = &mut data[r * d..(r + 1) * d];
            for k in 0..d {
                let a = self.data[r * d + k];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * d..(k + 1) * d];
                for (o, b) in out.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Ok(ComplexMatrix { dim: d, data })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |(U†U − I)_ij| <= tol`.
    pub fn is_unitary_within(&self, tol: f64) -> bool {
        let d = self.dim;
        for i in 0..d {
            for j in 0..d {
                let mut acc = ZERO;
                for k in 0..d {
                    acc += self.data[k * d + i].conj() * self.data[k * d + j];
                }
                if i == j {
                    acc -= ONE;
                }
                if acc.norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_unitary(&self) -> bool {
        self.is_unitary_within(UNITARITY_TOLERANCE)
    }

    /// Entrywise maximum difference, without any phase freedom.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> Result<f64> {
        check_dims(self, other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Frobenius distance without phase freedom.
    pub fn frobenius_distance(&self, other: &ComplexMatrix) -> Result<f64> {
        check_dims(self, other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    /// Kronecker product `self ⊗ other`; `self` acts on the leading qubits.
    pub fn kron(&self, other: &ComplexMatrix) -> ComplexMatrix {
        let (a, b) = (self.dim, other.dim);
        let d = a * b;
        let mut data = vec![ZERO; d * d];
        for i in 0..a {
            for j in 0..a {
                let s = self.data[i * a + j];
                if s == ZERO {
                    continue;
                }
                for k in 0..b {
                    for l in 0..b {
                        data[(i * b + k) * d + j * b + l] = s * other.data[k * b + l];
                    }
                }
            }
        }
        ComplexMatrix { dim: d, data }
    }
}

fn check_dims(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<()> {
    if a.dim != b.dim {
        Err(Error::DimensionMismatch {
            left: a.dim,
            right: b.dim,
        })
    } else {
        Ok(())
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for r in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|c| {
                    let z = self.get(r, c);
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Validate qubit indices for a placement: distinct and in range.
pub fn check_qubits(qubits: &[usize], n_qubits: usize) -> Result<()> {
    for (i, &q) in qubits.iter().enumerate() {
        if q >= n_qubits {
            return Err(Error::QubitOutOfRange { index: q, n_qubits });
        }
        if qubits[..i].contains(&q) {
            return Err(Error::RepeatedQubit(q));
        }
    }
    Ok(())
}

/// Row-index groups for applying a `k`-qubit gate on `qubits` inside an
/// `n_qubits` register.
///
/// The result has `2^n` entries made of `2^(n-k)` consecutive groups of
/// `2^k` rows; within a group, position `a` is the row whose gate-local index
/// is `a` (with `qubits[0]` the most significant local bit).
pub fn row_groups(qubits: &[usize], n_qubits: usize) -> Vec<usize> {
    let k = qubits.len();
    let local = 1usize << k;
    let mask: usize = qubits
        .iter()
        .map(|&q| 1usize << (n_qubits - 1 - q))
        .sum();
    let mut out = Vec::with_capacity(1 << n_qubits);
    for base in 0..(1usize << n_qubits) {
        if base & mask != 0 {
            continue;
        }
        for a in 0..local {
            let mut row = base;
            for (i, &q) in qubits.iter().enumerate() {
                if (a >> (k - 1 - i)) & 1 == 1 {
                    row |= 1 << (n_qubits - 1 - q);
                }
            }
            out.push(row);
        }
    }
    out
}

/// Left-multiply `target` (row-major, `dim x dim`) by a gate matrix embedded
/// through `groups` (see [`row_groups`]). `scratch` is resized as needed.
pub(crate) fn apply_left(
    gate: &[C64],
    local: usize,
    groups: &[usize],
    target: &mut [C64],
    dim: usize,
    scratch: &mut Vec<C64>,
) {
    scratch.resize(local * dim, ZERO);
    for group in groups.chunks_exact(local) {
        for (b, &row) in group.iter().enumerate() {
            scratch[b * dim..(b + 1) * dim].copy_from_slice(&target[row * dim..(row + 1) * dim]);
        }
        for (a, &row) in group.iter().enumerate() {
            let out = &mut target[row * dim..(row + 1) * dim];
            out.fill(ZERO);
            for b in 0..local {
                let g = gate[a * local + b];
                if g == ZERO {
                    continue;
                }
                let src = &scratch[b * dim..(b + 1) * dim];
                for (o, s) in out.iter_mut().zip(src) {
                    *o += g * s;
                }
            }
        }
    }
}

/// Embed `gate` acting on the ordered `qubits` into an `n_qubits` register,
/// identity on the remaining qubits.
pub fn embed(gate: &ComplexMatrix, qubits: &[usize], n_qubits: usize) -> Result<ComplexMatrix> {
    check_qubits(qubits, n_qubits)?;
    if gate.dim != 1 << qubits.len() {
        return Err(Error::DimensionMismatch {
            left: gate.dim,
            right: 1 << qubits.len(),
        });
    }
    let dim = 1 << n_qubits;
    if dim < 2 {
        return Err(Error::BadDimension(dim));
    }
    let mut out = ComplexMatrix::identity(dim);
    let groups = row_groups(qubits, n_qubits);
    let mut scratch = Vec::new();
    apply_left(&gate.data, gate.dim, &groups, &mut out.data, dim, &mut scratch);
    Ok(out)
}

/// `min_φ ‖u − e^{iφ} v‖_F`, with `φ = arg tr(v† u)`.
pub fn phase_aligned_distance(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<f64> {
    check_dims(u, v)?;
    Ok(phase_aligned_distance_slices(&u.data, &v.data))
}

pub(crate) fn phase_aligned_distance_slices(u: &[C64], v: &[C64]) -> f64 {
    let overlap: C64 = u.iter().zip(v).map(|(a, b)| b.conj() * a).sum();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        ONE
    };
    u.iter()
        .zip(v)
        .map(|(a, b)| (a - phase * b).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Phase-invariant digest of a unitary (see [`canonical_key`]).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct UnitaryKey(u128);

impl Hash for UnitaryKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.low_bits());
    }
}

/// Keys are already well mixed, so maps keyed by them skip rehashing.
#[derive(Clone, Copy, Default)]
pub struct KeyHasher(u64);

impl Hasher for KeyHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 << 8) | b as u64;
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = v;
    }
}

pub type KeyMap<V> = HashMap<UnitaryKey, V, BuildHasherDefault<KeyHasher>>;

impl UnitaryKey {
    pub fn to_bytes(self) -> [u8; 16] {
        self.0.to_be_bytes()
    }

    pub fn low_bits(self) -> u64 {
        self.0 as u64
    }
}

impl fmt::Debug for UnitaryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UnitaryKey({:032x})", self.0)
    }
}

/// Digest of `u` after removing the global phase (the first entry with modulus
/// above [`PHASE_PIVOT_EPS`] is rotated onto the positive real axis) and
/// rounding every real and imaginary part to a multiple of
/// [`QUANTIZATION_STEP`].
pub fn canonical_key(u: &ComplexMatrix) -> UnitaryKey {
    key_of_entries(&u.data)
}

pub(crate) fn key_of_entries(entries: &[C64]) -> UnitaryKey {
    let pivot = entries
        .iter()
        .find(|z| z.norm() > PHASE_PIVOT_EPS)
        .copied()
        .unwrap_or(ONE);
    let rot = pivot.conj() / pivot.norm();
    let mut lo: u64 = 0x9e37_79b9_7f4a_7c15 ^ entries.len() as u64;
    let mut hi: u64 = 0xc2b2_ae3d_27d4_eb4f;
    for z in entries {
        let w = z * rot;
        for part in [w.re, w.im] {
            // `+ 0.0` folds -0.0 into 0.0 so both round to the same bucket.
            let q = (part / QUANTIZATION_STEP).round() + 0.0;
            let v = q as i64 as u64;
            lo = (lo ^ v).wrapping_mul(0x0000_0100_0000_01b3).rotate_left(31);
            hi = (hi ^ v.rotate_left(17))
                .wrapping_mul(0xff51_afd7_ed55_8ccd)
                .rotate_left(27);
        }
    }
    UnitaryKey(((finalize(hi) as u128) << 64) | finalize(lo ^ hi.rotate_left(7)) as u128)
}

fn finalize(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    dim: usize,
    entries: Vec<[f64; 2]>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr {
            dim: self.dim,
            entries: self.data.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        let data = repr.entries.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        ComplexMatrix::from_entries(repr.dim, data).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::standard;
    use std::f64::consts::PI;

    fn swap() -> ComplexMatrix {
        ComplexMatrix::from_real_rows(&[
            &[1., 0., 0., 0.],
            &[0., 0., 1., 0.],
            &[0., 1., 0., 0.],
            &[0., 0., 0., 1.],
        ])
        .unwrap()
    }

    #[test]
    fn identity_products() {
        let i = ComplexMatrix::identity(2);
        assert_eq!(i.multiply(&i).unwrap(), i);
        let h = standard::h();
        assert!(h.multiply(&h).unwrap().max_abs_diff(&i).unwrap() < 1e-12);
    }

    #[test]
    fn t_to_the_fourth_is_z() {
        let t = standard::t();
        let t4 = t
            .multiply(&t)
            .unwrap()
            .multiply(&t)
            .unwrap()
            .multiply(&t)
            .unwrap();
        // diag(1, e^{iπ/4})^4 = diag(1, e^{iπ}) = diag(1, -1)
        let z = ComplexMatrix::diagonal(&[ONE, C64::new(-1.0, 0.0)]).unwrap();
        assert!(t4.max_abs_diff(&z).unwrap() < 1e-12);
    }

    #[test]
    fn multiply_rejects_mismatched_dims() {
        let err = ComplexMatrix::identity(2).multiply(&ComplexMatrix::identity(4));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn embed_full_width_is_identity_operation() {
        let h = standard::h();
        assert_eq!(embed(&h, &[0], 1).unwrap(), h);
    }

    #[test]
    fn embed_cnot_standard_orientation() {
        let expect = ComplexMatrix::from_real_rows(&[
            &[1., 0., 0., 0.],
            &[0., 1., 0., 0.],
            &[0., 0., 0., 1.],
            &[0., 0., 1., 0.],
        ])
        .unwrap();
        assert_eq!(embed(&standard::cnot(), &[0, 1], 2).unwrap(), expect);
    }

    #[test]
    fn embed_reversed_cnot_is_swap_conjugate() {
        let cx = standard::cnot();
        let forward = embed(&cx, &[0, 1], 2).unwrap();
        let reversed = embed(&cx, &[1, 0], 2).unwrap();
        let s = swap();
        let oracle = s.multiply(&forward).unwrap().multiply(&s).unwrap();
        assert!(reversed.max_abs_diff(&oracle).unwrap() < 1e-15);
    }

    #[test]
    fn embed_errors() {
        let cx = standard::cnot();
        assert!(matches!(embed(&cx, &[1, 1], 2), Err(Error::RepeatedQubit(1))));
        assert!(matches!(
            embed(&cx, &[0, 2], 2),
            Err(Error::QubitOutOfRange { index: 2, .. })
        ));
        assert!(matches!(
            embed(&cx, &[0], 2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn embed_single_qubit_matches_kron() {
        let h = standard::h();
        let i2 = ComplexMatrix::identity(2);
        let on_q0 = embed(&h, &[0], 2).unwrap();
        let on_q1 = embed(&h, &[1], 2).unwrap();
        assert!(on_q0.max_abs_diff(&h.kron(&i2)).unwrap() < 1e-15);
        assert!(on_q1.max_abs_diff(&i2.kron(&h)).unwrap() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let u = standard::h();
        assert!(phase_aligned_distance(&u, &u).unwrap() < 1e-15);
        let rotated = u.scale(C64::from_polar(1.0, PI / 3.0));
        assert!(phase_aligned_distance(&u, &rotated).unwrap() < 1e-12);

        let i2 = ComplexMatrix::identity(2);
        let x = standard::x();
        let d = phase_aligned_distance(&i2, &x).unwrap();
        // grid search over φ as the independent oracle
        let grid = (0..10_000)
            .map(|s| {
                let phi = 2.0 * PI * s as f64 / 10_000.0;
                i2.frobenius_distance(&x.scale(C64::from_polar(1.0, phi)))
                    .unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        // tr(X†I) = 0 and ‖I‖² = ‖X‖² = 2, so d = √(2 + 2)
        assert!((d - 2.0).abs() < 1e-12);
        assert!((d - grid).abs() < 1e-9);
    }

    #[test]
    fn distance_rejects_mismatched_dims() {
        assert!(phase_aligned_distance(&ComplexMatrix::identity(2), &ComplexMatrix::identity(4)).is_err());
    }

    #[test]
    fn key_examples() {
        let z = standard::z();
        assert_eq!(canonical_key(&z), canonical_key(&z.scale(C64::new(-1.0, 0.0))));
        let t = standard::t();
        let t4 = t
            .multiply(&t)
            .unwrap()
            .multiply(&t)
            .unwrap()
            .multiply(&t)
            .unwrap();
        assert_eq!(canonical_key(&t4), canonical_key(&z));
        assert_ne!(canonical_key(&standard::h()), canonical_key(&t));
    }

    #[test]
    fn serde_layout() {
        let m = standard::s();
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["dim"], 2);
        assert_eq!(json["entries"][3], serde_json::json!([0.0, 1.0]));
        let back: ComplexMatrix = serde_json::from_value(json).unwrap();
        assert_eq!(back, m);
        let bad = serde_json::json!({"dim": 3, "entries": []});
        assert!(serde_json::from_value::<ComplexMatrix>(bad).is_err());
    }

    #[test]
    fn row_groups_cover_all_rows() {
        let g = row_groups(&[2, 0], 3);
        let mut sorted = g.clone();
        sorted.sort();
        assert_eq!(sorted, (0..8).collect::<Vec<_>>());
        // first group: others (qubit 1) = 0; local index a = (bit q2, bit q0)
        assert_eq!(&g[..4], &[0b000, 0b100, 0b001, 0b101]);
    }
}
