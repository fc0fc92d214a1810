//! Textbook gate identities checked with the phase-aligned distance.

use gatecraft::circuit::circuit_of;
use gatecraft::gates::{g0_gates, standard, GateRef};
use gatecraft::matrix::EQUALITY_TOLERANCE;
use gatecraft::{phase_aligned_distance, ComplexMatrix};

fn main() -> gatecraft::Result<()> {
    let g = g0_gates();
    let (h, t, cx) = (&g[0], &g[1], &g[3]);
    let t0: (&GateRef, &[usize]) = (t, &[0]);
    let h0: (&GateRef, &[usize]) = (h, &[0]);

    let checks: Vec<(&str, ComplexMatrix, ComplexMatrix)> = vec![
        (
            "SWAP = CNOT(0,1) CNOT(1,0) CNOT(0,1)",
            circuit_of(2, &[(cx, &[0, 1]), (cx, &[1, 0]), (cx, &[0, 1])])?.eval_unitary()?,
            standard::swap(),
        ),
        ("S = T T", circuit_of(1, &[t0; 2])?.eval_unitary()?, standard::s()),
        ("Z = T^4", circuit_of(1, &[t0; 4])?.eval_unitary()?, standard::z()),
        ("I = T^8", circuit_of(1, &[t0; 8])?.eval_unitary()?, ComplexMatrix::identity(2)),
        ("I = H H", circuit_of(1, &[h0; 2])?.eval_unitary()?, ComplexMatrix::identity(2)),
        (
            "CZ = (I x H) CNOT (I x H)",
            circuit_of(2, &[(h, &[1]), (cx, &[0, 1]), (h, &[1])])?.eval_unitary()?,
            standard::cz(),
        ),
        (
            "X = H Z H, with Z = T^4",
            circuit_of(1, &[h0, t0, t0, t0, t0, h0])?.eval_unitary()?,
            standard::x(),
        ),
    ];

    for (name, lhs, rhs) in checks {
        let d = phase_aligned_distance(&lhs, &rhs)?;
        let verdict = if d <= EQUALITY_TOLERANCE { "ok" } else { "MISMATCH" };
        println!("{name:<34} d = {d:.2e}  {verdict}");
    }

    // T alone is not S: the distance is far from zero.
    let d = phase_aligned_distance(&standard::t(), &standard::s())?;
    println!("{:<34} d = {d:.4}", "T vs S");
    Ok(())
}
