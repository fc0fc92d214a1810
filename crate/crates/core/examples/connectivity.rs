//! Nearest-neighbor connectivity on three qubits. Every emitted circuit
//! stays on adjacent pairs. SWAP(0,2) needs eight adjacent CNOTs, out of
//! reach for the elementary set at this budget, but three placements of an
//! adjacent SWAP gate route it through the middle qubit.

use gatecraft::circuit::{circuit_of, render_text};
use gatecraft::enumerate::{enumerate, synthesize_batch, Control, EnumConfig, Task};
use gatecraft::gates::{standard, Gate};
use gatecraft::matrix::embed;
use gatecraft::{ConnectivityConstraint, Library, Program};

fn main() -> gatecraft::Result<()> {
    let nn = ConnectivityConstraint::NearestNeighbor;
    let g0 = Library::g0();

    let mut invalid = 0;
    let report = enumerate(&g0, 3, &nn, &EnumConfig::with_nodes(100_000), |sc| {
        if !sc.circuit.validate(&nn) {
            invalid += 1;
        }
        Control::Continue
    })?;
    println!("{} emissions, {invalid} violate the constraint", report.emitted);

    let task = Task::new("swap02", embed(&standard::swap(), &[0, 2], 3)?);
    let cfg = EnumConfig {
        k: 1,
        ..EnumConfig::with_nodes(500_000)
    };
    let out = synthesize_batch(std::slice::from_ref(&task), &g0, &nn, &cfg)?;
    println!("elementary set: solved = {}", !out.sets["swap02"].is_empty());

    let cx = &g0.gates()[3];
    let swap = Gate::composite("f0", circuit_of(2, &[(cx, &[0, 1]), (cx, &[1, 0]), (cx, &[0, 1])])?)?;
    let lib = g0.extended(swap)?;
    let out = synthesize_batch(&[task], &lib, &nn, &cfg)?;
    if let Some(sc) = out.sets["swap02"].best() {
        println!("with an adjacent SWAP gate: {}", Program::from_circuit(&sc.circuit));
        print!("{}", render_text(&sc.circuit.expand()));
        println!("valid under nearest-neighbor: {}", sc.circuit.validate(&nn));
    }
    Ok(())
}
