//! Circuits as lambda-calculus programs: parse, print, compose and expand.

use gatecraft::circuit::{render_text, Circuit};
use gatecraft::gates::{g0_gates, Gate};
use gatecraft::{parse_program, ConnectivityConstraint};

fn main() -> gatecraft::Result<()> {
    let mut gates = g0_gates();

    // `$0` is the circuit built so far, `$1..` are qubit parameters.
    let swap = parse_program(
        "(lambda (lambda (lambda (cnot (cnot (cnot $0 $1 $2) $2 $1) $1 $2))))",
        &gates,
    )?;
    println!("parsed:   {swap}");
    let body = swap.to_circuit()?;
    print!("{}", render_text(&body));

    // A learned gate is a named program; other programs may call it.
    gates.push(Gate::composite("f0", body)?);
    let rotate = parse_program(
        "(lambda (lambda (lambda (lambda (f0 (f0 $0 $1 $2) $2 $3)))))",
        &gates,
    )?;
    let c: Circuit = rotate.to_circuit()?;
    println!("\ncomposite: {rotate}");
    println!("expanded to {} elementary placements:", c.expand().len());
    print!("{}", render_text(&c.expand()));

    // Connectivity is judged on the expansion.
    for constraint in [ConnectivityConstraint::Full, ConnectivityConstraint::NearestNeighbor] {
        println!("valid under {constraint}: {}", c.validate(&constraint));
    }

    match parse_program("(lambda (lambda (frob $0 $1)))", &gates) {
        Ok(_) => unreachable!(),
        Err(e) => println!("\nunknown gate rejected: {e}"),
    }
    Ok(())
}
