//! One library-learning step on hand-made solutions: repeated sub-circuits
//! become new gates when they raise the score.

use gatecraft::circuit::{circuit_of, Circuit};
use gatecraft::enumerate::{ScoredCircuit, SolutionSet};
use gatecraft::learn::{em_fit_theta, extract_fragments, learn_step, LearnConfig};
use gatecraft::library::circuit_log_prob;
use gatecraft::{ConnectivityConstraint, Library};

fn main() -> gatecraft::Result<()> {
    let full = ConnectivityConstraint::Full;
    let lib = Library::g0();
    let g = lib.gates().to_vec();
    let (h, t, cx) = (&g[0], &g[1], &g[3]);

    // Every solution contains T;T (an S gate), several contain H;CNOT;H (CZ).
    let solutions: Vec<Circuit> = vec![
        circuit_of(2, &[(t, &[0]), (t, &[0])])?,
        circuit_of(2, &[(t, &[1]), (t, &[1]), (h, &[0])])?,
        circuit_of(2, &[(h, &[1]), (cx, &[0, 1]), (h, &[1]), (t, &[0]), (t, &[0])])?,
        circuit_of(2, &[(h, &[0]), (cx, &[1, 0]), (h, &[0]), (t, &[1]), (t, &[1])])?,
        circuit_of(2, &[(t, &[0]), (t, &[0]), (h, &[1]), (cx, &[0, 1]), (h, &[1])])?,
        circuit_of(2, &[(h, &[1]), (cx, &[0, 1]), (h, &[1])])?,
    ];
    let sets: Vec<SolutionSet> = solutions
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut s = SolutionSet::new(format!("task{i}"), 1);
            let log_prob = circuit_log_prob(&c, &lib, &full)?;
            s.insert(ScoredCircuit { circuit: c, log_prob });
            Ok(s)
        })
        .collect::<gatecraft::Result<_>>()?;

    println!("top fragments:");
    for f in extract_fragments(&lib, &sets, 4)?.iter().take(5) {
        println!("  support {:>2}  {}", f.support.len(), f.program());
    }

    let cfg = LearnConfig::default();
    let fit = em_fit_theta(&lib, &sets, 2, &full, &cfg)?;
    println!("\nEM objective per iteration: {:?}", fit.trace.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>());

    let out = learn_step(&lib, &sets, 2, &full, &cfg)?;
    println!("\nscore {:.3} -> {:.3}", out.score_before, out.score);
    for a in &out.adoptions {
        println!("adopted {} = {} (support {})", a.name, a.body, a.support);
    }
    print!("\n{}", out.library.describe());
    Ok(())
}
