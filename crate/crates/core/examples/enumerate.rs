//! Best-first enumeration: circuits come out in decreasing prior probability
//! and unitaries already reached are pruned.

use gatecraft::circuit::render_text;
use gatecraft::enumerate::{enumerate, Control, EnumConfig};
use gatecraft::{canonical_key, ConnectivityConstraint, Library};
use std::collections::HashSet;

fn main() -> gatecraft::Result<()> {
    let lib = Library::g0();
    let cfg = EnumConfig::with_nodes(20_000);
    let mut shown = 0;
    let mut keys = HashSet::new();
    let report = enumerate(&lib, 2, &ConnectivityConstraint::Full, &cfg, |sc| {
        keys.insert(canonical_key(&sc.circuit.eval_unitary().unwrap()));
        if shown < 6 {
            println!("log_prob {:>8.4}  {} placements", sc.log_prob, sc.circuit.len());
            print!("{}", render_text(&sc.circuit));
            shown += 1;
        }
        Control::Continue
    })?;
    println!(
        "\nvisited {} nodes, emitted {} distinct unitaries ({} in the key set), pruned {}, stopped by {:?}",
        report.visited,
        report.emitted,
        keys.len(),
        report.pruned,
        report.stopped_by
    );

    // Without pruning the same budget reaches far fewer distinct unitaries.
    let mut raw = HashSet::new();
    let unpruned = EnumConfig { prune: false, ..cfg };
    enumerate(&lib, 2, &ConnectivityConstraint::Full, &unpruned, |sc| {
        raw.insert(canonical_key(&sc.circuit.eval_unitary().unwrap()));
        Control::Continue
    })?;
    println!("unpruned, same budget: {} distinct unitaries", raw.len());
    Ok(())
}
