//! Build a task pool from the high-level gate set and split it uniformly over
//! gate counts.

use std::collections::BTreeMap;

use gatecraft::enumerate::{Budget, EnumConfig};
use gatecraft::taskgen::{generate_dataset, TaskGenConfig};

fn main() -> gatecraft::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| gatecraft::Error::Config(e.to_string()))?;
    let cfg = TaskGenConfig {
        n_qubits: 2,
        enumeration: EnumConfig {
            budget: Budget::Nodes(50_000),
            ..EnumConfig::default()
        },
        n_train: 60,
        seed: 7,
        out: dir.path().to_path_buf(),
        ..TaskGenConfig::default()
    };
    let (train, test) = generate_dataset(&cfg, true)?;

    let mut by_count: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in &train {
        by_count.entry(r.gate_count).or_default().0 += 1;
    }
    for r in &test {
        by_count.entry(r.gate_count).or_default().1 += 1;
    }
    println!("gates  train   test");
    for (g, (a, b)) in by_count {
        println!("{g:>5} {a:>6} {b:>6}");
    }
    for f in ["pool.jsonl", "train.jsonl", "test.jsonl"] {
        let len = std::fs::metadata(dir.path().join(f)).map(|m| m.len()).unwrap_or(0);
        println!("{f}: {len} bytes");
    }
    Ok(())
}
