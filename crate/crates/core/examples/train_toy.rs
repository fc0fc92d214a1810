//! A few training iterations on a small two-qubit task set, with
//! checkpoints in a temporary run directory.

use gatecraft::enumerate::{Budget, EnumConfig};
use gatecraft::taskgen::{generate_dataset, TaskGenConfig};
use gatecraft::train::{evaluate, TrainConfig, Trainer, Dataset, METRICS_FILE};
use gatecraft::Library;

fn main() -> gatecraft::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| gatecraft::Error::Config(e.to_string()))?;
    let gen = TaskGenConfig {
        n_qubits: 2,
        enumeration: EnumConfig {
            budget: Budget::Nodes(20_000),
            ..EnumConfig::default()
        },
        n_train: 40,
        seed: 3,
        out: dir.path().join("data"),
        ..TaskGenConfig::default()
    };
    generate_dataset(&gen, true)?;

    let cfg = TrainConfig {
        iterations: 6,
        batch_size: 10,
        n_qubits: 2,
        seed: 3,
        enumeration: EnumConfig::with_nodes(100_000),
        dataset: dir.path().join("data"),
        run_dir: dir.path().join("run"),
        ..TrainConfig::default()
    };
    let data = Dataset::load(&cfg.dataset)?;
    let test = data.test.clone();
    let mut trainer = Trainer::new(cfg.clone(), data, Library::g0(), Some(cfg.run_dir.clone()))?;
    while trainer.iteration() < cfg.iterations {
        let s = trainer.step()?;
        for a in &s.adoptions {
            println!("iteration {}: learned {} = {}", s.metrics.iteration, a.name, a.body);
        }
    }
    print!("\n{}", std::fs::read_to_string(cfg.run_dir.join(METRICS_FILE)).unwrap_or_default());

    let budget = EnumConfig::with_nodes(20_000);
    let before = evaluate(&Library::g0(), &test, &cfg.constraint, &budget)?;
    let after = evaluate(trainer.library(), &test, &cfg.constraint, &budget)?;
    println!(
        "\ntest solved at 20k nodes: elementary {:.3}, learned {:.3}",
        before.solved_fraction, after.solved_fraction
    );
    Ok(())
}
