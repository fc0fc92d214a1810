//! Synthesize a batch of targets at once and keep the top-k circuits of each.

use gatecraft::circuit::render_text;
use gatecraft::enumerate::{synthesize_batch, EnumConfig, Task};
use gatecraft::gates::standard;
use gatecraft::matrix::embed;
use gatecraft::{ConnectivityConstraint, Library, Program};

fn main() -> gatecraft::Result<()> {
    let tasks = vec![
        Task::new("swap", standard::swap()),
        Task::new("cz", standard::cz()),
        Task::new("s_on_1", embed(&standard::s(), &[1], 2)?),
        Task::new("ch", standard::ch()),
    ];
    let cfg = EnumConfig {
        k: 2,
        ..EnumConfig::with_nodes(300_000)
    };
    let out = synthesize_batch(&tasks, &Library::g0(), &ConnectivityConstraint::Full, &cfg)?;
    for (id, set) in &out.sets {
        println!("== {id}: {} solution(s)", set.len());
        for sc in set.circuits() {
            println!("log_prob {:.4}: {}", sc.log_prob, Program::from_circuit(&sc.circuit));
            print!("{}", render_text(&sc.circuit));
        }
    }
    println!("visited {} nodes", out.report.visited);
    Ok(())
}
